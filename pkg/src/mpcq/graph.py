"""Model graph: node schema, document parser/serializer, validation.

The graph document is line-based text. A minimal example::

    version 1
    input 3 32 32
    output fc

    node conv1 conv2d inputs=input weight=conv1.weight stride=1 padding=1
    node act1 relu inputs=conv1
    node fc linear inputs=act1 weight=fc.weight bias=fc.bias

    pair conv1 conv2 low=2 high=6
    exempt stem bits=6

`input` is the reserved id of the graph input. `pair` and `exempt` lines are
optional overrides for quantization planning; bits omitted there fall back to
the run configuration.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (ChannelMismatchError, CycleError, GraphSyntaxError,
                     MissingTensorError, UnknownOpError)

INPUT_ID = "input"

OP_KINDS = ("conv2d", "linear", "bn", "relu", "relu6", "add", "concat",
            "avgpool", "maxpool", "flatten")
WEIGHTED_KINDS = ("conv2d", "linear")

# attribute name -> (parser, default); None default means required
_NODE_ATTRS = {
    "conv2d": {"weight": (str, None), "bias": (str, ""), "stride": (int, 1),
               "padding": (int, 0), "groups": (int, 1)},
    "linear": {"weight": (str, None), "bias": (str, "")},
    "bn": {"gamma": (str, None), "beta": (str, None), "mean": (str, None),
           "var": (str, None), "eps": (float, 1e-5)},
    "relu": {},
    "relu6": {},
    "add": {},
    "concat": {},
    "avgpool": {"kernel": (int, 0), "stride": (int, 0), "padding": (int, 0)},
    "maxpool": {"kernel": (int, None), "stride": (int, 0), "padding": (int, 0)},
    "flatten": {},
}


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    inputs: tuple[str, ...]
    attrs: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.attrs[name]
        except KeyError:
            raise AttributeError(name) from None


@dataclass(frozen=True)
class PairDirective:
    low: str
    high: str
    low_bits: int | None = None
    high_bits: int | None = None


@dataclass
class ModelGraph:
    nodes: list[Node]
    output: str
    input_shape: tuple[int, int, int]
    pairs: list[PairDirective] = field(default_factory=list)
    exempt: dict[str, int | None] = field(default_factory=dict)

    def __post_init__(self):
        self.by_id = {n.id: n for n in self.nodes}
        _validate_structure(self)

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        out[INPUT_ID] = []
        for n in self.nodes:
            for src in n.inputs:
                out[src].append(n.id)
        return out

    def topological_order(self) -> list[Node]:
        return _topological_order(self)

    def weighted_nodes(self) -> list[Node]:
        return [n for n in self.topological_order() if n.kind in WEIGHTED_KINDS]


def _validate_structure(g: ModelGraph) -> None:
    if len(g.by_id) != len(g.nodes):
        seen, dupes = set(), set()
        for n in g.nodes:
            (dupes if n.id in seen else seen).add(n.id)
        raise GraphSyntaxError(f"duplicate node ids: {sorted(dupes)}")
    if INPUT_ID in g.by_id:
        raise GraphSyntaxError(f"node id {INPUT_ID!r} is reserved for the graph input")
    for n in g.nodes:
        if n.kind not in OP_KINDS:
            raise UnknownOpError(f"node {n.id!r}: unknown op kind {n.kind!r}")
        if not n.inputs:
            raise GraphSyntaxError(f"node {n.id!r}: needs at least one input")
        if n.kind in ("add", "concat") and len(n.inputs) < 2:
            raise GraphSyntaxError(f"node {n.id!r}: {n.kind} needs >= 2 inputs")
        if n.kind not in ("add", "concat") and len(n.inputs) != 1:
            raise GraphSyntaxError(f"node {n.id!r}: {n.kind} takes exactly one input")
        for src in n.inputs:
            if src != INPUT_ID and src not in g.by_id:
                raise GraphSyntaxError(f"node {n.id!r}: unknown input {src!r}")
    if g.output not in g.by_id:
        raise GraphSyntaxError(f"output {g.output!r} is not a node id")
    if len(g.input_shape) != 3 or any(int(d) < 1 for d in g.input_shape):
        raise GraphSyntaxError(f"input shape must be three positive extents, got {g.input_shape}")
    for p in g.pairs:
        for nid in (p.low, p.high):
            if nid not in g.by_id:
                raise GraphSyntaxError(f"pair references unknown node {nid!r}")
    for nid in g.exempt:
        if nid not in g.by_id:
            raise GraphSyntaxError(f"exempt references unknown node {nid!r}")
    _topological_order(g)


def _topological_order(g: ModelGraph) -> list[Node]:
    indegree = {n.id: sum(1 for s in n.inputs if s != INPUT_ID) for n in g.nodes}
    ready = sorted(nid for nid, d in indegree.items() if d == 0)
    consumers = g.consumers()
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(g.by_id[nid])
        added = []
        for consumer in consumers[nid]:
            indegree[consumer] -= 1
            if indegree[consumer] == 0:
                added.append(consumer)
        # insertion keeps `ready` sorted so the order is reproducible
        for a in sorted(added):
            ready.append(a)
        ready.sort()
    if len(order) != len(g.nodes):
        stuck = sorted(nid for nid, d in indegree.items() if d > 0)
        raise CycleError(f"graph contains a cycle through nodes {stuck}")
    return order


def parse_graph(text: str) -> ModelGraph:
    """Parse a graph document; raises GraphSyntaxError with line numbers."""
    nodes: list[Node] = []
    pairs: list[PairDirective] = []
    exempt: dict[str, int | None] = {}
    output = None
    input_shape = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        head = fields[0]
        try:
            if head == "version":
                if fields[1] != "1":
                    raise GraphSyntaxError(f"line {lineno}: unsupported version {fields[1]}")
            elif head == "input":
                input_shape = tuple(int(v) for v in fields[1:4])
                if len(fields) != 4:
                    raise GraphSyntaxError(f"line {lineno}: input takes three extents (c h w)")
            elif head == "output":
                output = fields[1]
            elif head == "node":
                nodes.append(_parse_node(fields, lineno))
            elif head == "pair":
                kv = _parse_kv(fields[3:], lineno)
                pairs.append(PairDirective(
                    fields[1], fields[2],
                    low_bits=int(kv["low"]) if "low" in kv else None,
                    high_bits=int(kv["high"]) if "high" in kv else None))
            elif head == "exempt":
                kv = _parse_kv(fields[2:], lineno)
                exempt[fields[1]] = int(kv["bits"]) if "bits" in kv else None
            else:
                raise GraphSyntaxError(f"line {lineno}: unknown directive {head!r}")
        except (IndexError, ValueError) as e:
            raise GraphSyntaxError(f"line {lineno}: malformed {head!r} line ({e})") from e

    if output is None:
        raise GraphSyntaxError("document declares no output")
    if input_shape is None:
        raise GraphSyntaxError("document declares no input shape")
    return ModelGraph(nodes, output, input_shape, pairs, exempt)


def _parse_kv(fields, lineno) -> dict[str, str]:
    kv = {}
    for f in fields:
        if "=" not in f:
            raise GraphSyntaxError(f"line {lineno}: expected key=value, got {f!r}")
        k, v = f.split("=", 1)
        kv[k] = v
    return kv


def _parse_node(fields, lineno) -> Node:
    if len(fields) < 4:
        raise GraphSyntaxError(f"line {lineno}: node needs id, kind and inputs")
    _, nid, kind = fields[:3]
    if kind not in _NODE_ATTRS:
        raise UnknownOpError(f"line {lineno}: node {nid!r}: unknown op kind {kind!r}")
    kv = _parse_kv(fields[3:], lineno)
    if "inputs" not in kv:
        raise GraphSyntaxError(f"line {lineno}: node {nid!r}: missing inputs=")
    inputs = tuple(s for s in kv.pop("inputs").split(",") if s)
    attrs = {}
    for key, (conv, default) in _NODE_ATTRS[kind].items():
        if key in kv:
            attrs[key] = conv(kv.pop(key))
        elif default is None:
            raise GraphSyntaxError(f"line {lineno}: node {nid!r}: {kind} requires {key}=")
        else:
            attrs[key] = default
    if kv:
        raise GraphSyntaxError(
            f"line {lineno}: node {nid!r}: unknown attributes {sorted(kv)} for {kind}")
    if kind in ("avgpool", "maxpool") and attrs["stride"] == 0:
        attrs["stride"] = attrs["kernel"]
    return Node(nid, kind, inputs, attrs)


def serialize_graph(g: ModelGraph) -> str:
    """Emit a document that parses back to a structurally identical graph."""
    lines = ["version 1",
             "input " + " ".join(str(d) for d in g.input_shape),
             f"output {g.output}", ""]
    for n in g.nodes:
        parts = [f"node {n.id} {n.kind} inputs={','.join(n.inputs)}"]
        for key, (conv, default) in _NODE_ATTRS[n.kind].items():
            val = n.attrs.get(key, default)
            if val != default and val != "":
                parts.append(f"{key}={val}")
        lines.append(" ".join(parts))
    if g.pairs:
        lines.append("")
        for p in g.pairs:
            extra = ""
            if p.low_bits is not None:
                extra += f" low={p.low_bits}"
            if p.high_bits is not None:
                extra += f" high={p.high_bits}"
            lines.append(f"pair {p.low} {p.high}{extra}")
    if g.exempt:
        lines.append("")
        for nid, bits in g.exempt.items():
            lines.append(f"exempt {nid}" + (f" bits={bits}" if bits is not None else ""))
    return "\n".join(lines) + "\n"


def effective_in_channels(weight: np.ndarray, groups: int = 1) -> int:
    """Input channels a layer consumes (axis 1 of the weight times groups)."""
    return int(weight.shape[1]) * groups


def check_channels(g: ModelGraph, weights: dict[str, np.ndarray]) -> dict[str, int]:
    """Walk the graph inferring channel counts; raise on any inconsistency.

    Returns node id -> output channel count (-1 after flatten, where feature
    counts replace channels).
    """
    channels: dict[str, int] = {INPUT_ID: int(g.input_shape[0])}

    def tensor(name, node):
        if name not in weights:
            raise MissingTensorError(f"node {node.id!r}: tensor {name!r} not in archive")
        return weights[name]

    for n in g.topological_order():
        feeding = [channels[s] for s in n.inputs]
        if n.kind == "conv2d":
            w = tensor(n.attrs["weight"], n)
            expected = effective_in_channels(w, n.attrs["groups"])
            if feeding[0] != expected:
                raise ChannelMismatchError(
                    f"node {n.id!r}: consumes {feeding[0]} channels but weight "
                    f"{n.attrs['weight']!r} expects {expected}")
            channels[n.id] = int(w.shape[0])
        elif n.kind == "linear":
            w = tensor(n.attrs["weight"], n)
            if feeding[0] not in (-1, int(w.shape[1])):
                raise ChannelMismatchError(
                    f"node {n.id!r}: consumes {feeding[0]} features but weight "
                    f"{n.attrs['weight']!r} expects {int(w.shape[1])}")
            channels[n.id] = int(w.shape[0])
        elif n.kind == "bn":
            glen = len(tensor(n.attrs["gamma"], n))
            if feeding[0] != glen:
                raise ChannelMismatchError(
                    f"node {n.id!r}: consumes {feeding[0]} channels but batch-norm "
                    f"vectors have {glen}")
            channels[n.id] = feeding[0]
        elif n.kind == "add":
            if len(set(feeding)) != 1:
                raise ChannelMismatchError(
                    f"node {n.id!r}: add inputs disagree on channels: {feeding}")
            channels[n.id] = feeding[0]
        elif n.kind == "concat":
            channels[n.id] = sum(feeding)
        elif n.kind == "flatten":
            channels[n.id] = -1
        else:
            channels[n.id] = feeding[0]
    return channels
