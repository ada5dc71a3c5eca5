"""Bit-width planning: pair discovery over the graph and size accounting.

A plan assigns every weighted layer exactly one role: the low-bit member of
a pair, the high-bit member that compensates it, or exempt (quantized plain
at its own bit-width, or kept float at 32).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, PairingError
from .graph import INPUT_ID, ModelGraph, Node, effective_in_channels

# ops a pair may pass through between its two weighted layers
_CHAIN_KINDS = ("bn", "relu", "relu6")


@dataclass(frozen=True)
class PairAssignment:
    low: str
    high: str
    low_bits: int
    high_bits: int


@dataclass(frozen=True)
class QuantPlan:
    pairs: tuple[PairAssignment, ...]
    exempt: dict[str, int] = field(default_factory=dict)

    def role_of(self, node_id: str):
        """('low'|'high'|'exempt', bits) for a covered layer."""
        for p in self.pairs:
            if p.low == node_id:
                return "low", p.low_bits
            if p.high == node_id:
                return "high", p.high_bits
        if node_id in self.exempt:
            return "exempt", self.exempt[node_id]
        raise CoverageError(f"layer {node_id!r} is not covered by the plan")

    def covered(self) -> set[str]:
        ids = set(self.exempt)
        for p in self.pairs:
            ids.add(p.low)
            ids.add(p.high)
        return ids


def _chained_successor(g: ModelGraph, start: str,
                       consumers: dict[str, list[str]]) -> str | None:
    """Next weighted node reachable through an exclusive bn/relu chain."""
    cur = start
    while True:
        nxt = consumers[cur]
        if len(nxt) != 1:
            return None
        node = g.by_id[nxt[0]]
        if node.kind in ("conv2d", "linear"):
            return node.id
        if node.kind not in _CHAIN_KINDS:
            return None
        cur = node.id


def _pair_channels_ok(g: ModelGraph, weights, low: str, high: str) -> None:
    wl = weights.get(g.by_id[low].weight)
    wh = weights.get(g.by_id[high].weight)
    if wl is None or wh is None:
        return
    emitted = int(np.asarray(wl).shape[0])
    consumed = effective_in_channels(
        np.asarray(wh), g.by_id[high].attrs.get("groups", 1))
    if emitted != consumed:
        raise PairingError(
            f"pair ({low!r}, {high!r}): {low!r} emits {emitted} channels but "
            f"{high!r} consumes {consumed}")


def discover_pairs(g: ModelGraph, weights=None, low_bits: int = 2,
                   high_bits: int = 6) -> QuantPlan:
    """Assign every weighted layer to a pair or exempt it.

    Weighted layers joined by an exclusive bn/relu chain become (low, high)
    pairs, taken greedily in topological order. Layers with no eligible
    successor (stem convolutions feeding a pool, shortcut branches feeding
    an add, the final classifier) fall out as exempt at the high bit-width.
    Explicit pair/exempt directives in the document claim their layers first
    and override discovery.
    """
    if low_bits > high_bits:
        raise PairingError(
            f"low bit-width {low_bits} exceeds high bit-width {high_bits}")
    weighted = [n.id for n in g.weighted_nodes()]
    weighted_set = set(weighted)
    used: set[str] = set()
    pairs: list[PairAssignment] = []
    exempt: dict[str, int] = {}

    for d in g.pairs:
        if d.low == d.high:
            raise PairingError(f"pair directive pairs {d.low!r} with itself")
        for nid in (d.low, d.high):
            if nid not in weighted_set:
                raise PairingError(f"pair directive names non-weighted layer {nid!r}")
            if nid in used:
                raise PairingError(f"layer {nid!r} claimed by two directives")
            used.add(nid)
        lb = d.low_bits if d.low_bits is not None else low_bits
        hb = d.high_bits if d.high_bits is not None else high_bits
        if lb > hb:
            raise PairingError(
                f"pair ({d.low!r}, {d.high!r}): low bits {lb} > high bits {hb}")
        if weights is not None:
            _pair_channels_ok(g, weights, d.low, d.high)
        pairs.append(PairAssignment(d.low, d.high, lb, hb))

    for nid, bits in g.exempt.items():
        if nid in used:
            raise PairingError(f"layer {nid!r} claimed by two directives")
        used.add(nid)
        exempt[nid] = bits if bits is not None else high_bits

    consumers = g.consumers()
    for nid in weighted:
        if nid in used:
            continue
        succ = _chained_successor(g, nid, consumers)
        if succ is not None and succ not in used:
            used.add(nid)
            used.add(succ)
            pairs.append(PairAssignment(nid, succ, low_bits, high_bits))
        else:
            used.add(nid)
            exempt[nid] = high_bits

    return QuantPlan(tuple(pairs), exempt)


@dataclass(frozen=True)
class LayerSize:
    node: str
    role: str
    bits: int
    params: int
    code_bytes: float
    overhead_bytes: float


@dataclass(frozen=True)
class SizeReport:
    layers: tuple[LayerSize, ...]
    other_bytes: float
    total_bytes: float

    @property
    def megabytes(self) -> float:
        return self.total_bytes / 1e6

    @property
    def mebibytes(self) -> float:
        return self.total_bytes / float(1 << 20)


def _layer_size(node: Node, role: str, bits: int, params: int,
                channels: int) -> LayerSize:
    if bits == 32:
        return LayerSize(node.id, role, 32, params, params * 4.0, 0.0)
    code_bytes = params * bits / 8.0
    if role != "high" and bits == 2:
        overhead = 8.0  # ternary stores alpha and delta
    else:
        overhead = 4.0  # uniform scale (pair high layers are always uniform)
    if role == "high":
        overhead += 4.0 * channels  # compensation vector, one f32 per channel
    return LayerSize(node.id, role, bits, params, code_bytes, overhead)


def size_report(g: ModelGraph, plan: QuantPlan,
                weights: dict[str, np.ndarray]) -> SizeReport:
    """Byte accounting for the planned model.

    Weighted layers contribute params x bits/8 plus their scale/coefficient
    overhead; everything else the graph references (biases, bn vectors)
    stays float32.
    """
    weighted = {n.id for n in g.weighted_nodes()}
    missing = weighted - plan.covered()
    if missing:
        raise CoverageError(f"plan does not cover layers {sorted(missing)}")
    stray = plan.covered() - weighted
    if stray:
        raise CoverageError(f"plan covers unknown layers {sorted(stray)}")

    layers = []
    counted: set[str] = set()
    other = 0.0
    for n in g.topological_order():
        if n.kind in ("conv2d", "linear"):
            name = n.weight
            if name not in weights:
                raise CoverageError(f"layer {n.id!r}: tensor {name!r} missing")
            w = weights[name]
            counted.add(name)
            role, bits = plan.role_of(n.id)
            channels = effective_in_channels(w, n.attrs.get("groups", 1))
            layers.append(_layer_size(n, role, bits, int(w.size), channels))
        tensor_attrs = [v for k, v in n.attrs.items()
                        if isinstance(v, str) and v and k != "weight"]
        for name in tensor_attrs:
            if name in weights and name not in counted:
                counted.add(name)
                other += float(weights[name].size) * 4.0

    total = other + sum(l.code_bytes + l.overhead_bytes for l in layers)
    return SizeReport(tuple(layers), other, total)
