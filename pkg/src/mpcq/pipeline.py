"""End-to-end quantization pipeline: plan, solve, emit archive + report.

The quantize path reads the weight archive and the graph document, nothing
else. Probe data exists only on the evaluation side (see metrics).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .archive import scalar
from .compensation import LayerPair, apply_compensation, solve_coefficients
from .errors import PairingError
from .graph import ModelGraph, Node
from .plan import QuantPlan, discover_pairs
from .quantizers import (CompensatedQuant, TernaryQuant, UniformQuant,
                         dequantize, ternary_quantize, uniform_quantize)


@dataclass
class RunConfig:
    """Validated knobs shared by the CLI commands."""

    model: str | None = None
    graph: str | None = None
    out: str | None = None
    low_bits: int = 2
    high_bits: int = 6
    lambda1: float = 0.5
    lambda2: float = 0.0
    seed: int = 0
    probes: int = 64
    jobs: int | None = None

    def __post_init__(self):
        for name in ("low_bits", "high_bits"):
            bits = getattr(self, name)
            if not 1 <= bits <= 8:
                raise ValueError(f"{name} must be in [1, 8], got {bits}")
        if self.low_bits > self.high_bits:
            raise ValueError(
                f"low_bits {self.low_bits} exceeds high_bits {self.high_bits}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if self.probes < 1:
            raise ValueError(f"probe count must be >= 1, got {self.probes}")
        if self.jobs is None:
            self.jobs = os.cpu_count() or 1
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")


def _conv_attrs(node: Node) -> tuple[int, int, int]:
    if node.kind == "conv2d":
        return node.stride, node.padding, node.groups
    return 1, 0, 1


def build_layer_pair(g: ModelGraph, weights, low_id: str, high_id: str,
                     low_bits: int, high_bits: int) -> LayerPair:
    """Assemble a LayerPair from two weighted graph nodes."""
    low_node, high_node = g.by_id[low_id], g.by_id[high_id]
    ls, lp, lg = _conv_attrs(low_node)
    hs, hp, hg = _conv_attrs(high_node)
    try:
        return LayerPair(weights[low_node.weight], weights[high_node.weight],
                         low_bits=low_bits, high_bits=high_bits,
                         low_stride=ls, low_padding=lp, low_groups=lg,
                         high_stride=hs, high_padding=hp, high_groups=hg)
    except PairingError as e:
        raise PairingError(f"pair ({low_id!r}, {high_id!r}): {e}") from e


@dataclass(frozen=True)
class PairRecord:
    """Per-pair report row emitted by quantize_model."""

    low: str
    high: str
    low_bits: int
    high_bits: int
    gamma_sq: float
    theta_sq: float
    objective_before: float
    objective_after: float


def _quant_tensors(name: str, q) -> dict[str, np.ndarray]:
    """Archive entries for one quantized layer, keyed off its tensor name."""
    out = {f"{name}.codes": q.codes}
    if isinstance(q, TernaryQuant):
        out[f"{name}.alpha"] = scalar(q.alpha)
        out[f"{name}.delta"] = scalar(q.delta)
        out[f"{name}.bits"] = np.asarray([q.bits], dtype=np.int32)
        return out
    out[f"{name}.scale"] = scalar(q.scale)
    out[f"{name}.bits"] = np.asarray([q.bits], dtype=np.int32)
    if isinstance(q, CompensatedQuant):
        out[f"{name}.coeff"] = np.asarray(q.coeff, dtype=np.float32)
    return out


def quantize_model(g: ModelGraph, weights, config: RunConfig,
                   compensate: bool = True,
                   plan: QuantPlan | None = None):
    """Quantize every weighted layer per the plan.

    Returns (tensors, records): the output archive content (original
    non-weight tensors plus codes/scales/coefficients) and one record per
    pair. With compensate=False the coefficients are all ones, which is
    plain mixed-precision quantization.
    """
    if plan is None:
        plan = discover_pairs(g, weights, config.low_bits, config.high_bits)
    out = dict(weights)

    def solve_pair(assignment):
        pair = build_layer_pair(g, weights, assignment.low, assignment.high,
                                assignment.low_bits, assignment.high_bits)
        if compensate:
            result = solve_coefficients(pair, config.lambda1, config.lambda2)
            c = result.c
            record = PairRecord(
                assignment.low, assignment.high,
                assignment.low_bits, assignment.high_bits,
                gamma_sq=float(result.gamma_sq.sum()),
                theta_sq=float(result.theta_sq.sum()),
                objective_before=result.objective_before,
                objective_after=result.objective_after)
        else:
            c = np.ones(pair.channel_count)
            record = PairRecord(assignment.low, assignment.high,
                                assignment.low_bits, assignment.high_bits,
                                gamma_sq=float("nan"), theta_sq=float("nan"),
                                objective_before=float("nan"),
                                objective_after=float("nan"))
        tensors = {}
        low_name = g.by_id[assignment.low].weight
        tensors.update(_quant_tensors(low_name, pair.low_quant))
        high_name = g.by_id[assignment.high].weight
        tensors.update(_quant_tensors(high_name, apply_compensation(pair, c)))
        return record, tensors, (low_name, high_name)

    def solve_exempt(item):
        nid, bits = item
        name = g.by_id[nid].weight
        if bits == 32:
            return None, {}, ()
        q = (ternary_quantize(weights[name]) if bits == 2
             else uniform_quantize(weights[name], bits))
        return None, _quant_tensors(name, q), (name,)

    tasks = [(solve_pair, a) for a in plan.pairs]
    tasks += [(solve_exempt, item) for item in sorted(plan.exempt.items())]
    if config.jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(lambda t: t[0](t[1]), tasks))
    else:
        results = [fn(arg) for fn, arg in tasks]

    records = []
    for record, tensors, replaced in results:
        if record is not None:
            records.append(record)
        for name in replaced:
            out.pop(name, None)
        out.update(tensors)
    return out, records


def materialize_weights(g: ModelGraph, tensors) -> dict[str, np.ndarray]:
    """Resolve every weighted node back to float weights for execution.

    Plain float tensors pass through; quantized layers are rebuilt from
    their codes, scales and (when present) compensation coefficients.
    """
    out = dict(tensors)
    for node in g.weighted_nodes():
        name = node.weight
        if name in out:
            continue
        codes = tensors[f"{name}.codes"]
        bits = int(tensors[f"{name}.bits"][0])
        if f"{name}.alpha" in tensors:
            q = TernaryQuant(codes, float(tensors[f"{name}.alpha"][0]),
                             float(tensors[f"{name}.delta"][0]))
        elif f"{name}.coeff" in tensors:
            groups = node.attrs.get("groups", 1)
            q = CompensatedQuant(codes, bits,
                                 float(tensors[f"{name}.scale"][0]),
                                 tensors[f"{name}.coeff"], groups)
        else:
            q = UniformQuant(codes, bits, float(tensors[f"{name}.scale"][0]))
        out[name] = dequantize(q)
    return out
