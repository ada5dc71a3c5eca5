"""Model comparison metrics: per-layer MSE, top-1 accuracy, synthetic probes.

Probes exist for validation and reporting only; nothing here feeds back
into the quantization path.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GraphError
from .executor import execute_graph
from .graph import ModelGraph


@dataclass(frozen=True)
class MetricReport:
    per_layer_mse: dict[str, float]
    final_mse: float
    top1: float | None
    probe_count: int
    seed: int | None = None


def gaussian_probes(shape, count: int, seed: int | None = 0) -> np.ndarray:
    """Batch of i.i.d. standard-normal tensors, deterministic per seed."""
    if count < 1:
        raise ValueError(f"probe count must be >= 1, got {count}")
    shape = tuple(int(d) for d in shape)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, *shape), dtype=np.float32)


def _check_same_topology(a: ModelGraph, b: ModelGraph) -> None:
    sig_a = [(n.id, n.kind, n.inputs) for n in a.topological_order()]
    sig_b = [(n.id, n.kind, n.inputs) for n in b.topological_order()]
    if sig_a != sig_b:
        raise GraphError("models have different topologies; cannot compare")


def _argmax_rows(out: np.ndarray) -> np.ndarray:
    # ties resolve to the lowest class index (np.argmax's first-hit rule)
    return np.argmax(out.reshape(out.shape[0], -1), axis=1)


def compare_models(fp_graph: ModelGraph, fp_weights, q_weights, probes,
                   labels=None, q_graph: ModelGraph | None = None,
                   seed: int | None = None, jobs: int = 1,
                   chunk: int = 32) -> MetricReport:
    """Per-layer and final MSE between two models, plus optional top-1.

    Both models run on the same probes; the quantized model's argmax is
    scored against the labels when given. The graphs must share topology
    (same ids, kinds and edges); weights are what differ.
    """
    if q_graph is None:
        q_graph = fp_graph
    else:
        _check_same_topology(fp_graph, q_graph)
    x = np.asarray(probes, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    n = x.shape[0]
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        if labels.shape[0] != n:
            raise ValueError(
                f"{labels.shape[0]} labels for {n} probes")

    node_ids = [node.id for node in fp_graph.topological_order()]
    chunks = [x[i:i + chunk] for i in range(0, n, chunk)]

    def run(batch):
        fp_out = execute_graph(fp_graph, fp_weights, batch)
        q_out = execute_graph(q_graph, q_weights, batch)
        sums = {}
        for nid in node_ids:
            d = fp_out[nid].astype(np.float64) - q_out[nid].astype(np.float64)
            sums[nid] = (float((d * d).sum()), d.size)
        return sums, _argmax_rows(q_out[q_graph.output])

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(b) for b in chunks]

    per_layer = {}
    for nid in node_ids:
        total = sum(r[0][nid][0] for r in results)
        count = sum(r[0][nid][1] for r in results)
        per_layer[nid] = total / count
    top1 = None
    if labels is not None:
        argmax = np.concatenate([r[1] for r in results])
        top1 = float((argmax == labels).mean())
    return MetricReport(per_layer_mse=per_layer,
                        final_mse=per_layer[fp_graph.output],
                        top1=top1, probe_count=n, seed=seed)
