"""Topological-order evaluation of a model graph over a weight map."""

import numpy as np

from . import ops
from .errors import MissingTensorError, ShapeError
from .graph import INPUT_ID, ModelGraph


def _weight(weights, name: str, node_id: str) -> np.ndarray:
    try:
        return weights[name]
    except KeyError:
        raise MissingTensorError(
            f"node {node_id!r}: tensor {name!r} not in weight map") from None


def execute_graph(g: ModelGraph, weights: dict[str, np.ndarray],
                  x: np.ndarray) -> dict[str, np.ndarray]:
    """Evaluate every node; returns a map of node id -> output (includes `input`).

    Accepts a single CHW input or an NCHW batch; outputs match the input arity.
    """
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"graph input must be CHW or NCHW, got shape {x.shape}")
    if x.shape[1:] != tuple(g.input_shape):
        raise ShapeError(
            f"graph input shape {x.shape[1:]} != declared {tuple(g.input_shape)}")

    outs: dict[str, np.ndarray] = {INPUT_ID: np.ascontiguousarray(x, dtype=np.float32)}
    for n in g.topological_order():
        args = [outs[s] for s in n.inputs]
        a = n.attrs
        if n.kind == "conv2d":
            y = ops.conv2d_batch(_weight(weights, a["weight"], n.id), args[0],
                                 a["stride"], a["padding"], a["groups"])
            if a["bias"]:
                y = y + _weight(weights, a["bias"], n.id).reshape(1, -1, 1, 1)
        elif n.kind == "linear":
            bias = _weight(weights, a["bias"], n.id) if a["bias"] else None
            y = ops.linear(_weight(weights, a["weight"], n.id), args[0], bias)
        elif n.kind == "bn":
            p = ops.BatchNormParams(
                _weight(weights, a["gamma"], n.id), _weight(weights, a["beta"], n.id),
                _weight(weights, a["mean"], n.id), _weight(weights, a["var"], n.id),
                a["eps"])
            y = ops.batch_norm(args[0], p)
        elif n.kind == "relu":
            y = ops.relu(args[0])
        elif n.kind == "relu6":
            y = ops.relu6(args[0])
        elif n.kind == "add":
            y = ops.add(*args)
        elif n.kind == "concat":
            y = ops.concat(*args)
        elif n.kind == "avgpool":
            y = ops.avg_pool(args[0], a["kernel"], a["stride"] or None, a["padding"])
        elif n.kind == "maxpool":
            y = ops.max_pool(args[0], a["kernel"], a["stride"] or None, a["padding"])
        elif n.kind == "flatten":
            y = ops.flatten(args[0])
        else:  # unreachable; parse validates kinds
            raise AssertionError(n.kind)
        y.flags.writeable = False
        outs[n.id] = y

    if single:
        outs = {k: v[0] for k, v in outs.items()}
    return outs


def final_output(g: ModelGraph, weights, x) -> np.ndarray:
    return execute_graph(g, weights, x)[g.output]
