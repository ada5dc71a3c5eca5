"""Lift a torch module onto the ten-op graph vocabulary.

torch.fx gives the flat call sequence; shape propagation supplies the
spatial sizes needed to turn adaptive pools into fixed-kernel ones. Only
constructs the graph format can express are accepted, everything else
raises UnsupportedLayerError naming the offending op. Eval-mode no-ops
(dropout, identity, adaptive pools that keep the spatial size) collapse
into plain edges.
"""

import operator
import re

import numpy as np
import torch
import torch.nn.functional as F
from torch import fx, nn
from torch.fx.passes.shape_prop import ShapeProp

from .graphdoc import GraphNode

INPUT_ID = "input"


class UnsupportedLayerError(ValueError):
    """Model uses an operation the graph format cannot express."""


def _single(value, what: str) -> int:
    """Collapse an int-or-pair torch argument, rejecting asymmetry."""
    if isinstance(value, (tuple, list)):
        if len(value) != 2 or value[0] != value[1]:
            raise UnsupportedLayerError(f"non-square {what} {tuple(value)!r}")
        value = value[0]
    return int(value)


def _array(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float32, copy=False)


def _sanitize(name: str) -> str:
    out = re.sub(r"\W", "_", name)
    return out if out != INPUT_ID else "input_0"


class _Tracer:
    def __init__(self, gm: fx.GraphModule):
        self.gm = gm
        self.nodes: list[GraphNode] = []
        self.tensors: dict[str, np.ndarray] = {}
        self.layer_map: dict[str, str] = {}
        self.alias: dict[str, str] = {}  # fx value name -> emitted node id
        self.output_id: str | None = None

    def src(self, arg) -> str:
        if not isinstance(arg, fx.Node):
            raise UnsupportedLayerError(f"non-tensor operand {arg!r}")
        return self.alias[arg.name]

    @staticmethod
    def in_hw(node: fx.Node) -> tuple[int, int]:
        arg = node.args[0]
        meta = arg.meta.get("tensor_meta")
        if meta is None or len(meta.shape) != 4:
            raise UnsupportedLayerError(
                f"{node.name}: pooling input is not a NCHW feature map")
        return int(meta.shape[2]), int(meta.shape[3])

    def emit(self, node: fx.Node, kind: str, inputs: list[str],
             attrs: dict[str, str] | None = None) -> str:
        nid = _sanitize(node.name)
        self.nodes.append(GraphNode(nid, kind, inputs, attrs or {}))
        return nid

    def run(self) -> None:
        for node in self.gm.graph.nodes:
            if node.op == "placeholder":
                self.alias[node.name] = INPUT_ID
            elif node.op == "output":
                self.output_id = self.src(node.args[0])
            elif node.op == "call_module":
                mod = self.gm.get_submodule(node.target)
                self.alias[node.name] = self.module(node, mod)
            elif node.op == "call_function":
                self.alias[node.name] = self.function(node)
            else:
                raise UnsupportedLayerError(
                    f"cannot export {node.op} {node.target!r}")
        if self.output_id is None or self.output_id == INPUT_ID:
            raise UnsupportedLayerError("model output is not a traced op")

    # module ops

    def module(self, node: fx.Node, mod: nn.Module) -> str:
        x = self.src(node.args[0])
        if isinstance(mod, nn.Conv2d):
            return self.conv(node, mod, x)
        if isinstance(mod, nn.BatchNorm2d):
            return self.bn(node, mod, x)
        if isinstance(mod, nn.Linear):
            nid = _sanitize(node.name)
            attrs = {"weight": f"{nid}.w"}
            self.tensors[attrs["weight"]] = _array(mod.weight)
            if mod.bias is not None:
                attrs["bias"] = f"{nid}.b"
                self.tensors[attrs["bias"]] = _array(mod.bias)
            self.layer_map[str(node.target)] = attrs["weight"]
            return self.emit(node, "linear", [x], attrs)
        if isinstance(mod, nn.ReLU):
            return self.emit(node, "relu", [x])
        if isinstance(mod, nn.ReLU6):
            return self.emit(node, "relu6", [x])
        if isinstance(mod, nn.MaxPool2d):
            return self.emit(node, "maxpool", [x],
                             self.pool_attrs(mod, required_kernel=True))
        if isinstance(mod, nn.AvgPool2d):
            if _single(mod.padding, "padding"):
                raise UnsupportedLayerError(
                    f"{node.target}: padded average pooling is not supported")
            return self.emit(node, "avgpool", [x],
                             self.pool_attrs(mod, required_kernel=True))
        if isinstance(mod, nn.AdaptiveAvgPool2d):
            return self.adaptive(node, mod.output_size, x)
        if isinstance(mod, (nn.Dropout, nn.Dropout2d, nn.Identity)):
            return x  # inference no-op, collapse the edge
        raise UnsupportedLayerError(
            f"module {type(mod).__name__} at {node.target!r} has no graph equivalent")

    def conv(self, node: fx.Node, mod: nn.Conv2d, x: str) -> str:
        if _single(mod.dilation, "dilation") != 1:
            raise UnsupportedLayerError(f"{node.target}: dilated convolution")
        if mod.padding_mode != "zeros":
            raise UnsupportedLayerError(
                f"{node.target}: padding mode {mod.padding_mode!r}")
        nid = _sanitize(node.name)
        attrs = {"weight": f"{nid}.w"}
        self.tensors[attrs["weight"]] = _array(mod.weight)
        if mod.bias is not None:
            attrs["bias"] = f"{nid}.b"
            self.tensors[attrs["bias"]] = _array(mod.bias)
        stride = _single(mod.stride, "stride")
        padding = _single(mod.padding, "padding")
        if stride != 1:
            attrs["stride"] = str(stride)
        if padding:
            attrs["padding"] = str(padding)
        if mod.groups != 1:
            attrs["groups"] = str(mod.groups)
        self.layer_map[str(node.target)] = attrs["weight"]
        return self.emit(node, "conv2d", [x], attrs)

    def bn(self, node: fx.Node, mod: nn.BatchNorm2d, x: str) -> str:
        if not mod.affine or not mod.track_running_stats:
            raise UnsupportedLayerError(
                f"{node.target}: batch norm without affine/running stats")
        nid = _sanitize(node.name)
        attrs = {"gamma": f"{nid}.g", "beta": f"{nid}.b",
                 "mean": f"{nid}.m", "var": f"{nid}.v"}
        self.tensors[attrs["gamma"]] = _array(mod.weight)
        self.tensors[attrs["beta"]] = _array(mod.bias)
        self.tensors[attrs["mean"]] = _array(mod.running_mean)
        self.tensors[attrs["var"]] = _array(mod.running_var)
        if abs(mod.eps - 1e-5) > 0:
            attrs["eps"] = repr(float(mod.eps))
        self.layer_map[str(node.target)] = attrs["gamma"]
        return self.emit(node, "bn", [x], attrs)

    def pool_attrs(self, mod, required_kernel: bool) -> dict[str, str]:
        kernel = _single(mod.kernel_size, "kernel")
        stride = _single(mod.stride if mod.stride is not None else kernel, "stride")
        padding = _single(mod.padding, "padding")
        if getattr(mod, "ceil_mode", False):
            raise UnsupportedLayerError("ceil-mode pooling is not supported")
        if _single(getattr(mod, "dilation", 1), "dilation") != 1:
            raise UnsupportedLayerError("dilated pooling is not supported")
        attrs = {}
        if required_kernel:
            attrs["kernel"] = str(kernel)
        if stride != kernel:
            attrs["stride"] = str(stride)
        if padding:
            attrs["padding"] = str(padding)
        return attrs

    def adaptive(self, node: fx.Node, output_size, x: str) -> str:
        h, w = self.in_hw(node)
        if isinstance(output_size, int):
            output_size = (output_size, output_size)
        oh = h if output_size[0] is None else int(output_size[0])
        ow = w if output_size[1] is None else int(output_size[1])
        if (oh, ow) == (1, 1):
            return self.emit(node, "avgpool", [x])  # kernel=0 means global
        if (oh, ow) == (h, w):
            return x  # same-size adaptive pool is the identity
        if oh <= 0 or ow <= 0 or h % oh or w % ow or h // oh != w // ow:
            raise UnsupportedLayerError(
                f"{node.name}: adaptive pool {h}x{w} -> {oh}x{ow} has no "
                "fixed-kernel equivalent")
        return self.emit(node, "avgpool", [x], {"kernel": str(h // oh)})

    # functional ops

    def function(self, node: fx.Node) -> str:
        fn = node.target
        if fn in (operator.add, operator.iadd, torch.add):
            if len(node.args) != 2 or node.kwargs:
                raise UnsupportedLayerError(f"{node.name}: non-plain add")
            return self.emit(node, "add", [self.src(a) for a in node.args])
        if fn is torch.cat:
            seq = node.args[0]
            dim = node.kwargs.get("dim", node.args[1] if len(node.args) > 1 else 0)
            if dim != 1:
                raise UnsupportedLayerError(
                    f"{node.name}: concatenation along dim {dim}")
            srcs = [self.src(a) for a in seq]
            if len(srcs) == 1:
                return srcs[0]  # degenerate one-tensor concat
            return self.emit(node, "concat", srcs)
        if fn is torch.flatten:
            start = node.kwargs.get("start_dim",
                                    node.args[1] if len(node.args) > 1 else 0)
            end = node.kwargs.get("end_dim",
                                  node.args[2] if len(node.args) > 2 else -1)
            if (start, end) != (1, -1):
                raise UnsupportedLayerError(
                    f"{node.name}: flatten({start}, {end}) is not NCHW -> NF")
            return self.emit(node, "flatten", [self.src(node.args[0])])
        if fn in (F.relu, torch.relu, torch.relu_):
            return self.emit(node, "relu", [self.src(node.args[0])])
        if fn is F.relu6:
            return self.emit(node, "relu6", [self.src(node.args[0])])
        if fn is F.adaptive_avg_pool2d:
            return self.adaptive(node, node.args[1], self.src(node.args[0]))
        name = getattr(fn, "__name__", str(fn))
        raise UnsupportedLayerError(f"function {name!r} has no graph equivalent")


def trace_model(model: nn.Module, input_shape: tuple[int, int, int]):
    """Trace an eval-mode model into graph nodes plus its tensor payload.

    Returns (nodes, tensors, layer_map, output_id) where layer_map sends
    each parameterized source module path to its main archive tensor.
    """
    gm = fx.symbolic_trace(model.eval())
    ShapeProp(gm).propagate(torch.zeros((1, *input_shape)))
    tracer = _Tracer(gm)
    tracer.run()
    return tracer.nodes, tracer.tensors, tracer.layer_map, tracer.output_id
