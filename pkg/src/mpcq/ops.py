"""Reference forward-pass operations for the model executor.

Tensors are plain numpy arrays: weights are OIHW (`out x in x kh x kw`),
single activations are CHW, batches are NCHW. Everything entering arithmetic
must be float; integer code tensors have to be dequantized first.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeError


def _as_float32(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind in "iu":
        raise TypeError(
            f"{what} has integer dtype {x.dtype}; dequantize codes before arithmetic")
    return np.ascontiguousarray(x, dtype=np.float32)


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-mode batch normalization: per-channel affine over running stats."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        vecs = {}
        for name in ("gamma", "beta", "running_mean", "running_var"):
            v = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if v.ndim != 1:
                raise ShapeError(f"batch-norm {name} must be 1-D, got shape {v.shape}")
            vecs[name] = v
            object.__setattr__(self, name, v)
        lengths = {name: len(v) for name, v in vecs.items()}
        if len(set(lengths.values())) != 1:
            raise ShapeError(f"batch-norm vectors disagree on channel count: {lengths}")
        if np.any(vecs["running_var"] < 0):
            raise ValueError("batch-norm running_var has negative entries")
        if not self.epsilon > 0:
            raise ValueError(f"batch-norm epsilon must be > 0, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return len(self.gamma)


def conv2d(weight: np.ndarray, x: np.ndarray, stride: int = 1, padding: int = 0,
           groups: int = 1) -> np.ndarray:
    """2-D cross-correlation of a CHW input with an OIHW weight tensor."""
    out = conv2d_batch(weight, _as_float32(x, "conv2d input")[None], stride,
                       padding, groups)
    return out[0]


def conv2d_batch(weight: np.ndarray, x: np.ndarray, stride: int = 1,
                 padding: int = 0, groups: int = 1) -> np.ndarray:
    """Batched (NCHW) variant of `conv2d`; the executor's hot path."""
    weight = _as_float32(weight, "conv2d weight")
    x = _as_float32(x, "conv2d input")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be 4-D (out,in,kh,kw), got shape {weight.shape}")
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be NCHW, got shape {x.shape}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d padding must be >= 0, got {padding}")
    out_ch, in_per_group, kh, kw = weight.shape
    if groups < 1 or out_ch % groups:
        raise ShapeError(
            f"conv2d output channels {out_ch} (weight axis 0) not divisible by groups={groups}")
    if x.shape[1] != in_per_group * groups:
        raise ShapeError(
            f"conv2d input channels {x.shape[1]} (input axis 1) != weight in-channels "
            f"{in_per_group} (weight axis 1) x groups {groups}")
    if kh > x.shape[2] + 2 * padding or kw > x.shape[3] + 2 * padding:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} exceeds padded input "
            f"{x.shape[2] + 2 * padding}x{x.shape[3] + 2 * padding} (input axes 2,3)")
    return kernels.conv2d_batch(weight, x, stride, padding, groups)


def batch_norm(x: np.ndarray, p: BatchNormParams) -> np.ndarray:
    """Per-channel `gamma * (x - mean) / sqrt(var + eps) + beta`; x is CHW or NCHW."""
    x = _as_float32(x, "batch_norm input")
    axis = 0 if x.ndim == 3 else 1
    if x.ndim not in (3, 4):
        raise ShapeError(f"batch_norm input must be CHW or NCHW, got shape {x.shape}")
    if x.shape[axis] != p.channels:
        raise ShapeError(
            f"batch_norm input has {x.shape[axis]} channels (axis {axis}), "
            f"parameters have {p.channels}")
    shape = [1] * x.ndim
    shape[axis] = p.channels
    scale = (p.gamma / np.sqrt(p.running_var + np.float32(p.epsilon))).reshape(shape)
    shift = (p.beta - p.running_mean * scale.reshape(-1)).reshape(shape)
    return (x * scale + shift).astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(_as_float32(x, "relu input"), np.float32(0))


def relu6(x: np.ndarray) -> np.ndarray:
    return np.clip(_as_float32(x, "relu6 input"), np.float32(0), np.float32(6))


def identity(x: np.ndarray) -> np.ndarray:
    return _as_float32(x, "identity input")


ACTIVATIONS = {"relu": relu, "relu6": relu6, "identity": identity}


def linear(weight: np.ndarray, x: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Affine map of (N, in) features with an (out, in) weight."""
    weight = _as_float32(weight, "linear weight")
    x = _as_float32(x, "linear input")
    if weight.ndim != 2:
        raise ShapeError(f"linear weight must be 2-D (out,in), got shape {weight.shape}")
    if x.ndim != 2:
        raise ShapeError(f"linear input must be 2-D (batch,in), got shape {x.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"linear input features {x.shape[1]} (axis 1) != weight in-features "
            f"{weight.shape[1]} (axis 1)")
    out = x @ weight.T
    if bias is not None:
        out = out + _as_float32(bias, "linear bias")
    return out.astype(np.float32)


def _pool_windows(x: np.ndarray, kernel: int, stride: int, padding: int,
                  pad_value: float):
    n, c, h, w = x.shape
    oh = (h + 2 * padding - kernel) // stride + 1
    ow = (w + 2 * padding - kernel) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"pool kernel {kernel} exceeds padded input {h}x{w}")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=pad_value)
    win = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :oh, :ow]


def max_pool(x: np.ndarray, kernel: int, stride: int | None = None,
             padding: int = 0) -> np.ndarray:
    x = _as_float32(x, "maxpool input")
    stride = kernel if stride is None else stride
    win = _pool_windows(x, kernel, stride, padding, -np.inf)
    return np.ascontiguousarray(win.max(axis=(4, 5)))


def avg_pool(x: np.ndarray, kernel: int = 0, stride: int | None = None,
             padding: int = 0) -> np.ndarray:
    """Average pooling; kernel 0 pools the whole spatial extent (global)."""
    x = _as_float32(x, "avgpool input")
    if kernel == 0:
        return x.mean(axis=(2, 3), keepdims=True)
    stride = kernel if stride is None else stride
    win = _pool_windows(x, kernel, stride, padding, 0.0)
    return np.ascontiguousarray(win.mean(axis=(4, 5), dtype=np.float32))


def add(*xs: np.ndarray) -> np.ndarray:
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ShapeError(f"add inputs disagree on shape: {sorted(shapes)}")
    out = xs[0].astype(np.float32)
    for x in xs[1:]:
        out = out + _as_float32(x, "add input")
    return out


def concat(*xs: np.ndarray) -> np.ndarray:
    """Concatenate along the channel axis (axis 1 of NCHW)."""
    spatial = {x.shape[2:] for x in xs}
    if len(spatial) != 1:
        raise ShapeError(f"concat inputs disagree on spatial shape: {sorted(spatial)}")
    return np.concatenate([_as_float32(x, "concat input") for x in xs], axis=1)


def flatten(x: np.ndarray) -> np.ndarray:
    return _as_float32(x, "flatten input").reshape(x.shape[0], -1)
