"""Convolution kernel backends.

Two implementations of the same contract live here: a compiled Cython kernel
(direct loops, built at install time) and a numpy fallback (sliding windows +
BLAS). The backend is selected once at import: the compiled kernel when the
extension is importable, numpy otherwise. Override with the environment
variable ``MPCQ_KERNEL=cython|numpy`` or programmatically via `set_backend`.
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _convkernel
except ImportError:
    _convkernel = None


def _cython_conv2d_batch(weight, x, stride, padding, groups):
    n, _, h, w = x.shape
    out_ch, _, kh, kw = weight.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    x = np.ascontiguousarray(x, dtype=np.float32)
    weight = np.ascontiguousarray(weight, dtype=np.float32)
    out = np.empty((n, out_ch, oh, ow), dtype=np.float32)
    _convkernel.conv2d_padded(weight, x, out, stride, groups)
    return out


_BACKENDS = {"numpy": numpy_backend.conv2d_batch}
if _convkernel is not None:
    _BACKENDS["cython"] = _cython_conv2d_batch

_active = os.environ.get("MPCQ_KERNEL", "auto").lower()
if _active in ("auto", ""):
    _active = "cython" if _convkernel is not None else "numpy"
if _active not in _BACKENDS:
    raise ImportError(
        f"kernel backend {_active!r} unavailable; choices: {sorted(_BACKENDS)}")


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def backend_name() -> str:
    """Name of the kernel backend currently in use."""
    return _active


def set_backend(name: str) -> None:
    """Switch kernels at runtime (used by tests and the benchmark)."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; choices: {sorted(_BACKENDS)}")
    _active = name


def conv2d_batch(weight: np.ndarray, x: np.ndarray, stride: int = 1,
                 padding: int = 0, groups: int = 1) -> np.ndarray:
    """Batched NCHW convolution dispatched to the active backend."""
    return _BACKENDS[_active](weight, x, stride, padding, groups)
