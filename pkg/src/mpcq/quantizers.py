"""Layer-wise weight quantizers: ternary and uniform k-bit.

Both quantizers keep their layer scale explicit in the returned record
rather than folding it anywhere, so dequantization is self-contained;
`absorb_scale_into_bn` is the separate deployment-time folding step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ShapeError
from .ops import BatchNormParams


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves away from zero.

    Centralized because numpy's `round` ties to even; swap here if a
    different tie-break is ever needed.
    """
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class TernaryQuant:
    """Codes in {-1, 0, +1} with one positive scale per layer.

    `delta` is the magnitude threshold (0.7 x mean |w|); `alpha` is the mean
    magnitude of the entries above it, zero when none are.
    """

    codes: np.ndarray
    alpha: float
    delta: float

    @property
    def bits(self) -> int:
        return 2


@dataclass(frozen=True)
class UniformQuant:
    """Codes in [0, 2^bits - 1] mapping linearly onto [-scale, +scale]."""

    codes: np.ndarray
    bits: int
    scale: float


@dataclass(frozen=True)
class CompensatedQuant:
    """Uniform codes plus a per-input-channel coefficient vector.

    Codes are untouched; the coefficients are metadata multiplied in at
    dequantization along the input-channel axis (grouped layout respected).
    """

    codes: np.ndarray
    bits: int
    scale: float
    coeff: np.ndarray
    groups: int = 1


def _code_dtype(bits: int):
    # int8 runs out at 2^8-1 = 255, so 8-bit codes take the i32 lane
    return np.int8 if bits <= 7 else np.int32


def ternary_quantize(w: np.ndarray) -> TernaryQuant:
    """Quantize to {-1, 0, +1} with threshold 0.7*mean|w| and the matching scale."""
    w = np.asarray(w, dtype=np.float32)
    if w.size == 0:
        raise ValueError("cannot ternary-quantize an empty tensor")
    magnitude = np.abs(w)
    delta = 0.7 * float(magnitude.mean(dtype=np.float64))
    codes = np.zeros(w.shape, dtype=np.int8)
    codes[w > delta] = 1
    codes[w < -delta] = -1
    above = magnitude[magnitude > delta]
    alpha = float(above.mean(dtype=np.float64)) if above.size else 0.0
    return TernaryQuant(codes, alpha, delta)


def uniform_quantize(w: np.ndarray, bits: int, scale: float | None = None) -> UniformQuant:
    """Uniform k-bit quantization onto 2^k levels spanning [-scale, +scale].

    The layer scale defaults to max|w|; an explicit scale clamps codes that
    fall outside the range.
    """
    w = np.asarray(w, dtype=np.float32)
    if w.size == 0:
        raise ValueError("cannot uniform-quantize an empty tensor")
    if bits < 1:
        raise ValueError(f"bit-width must be >= 1, got {bits}")
    if bits > 8:
        raise CapacityError(f"bit-width {bits} exceeds the 8-bit code storage")
    if scale is None:
        scale = float(np.abs(w).max())
    levels = (1 << bits) - 1
    if scale <= 0.0:
        # degenerate all-zero layer: park every code on the midpoint
        codes = np.full(w.shape, round_half_away(levels / 2), dtype=_code_dtype(bits))
        return UniformQuant(codes, bits, 0.0)
    unit = w.astype(np.float64) / (2.0 * scale) + 0.5
    codes = np.clip(round_half_away(levels * unit), 0, levels)
    return UniformQuant(codes.astype(_code_dtype(bits)), bits, float(scale))


def dequantize(q) -> np.ndarray:
    """Reconstruct float32 weights from any quant record."""
    if isinstance(q, TernaryQuant):
        return (np.float32(q.alpha) * q.codes).astype(np.float32)
    if isinstance(q, UniformQuant):
        levels = (1 << q.bits) - 1
        vals = q.scale * (2.0 * q.codes.astype(np.float64) / levels - 1.0)
        return vals.astype(np.float32)
    if isinstance(q, CompensatedQuant):
        base = dequantize(UniformQuant(q.codes, q.bits, q.scale))
        return scale_input_channels(base, q.coeff, q.groups)
    raise TypeError(f"not a quant record: {type(q).__name__}")


def scale_input_channels(weight: np.ndarray, coeff: np.ndarray,
                         groups: int = 1) -> np.ndarray:
    """Multiply input channel j of an OIHW (or out x in) weight by coeff[j].

    For grouped layers the coefficient index runs over the effective input
    channels: j = group * in_per_group + local index.
    """
    w = np.asarray(weight, dtype=np.float32)
    flat = w.ndim == 2
    if flat:
        w = w[:, :, None, None]
    out_ch, in_per_group, kh, kw = w.shape
    coeff = np.asarray(coeff, dtype=np.float32)
    if coeff.shape != (in_per_group * groups,):
        raise ShapeError(
            f"coefficient vector has {coeff.shape[0]} entries, layer consumes "
            f"{in_per_group * groups} input channels")
    grouped = w.reshape(groups, out_ch // groups, in_per_group, kh, kw)
    scaled = grouped * coeff.reshape(groups, 1, in_per_group, 1, 1)
    out = scaled.reshape(out_ch, in_per_group, kh, kw).astype(np.float32)
    return out[:, :, 0, 0] if flat else out


def quant_error(w: np.ndarray, bits: int, scale: float | None = None) -> np.ndarray:
    """Elementwise reconstruction error of uniform quantization: Q(w) - w."""
    w = np.asarray(w, dtype=np.float32)
    return dequantize(uniform_quantize(w, bits, scale)) - w


def absorb_scale_into_bn(bn: BatchNormParams, s: float) -> BatchNormParams:
    """Fold a positive per-layer scale into the following batch norm.

    Returns parameters bn' with batch_norm(x, bn') == batch_norm(s*x, bn)
    exactly in real arithmetic (gamma scaled up, running mean scaled down).
    """
    if not s > 0:
        raise ValueError(f"absorbed scale must be positive, got {s}")
    s = np.float32(s)
    return BatchNormParams(bn.gamma * s, bn.beta, bn.running_mean / s,
                           bn.running_var, bn.epsilon)
