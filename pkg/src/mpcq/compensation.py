"""Per-channel compensation between a low-bit layer and its high-bit successor.

The solver is data-free: it reads only the two weight tensors. Channel j of
the low layer feeds input channel j of the high layer, so a single scalar
c_j can absorb the low-bit reconstruction error of that channel. The
coefficients minimize, independently per channel,

    J_j(c) = ||c * Wlow_hat_j - Wlow_j||^2
             + lambda1 * c^2 * ||dQhigh_j||^2 + lambda2 * c^2

where Wlow_hat is the dequantized low-bit weight (output-channel slice j),
and dQhigh is the high layer's quantization error (input-channel slice j).
`oracle_minimize` re-derives the same coefficients by brute force so the
closed form is independently checkable, and `empirical_reconstruction_loss`
measures what the weight-space surrogate buys on actual activations.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import ops
from .errors import PairingError, ShapeError
from .quantizers import (CompensatedQuant, dequantize, scale_input_channels,
                         ternary_quantize, uniform_quantize)


def _input_channel_sq_norms(w: np.ndarray, groups: int = 1) -> np.ndarray:
    """Squared L2 norm of each effective input channel of an OIHW weight."""
    d = np.asarray(w, dtype=np.float64)
    if d.ndim == 2:
        d = d[:, :, None, None]
    out_ch, ipg, kh, kw = d.shape
    g = d.reshape(groups, out_ch // groups, ipg, kh, kw)
    return (g * g).sum(axis=(1, 3, 4)).reshape(-1)


def _effective_in_channels(w: np.ndarray, groups: int) -> int:
    return int(w.shape[1]) * groups


@dataclass(frozen=True, eq=False)
class LayerPair:
    """A low-bit layer and the high-bit layer consuming its output.

    Weights are OIHW for convolutions or (out, in) for linear layers. The
    output channels of the low layer must line up one-to-one with the
    effective input channels of the high layer.
    """

    low_weight: np.ndarray
    high_weight: np.ndarray
    low_bits: int = 2
    high_bits: int = 6
    low_stride: int = 1
    low_padding: int = 0
    low_groups: int = 1
    high_stride: int = 1
    high_padding: int = 0
    high_groups: int = 1

    def __post_init__(self):
        low = np.asarray(self.low_weight, dtype=np.float32)
        high = np.asarray(self.high_weight, dtype=np.float32)
        object.__setattr__(self, "low_weight", low)
        object.__setattr__(self, "high_weight", high)
        if low.ndim not in (2, 4) or high.ndim not in (2, 4):
            raise ShapeError("layer weights must be 2-D (linear) or 4-D (conv)")
        if self.low_bits > self.high_bits:
            raise PairingError(
                f"low bit-width {self.low_bits} exceeds high bit-width "
                f"{self.high_bits}")
        got = _effective_in_channels(high, self.high_groups)
        if int(low.shape[0]) != got:
            raise PairingError(
                f"low layer emits {low.shape[0]} channels but high layer "
                f"consumes {got}")

    @property
    def channel_count(self) -> int:
        return int(self.low_weight.shape[0])

    @cached_property
    def low_quant(self):
        # ternary occupies the 2-bit slot; anything wider is uniform
        if self.low_bits == 2:
            return ternary_quantize(self.low_weight)
        return uniform_quantize(self.low_weight, self.low_bits)

    @cached_property
    def low_dequant(self) -> np.ndarray:
        return dequantize(self.low_quant)

    @cached_property
    def high_quant(self):
        return uniform_quantize(self.high_weight, self.high_bits)

    @cached_property
    def high_dequant(self) -> np.ndarray:
        return dequantize(self.high_quant)

    @cached_property
    def high_error(self) -> np.ndarray:
        return self.high_dequant - self.high_weight

    def _channel_sums(self):
        """Per-output-channel <What_j, W_j>, ||What_j||^2, ||W_j||^2, ||dQ_j||^2."""
        what = self.low_dequant.reshape(self.channel_count, -1).astype(np.float64)
        w = self.low_weight.reshape(self.channel_count, -1).astype(np.float64)
        dots = (what * w).sum(axis=1)
        hat_sq = (what * what).sum(axis=1)
        w_sq = (w * w).sum(axis=1)
        dq_sq = _input_channel_sq_norms(self.high_error, self.high_groups)
        return dots, hat_sq, w_sq, dq_sq


@dataclass(frozen=True)
class CompensationResult:
    """Solved coefficients plus the bookkeeping for inspection."""

    c: np.ndarray
    gamma_sq: np.ndarray
    theta_sq: np.ndarray
    objective_before: float
    objective_after: float
    lambda1: float
    lambda2: float


def _check_lambdas(lambda1: float, lambda2: float) -> None:
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(
            f"regularization weights must be non-negative, got "
            f"lambda1={lambda1} lambda2={lambda2}")


def _check_c(pair: LayerPair, c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if c.shape != (pair.channel_count,):
        raise ValueError(
            f"coefficient vector has {c.shape[0]} entries, pair has "
            f"{pair.channel_count} channels")
    return c


def objective_value(pair: LayerPair, c, lambda1: float = 0.5,
                    lambda2: float = 0.0):
    """Per-channel objective J_j at the given coefficients, and the total."""
    _check_lambdas(lambda1, lambda2)
    c = _check_c(pair, c)
    dots, hat_sq, w_sq, dq_sq = pair._channel_sums()
    per_channel = (c * c * hat_sq - 2.0 * c * dots + w_sq
                   + lambda1 * c * c * dq_sq + lambda2 * c * c)
    return per_channel, float(per_channel.sum())


def solve_coefficients(pair: LayerPair, lambda1: float = 0.5,
                       lambda2: float = 0.0) -> CompensationResult:
    """Closed-form minimizer of the per-channel objective, clamped at zero.

    Channels with a vanishing denominator (all-zero dequantized slice and no
    regularization pull) carry no signal; they get c_j = 1 so the high layer
    passes through unmodified.
    """
    _check_lambdas(lambda1, lambda2)
    dots, hat_sq, w_sq, dq_sq = pair._channel_sums()
    denom = hat_sq + lambda1 * dq_sq + lambda2
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(denom > 0.0, dots / np.where(denom > 0.0, denom, 1.0), 1.0)
    c = np.where(denom > 0.0, np.maximum(raw, 0.0), 1.0)
    gamma_sq = c * c * hat_sq - 2.0 * c * dots + w_sq
    theta_sq = c * c * dq_sq
    _, before = objective_value(pair, np.ones(pair.channel_count),
                                lambda1, lambda2)
    after = float((gamma_sq + lambda1 * theta_sq + lambda2 * c * c).sum())
    return CompensationResult(c=c, gamma_sq=gamma_sq, theta_sq=theta_sq,
                              objective_before=before, objective_after=after,
                              lambda1=lambda1, lambda2=lambda2)


def _ternary_section(fn, lo: float, hi: float, iters: int = 120) -> float:
    """Shrink [lo, hi] around the minimum of a unimodal scalar function."""
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fn(m1) <= fn(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def oracle_minimize(pair: LayerPair, lambda1: float = 0.5,
                    lambda2: float = 0.0, grid: int = 2048) -> np.ndarray:
    """Brute-force per-channel minimizer, independent of the closed form.

    Evaluates the objective literally (norms of the actual difference
    vectors) on a dense grid, then sharpens the best cell by ternary
    section. A flat objective means the channel is unconstrained; those
    return 1.0, matching the solver's degenerate convention.
    """
    _check_lambdas(lambda1, lambda2)
    if grid <= 0:
        raise ValueError(f"grid resolution must be positive, got {grid}")
    dots, hat_sq, w_sq, dq_sq = pair._channel_sums()
    denom = hat_sq + lambda1 * dq_sq + lambda2
    what = pair.low_dequant.reshape(pair.channel_count, -1).astype(np.float64)
    w = pair.low_weight.reshape(pair.channel_count, -1).astype(np.float64)
    dq_by_channel = _input_channel_sq_norms(pair.high_error, pair.high_groups)

    out = np.empty(pair.channel_count, dtype=np.float64)
    for j in range(pair.channel_count):
        estimate = dots[j] / denom[j] if denom[j] > 0 else 1.0
        c_max = 2.0 * max(1.0, estimate)

        def j_at(c, j=j):
            diff = c * what[j] - w[j]
            return (float(diff @ diff) + lambda1 * c * c * dq_by_channel[j]
                    + lambda2 * c * c)

        cs = np.linspace(0.0, c_max, grid + 1)
        vals = ((cs[:, None] * what[j][None, :] - w[j][None, :]) ** 2).sum(axis=1)
        vals += (lambda1 * dq_by_channel[j] + lambda2) * cs * cs
        spread = float(vals.max() - vals.min())
        if spread <= 1e-12 * (1.0 + abs(float(vals.min()))):
            out[j] = 1.0
            continue
        best = int(np.argmin(vals))
        lo = cs[max(best - 1, 0)]
        hi = cs[min(best + 1, grid)]
        out[j] = _ternary_section(j_at, float(lo), float(hi))
    return out


def apply_compensation(pair: LayerPair, c) -> CompensatedQuant:
    """Attach coefficients to the high layer's quantized form.

    The integer codes stay exactly as uniform quantization produced them;
    c rides along as metadata multiplied in at dequantization.
    """
    c = _check_c(pair, c)
    if (c < 0).any():
        raise ValueError("compensation coefficients must be non-negative")
    q = pair.high_quant
    return CompensatedQuant(codes=q.codes, bits=q.bits, scale=q.scale,
                            coeff=c.astype(np.float32),
                            groups=pair.high_groups)


def _forward(pair: LayerPair, low_w: np.ndarray, high_w: np.ndarray,
             x: np.ndarray, activation: str) -> np.ndarray:
    """Run probe x through low layer -> activation -> high layer."""
    act = ops.ACTIVATIONS[activation]
    if pair.low_weight.ndim == 2:
        hidden = act(ops.linear(low_w, x))
        return ops.linear(high_w, hidden)
    hidden = act(ops.conv2d_batch(low_w, x, stride=pair.low_stride,
                                  padding=pair.low_padding,
                                  groups=pair.low_groups))
    return ops.conv2d_batch(high_w, hidden, stride=pair.high_stride,
                            padding=pair.high_padding,
                            groups=pair.high_groups)


def _as_probe_batch(pair: LayerPair, probes: np.ndarray) -> np.ndarray:
    x = np.asarray(probes, dtype=np.float32)
    single_ndim = 1 if pair.low_weight.ndim == 2 else 3
    if x.ndim == single_ndim:
        x = x[None]
    if x.ndim != single_ndim + 1:
        raise ShapeError(
            f"probes must be {single_ndim}-D or batched {single_ndim + 1}-D, "
            f"got {x.ndim}-D")
    return x


@dataclass(frozen=True)
class PlacementCheck:
    """Outcome of comparing the two equivalent coefficient placements."""

    supported: bool
    deviation: float | None
    note: str


def placement_equivalence_check(pair: LayerPair, c, probe,
                                activation: str = "relu",
                                batch_norm=None) -> PlacementCheck:
    """Verify c can sit on either side of the activation.

    Path A scales the output channels of the dequantized low layer; path B
    scales the input channels of the high layer. With only a ReLU (or
    nothing) in between and c >= 0 these are algebraically identical. A
    batch norm in between breaks the identity, which is reported as an
    unsupported placement rather than a deviation.
    """
    c = _check_c(pair, c)
    if (c < 0).any():
        raise ValueError("placement equivalence requires non-negative c")
    if batch_norm is not None:
        return PlacementCheck(
            supported=False, deviation=None,
            note="equivalence holds only without intervening normalization")
    if activation not in ("identity", "relu"):
        raise ValueError(
            f"activation {activation!r} is not positively homogeneous")
    x = _as_probe_batch(pair, probe)
    cf = c.astype(np.float32)
    if pair.low_weight.ndim == 2:
        low_scaled = pair.low_dequant * cf[:, None]
    else:
        low_scaled = pair.low_dequant * cf[:, None, None, None]
    high_plain = pair.high_dequant
    high_comp = dequantize(apply_compensation(pair, c))
    out_a = _forward(pair, low_scaled, high_plain, x, activation)
    out_b = _forward(pair, pair.low_dequant, high_comp, x, activation)
    deviation = float(np.abs(out_a - out_b).max()) if out_a.size else 0.0
    return PlacementCheck(supported=True, deviation=deviation,
                          note="output-channel and input-channel placements agree")


def empirical_reconstruction_loss(pair: LayerPair, c, probes,
                                  activation: str = "relu") -> float:
    """Mean squared feature-map error of the mixed path on real activations.

    Runs the probes through the full-precision pair and through the
    quantized pair with compensation applied, and returns the squared
    difference of the second layer's output, averaged over probes. This is
    the quantity the weight-space objective stands in for; the solver
    itself never sees activations.
    """
    c = _check_c(pair, c)
    x = _as_probe_batch(pair, probes)
    reference = _forward(pair, pair.low_weight, pair.high_weight, x, activation)
    mixed_high = dequantize(apply_compensation(pair, c))
    mixed = _forward(pair, pair.low_dequant, mixed_high, x, activation)
    diff = (mixed.astype(np.float64) - reference.astype(np.float64)) ** 2
    return float(diff.reshape(x.shape[0], -1).sum(axis=1).mean())
