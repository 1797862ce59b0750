"""Achievable rate (bitwise GMI) of soft bits against the transmitted bits."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from ..demapper import LlrBlock
from ..losses import LN2

S_MAX = 100.0
S_TOL = 1e-6
_MAX_ITER = 200


@dataclass
class RateReport:
    rate_bits_per_real_symbol: float
    minimizing_s: float
    n: int
    m: int
    per_bit_equivocation: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RateReport:
        return cls(**data)


def _per_bit(signed: np.ndarray, s: float, n: int) -> np.ndarray:
    if s == 0.0:
        return np.ones(signed.shape[1])
    return np.logaddexp(0.0, -s * signed).sum(axis=0) / (n * LN2)


def _slope_curvature(t: np.ndarray, s: float, n: int) -> tuple[float, float]:
    # d/ds and d2/ds2 of sum log(1 + exp(-s t)), in nats per symbol
    q = expit(-s * t)
    return float(-(t * q).sum() / n), float((t * t * q * (1.0 - q)).sum() / n)


def _minimize_s(t: np.ndarray, n: int) -> float:
    """Minimizer over ``[0, S_MAX]`` of the convex cost, via bracketed Newton."""
    if t.size == 0:
        return 1.0
    g0 = -float(t.sum()) / (2.0 * n)
    if g0 >= 0.0:
        return 0.0
    g_hi, _ = _slope_curvature(t, S_MAX, n)
    if g_hi <= 0.0:
        return S_MAX
    lo, hi, s = 0.0, S_MAX, 1.0
    for _ in range(_MAX_ITER):
        g, c = _slope_curvature(t, s, n)
        if g > 0.0:
            hi = s
        else:
            lo = s
        step = g / c if c > 0.0 else np.inf
        nxt = s - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - s) < 1e-3 * S_TOL or hi - lo < 1e-3 * S_TOL:
            return float(nxt)
        s = nxt
    return float(s)


def achievable_rate(block: LlrBlock, bits: np.ndarray | None = None) -> RateReport:
    """``m - min_{s >= 0} (1/n) sum_ij log2(1 + exp(-s (1 - 2 b_ij) l_ij))``.

    The cost is convex in ``s``, so its minimizer on ``[0, 100]`` is found by
    Newton steps kept inside a shrinking sign-change bracket, well inside
    1e-6. Infinite LLRs are accepted, NaN is not. A confidently wrong
    infinite LLR forces ``s = 0`` and a zero rate.
    """
    if bits is None:
        if block.bits_ref is None:
            raise ValueError("rate needs the transmitted bits")
        bits = block.bits_ref.bits
    bits = np.asarray(bits)
    llrs = block.llrs
    if bits.shape != llrs.shape:
        raise ValueError("bits and LLRs differ in shape")
    if llrs.shape[0] < 1:
        raise ValueError("need at least one symbol")
    if np.isnan(llrs).any():
        raise ValueError("LLRs must not be NaN")
    n, m = llrs.shape
    signed = (1.0 - 2.0 * bits) * llrs
    if np.isneginf(signed).any():
        s_best = 0.0
    else:
        s_best = _minimize_s(signed[np.isfinite(signed)], n)
    per_bit = _per_bit(signed, s_best, n)
    return RateReport(float(m - per_bit.sum()), float(s_best), n, m, per_bit.tolist())
