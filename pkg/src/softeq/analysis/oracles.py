"""Exact reference computations: true a-posteriori LLRs and H(B|Y).

These are the yardsticks the trained demappers are checked against, not
production demappers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..demapper import LlrBlock
from ..modem import BitFrame, GrayPamMap, SymbolFrame


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def exact_llrs_awgn(gray_map: GrayPamMap, y: SymbolFrame | np.ndarray, noise_var: float,
                    bits: BitFrame | None = None) -> LlrBlock:
    """Natural-log APP ratios ``log P(b_j=0|y) / P(b_j=1|y)``.

    Assumes equiprobable symbols and Gaussian noise of variance
    ``noise_var``. The rate computation is base-agnostic up to its scale
    search, so natural-log LLRs are used throughout.
    """
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    metric = -((values[:, None] - gray_map.levels[None, :]) ** 2) / (2.0 * noise_var)
    out = np.empty((values.size, gray_map.bits_per_symbol))
    for j in range(gray_map.bits_per_symbol):
        ones = gray_map.labels[:, j] == 1
        out[:, j] = _logsumexp_rows(metric[:, ~ones]) - _logsumexp_rows(metric[:, ones])
    return LlrBlock(out, bits)


@dataclass
class DiscreteOracle:
    conditional_entropy: float
    llrs: np.ndarray
    p_y: np.ndarray
    posterior0: np.ndarray


def _h(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(p > 0, p * np.log2(p), 0.0)


def discrete_channel_oracle(p_by: np.ndarray) -> DiscreteOracle:
    """Exact H(B|Y) in bits and per-y log-posterior ratios of a 2 x |Y| table.

    Row 0 holds ``P(B=0, y)``, row 1 ``P(B=1, y)``. Values of ``y`` with zero
    probability get a zero LLR.
    """
    p = np.asarray(p_by, dtype=float)
    if p.ndim != 2 or p.shape[0] != 2 or p.shape[1] < 1:
        raise ValueError("joint table must be 2 x |Y|")
    if (p < 0).any() or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ValueError("joint table must be non-negative and sum to 1")
    p_y = p.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        post0 = np.where(p_y > 0, p[0] / p_y, 0.5)
    h = float(np.sum(p_y * (_h(post0) + _h(1.0 - post0))))
    with np.errstate(divide="ignore"):
        llrs = np.where(p_y > 0, np.log(post0) - np.log1p(-post0), 0.0)
    return DiscreteOracle(h, llrs, p_y, post0)
