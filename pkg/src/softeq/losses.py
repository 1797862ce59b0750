"""Bitwise equivocation loss in bits, and its derivative."""

from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)


def equivocation_loss(b, llr):
    """``log2(1 + exp(-(1 - 2b) * llr))``, elementwise.

    Positive ``llr`` favours ``b == 0``. Computed as a softplus, so it stays
    exact for large magnitudes and is 0 for a correctly signed infinite LLR.
    """
    sign = 1.0 - 2.0 * np.asarray(b, dtype=float)
    return np.logaddexp(0.0, -sign * np.asarray(llr, dtype=float)) / LN2


def equivocation_grad(b, llr):
    """Derivative of :func:`equivocation_loss` with respect to ``llr``."""
    sign = 1.0 - 2.0 * np.asarray(b, dtype=float)
    z = -sign * np.asarray(llr, dtype=float)
    # sigmoid(z) without overflow
    sig = np.exp(-np.logaddexp(0.0, -z))
    return -sign * sig / LN2


def logistic(x):
    return np.exp(-np.logaddexp(0.0, -np.asarray(x, dtype=float)))


def binary_cross_entropy(b, p0, p1=None):
    """Base-2 cross-entropy of bit ``b`` under ``P(b=0) = p0``.

    Pass ``p1`` when the complement is available more accurately than
    ``1 - p0`` (e.g. ``logistic(-llr)`` for saturated outputs).
    """
    b = np.asarray(b, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    p1 = 1.0 - p0 if p1 is None else np.asarray(p1, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(b == 0, -np.log2(p0), -np.log2(p1))
