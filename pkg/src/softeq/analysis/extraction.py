"""Volterra kernels of a trained MLP by Taylor expansion around a window y0.

Order 1 is the exact reverse-mode input gradient. Order 2 differentiates
that gradient numerically (central differences) and folds the symmetric
Hessian into an upper-triangular kernel matrix. Order 3 uses second central
differences of the gradient with one Richardson refinement. The kernel of a
tap multiset carries the usual ``1 / prod(k!)`` Taylor weight, so that
``f(y0 + d) ~ f(y0) + sum_p sum_tuples h_p * prod d``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..sdnne import (LINEAR, TANH, MlpModel, _forward, batch_input_gradient, forward,
                     input_gradient, kinks)
from ..volterra import VolterraDesign, VolterraModel, kernel_indices

HESSIAN_STEP = 1e-3
THIRD_STEP = 5e-2


class NotDifferentiableError(ValueError):
    pass


@dataclass
class ExtractedKernels:
    """Kernels of one output unit; tap ``i`` refers to window column ``i``."""

    output: int
    h0: float
    h1: np.ndarray
    h2: np.ndarray | None = None
    h3: dict[tuple[int, int, int], float] = field(default_factory=dict)

    @property
    def memory(self) -> int:
        return (self.h1.size - 1) // 2

    @property
    def order(self) -> int:
        if self.h3:
            return 3
        return 2 if self.h2 is not None else 1

    def to_volterra(self) -> VolterraModel:
        """Full-window Volterra model holding these kernels (constant dropped)."""
        taps = 2 * self.memory + 1
        design = VolterraDesign((taps,) * self.order)
        coeffs = [self.h1]
        if self.h2 is not None:
            iu = np.triu_indices(taps)
            coeffs.append(self.h2[iu])
        if self.h3:
            coeffs.append(np.array([self.h3[t] for t in
                                    itertools.combinations_with_replacement(range(taps), 3)]))
        return VolterraModel(design, np.concatenate(coeffs))


def _check_smooth(model: MlpModel, y0: np.ndarray, orders: int) -> None:
    act = model.design.activation
    if act in (TANH, LINEAR):
        return
    if orders > 1:
        raise NotDifferentiableError(
            f"{act} networks are piecewise linear; higher-order kernels need a tanh network"
        )
    _, cache = _forward(model.params(), model.design, y0[None, :], keep=True)
    pts = kinks(act, model.design.itanh_points)
    for _, z, _ in cache[:-1]:
        if pts.size and np.min(np.abs(z[..., None] - pts)) < 1e-9:
            raise NotDifferentiableError(
                f"{act} unit sits on a kink at y0; use a tanh network or another y0"
            )


def _hessians(model: MlpModel, y0: np.ndarray, h: float) -> np.ndarray:
    """Symmetrized Hessians, shape (m, s1, s1), from differences of gradients."""
    s1 = y0.size
    eye = np.eye(s1)
    grads = batch_input_gradient(model, np.concatenate([y0 + h * eye, y0 - h * eye]))
    # H[j, a, i] = d g_j[a] / d y_i
    hess = np.transpose((grads[:s1] - grads[s1:]) / (2.0 * h), (1, 2, 0))
    return 0.5 * (hess + np.transpose(hess, (0, 2, 1)))


def _third(model: MlpModel, y0: np.ndarray, h: float) -> np.ndarray:
    """T[j, a, b, c] = d^3 f_j / dy_a dy_b dy_c for b <= c (others left zero)."""
    s1 = y0.size
    eye = np.eye(s1)
    pairs = [(b, c) for b in range(s1) for c in range(b, s1)]
    pts = [y0]
    for b, c in pairs:
        if b == c:
            pts += [y0 + h * eye[b], y0 - h * eye[b]]
        else:
            e, f = h * eye[b], h * eye[c]
            pts += [y0 + e + f, y0 + e - f, y0 - e + f, y0 - e - f]
    g = batch_input_gradient(model, np.array(pts))
    center = g[0]
    out = np.zeros((g.shape[1], s1, s1, s1))
    pos = 1
    for b, c in pairs:
        if b == c:
            d2 = (g[pos] - 2.0 * center + g[pos + 1]) / (h * h)
            pos += 2
        else:
            d2 = (g[pos] - g[pos + 1] - g[pos + 2] + g[pos + 3]) / (4.0 * h * h)
            pos += 4
        out[:, :, b, c] = d2
    return out


def _fold3(tensor: np.ndarray, a: int, b: int, c: int) -> float:
    # average every available evaluation of the symmetric derivative
    vals = [tensor[a, b, c], tensor[b, a, c], tensor[c, a, b]]
    mult = math.prod(math.factorial(k) for k in np.unique([a, b, c], return_counts=True)[1])
    return float(np.mean(vals)) / mult


def extract_kernels(model: MlpModel, y0: np.ndarray | None = None, orders: int = 2,
                    hessian_step: float = HESSIAN_STEP, third_step: float = THIRD_STEP,
                    ) -> list[ExtractedKernels]:
    """Kernels up to ``orders`` (1..3) of every output unit, expanded at ``y0``.

    ``y0`` defaults to the all-zero window. Piecewise-linear activations only
    support order 1, and only away from their kinks.
    """
    if not 1 <= orders <= 3:
        raise ValueError("orders must be 1, 2 or 3")
    s1 = model.design.layer_sizes[0]
    y0 = np.zeros(s1) if y0 is None else np.asarray(y0, dtype=float)
    if y0.shape != (s1,):
        raise ValueError(f"expansion point needs {s1} entries")
    _check_smooth(model, y0, orders)
    h0 = np.atleast_1d(forward(model, y0))
    jac = input_gradient(model, y0)
    hess = _hessians(model, y0, hessian_step) if orders >= 2 else None
    third = None
    if orders >= 3:
        coarse = _third(model, y0, third_step)
        fine = _third(model, y0, third_step / 2.0)
        third = (4.0 * fine - coarse) / 3.0
    out = []
    iu = np.triu_indices(s1, 1)
    for j in range(jac.shape[0]):
        h2 = None
        if hess is not None:
            h2 = np.triu(hess[j])
            h2[np.diag_indices(s1)] *= 0.5
            h2[iu] = hess[j][iu]
        h3 = {}
        if third is not None:
            for a, b, c in itertools.combinations_with_replacement(range(s1), 3):
                h3[(a, b, c)] = _fold3(third[j], a, b, c)
        out.append(ExtractedKernels(j, float(h0[j]), jac[j].copy(), h2, h3))
    return out


def kernels_of(model: VolterraModel) -> ExtractedKernels:
    """Express a Volterra model's kernels on a full window, for comparison."""
    design = model.design
    mem = design.max_memory
    taps = 2 * mem + 1
    h1 = np.zeros(taps)
    h2 = np.zeros((taps, taps)) if design.order >= 2 else None
    h3: dict[tuple[int, int, int], float] = {}
    if design.order >= 3:
        h3 = {t: 0.0 for t in itertools.combinations_with_replacement(range(taps), 3)}
    for p, idx in enumerate(kernel_indices(design), start=1):
        values = model.coeffs[model.order_slice(p)]
        for tup, v in zip(idx + mem, values):
            if p == 1:
                h1[tup[0]] = v
            elif p == 2:
                h2[tup[0], tup[1]] = v
            elif p == 3:
                h3[tuple(int(t) for t in tup)] = v
    return ExtractedKernels(0, 0.0, h1, h2, h3)


def write_kernels_csv(path: str | Path, kernels: list[ExtractedKernels], order: int) -> None:
    """One row per (bit, tap tuple); taps are delays relative to the center."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bit", *[f"tap{i + 1}" for i in range(order)], "value"])
        for ek in kernels:
            mem = ek.memory
            for row in kernel_rows(ek, order):
                w.writerow([ek.output, *[t - mem for t in row[0]], f"{row[1]:.9g}"])


def kernel_rows(ek: ExtractedKernels, order: int) -> list[tuple[tuple[int, ...], float]]:
    taps = ek.h1.size
    if order == 1:
        return [((i,), float(v)) for i, v in enumerate(ek.h1)]
    if order == 2:
        if ek.h2 is None:
            return []
        return [((a, b), float(ek.h2[a, b])) for a in range(taps) for b in range(a, taps)]
    if order == 3:
        return [(t, float(v)) for t, v in ek.h3.items()]
    raise ValueError("kernel export supports orders 1..3")
