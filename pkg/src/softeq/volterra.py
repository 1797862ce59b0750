"""Volterra nonlinear equalizer (VNLE).

Kernels of order ``p`` are indexed by non-decreasing tap tuples
``s_1 <= ... <= s_p`` with ``s_i`` in ``[-M_p, M_p]``; tap ``s`` refers to the
sample ``y(k - s)``. Permutations of a tuple multiply the same delay-line
samples, so each multiset carries exactly one coefficient.

Delay-line windows are stored with column ``i`` holding tap ``s = i - M``,
i.e. ``[y(k + M), ..., y(k), ..., y(k - M)]``, with zeros outside the frame.
The soft DNN equalizer uses the same window layout, which keeps extracted
kernels directly comparable.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .demapper import FIXED, MlaDemapper, _SlopeParams
from .losses import equivocation_grad, equivocation_loss
from .modem import BitFrame, SymbolFrame
from .optim import AdamConfig, TrainTrace, minimize

log = logging.getLogger(__name__)

_CHUNK = 8192


class RankDeficientError(ValueError):
    """Least-squares regression matrix without full column rank."""

    def __init__(self, message: str, condition_number: float, rank: int, n_kernels: int):
        super().__init__(
            f"{message}: rank {rank} of {n_kernels} kernels, "
            f"condition number {condition_number:.3g}"
        )
        self.condition_number = condition_number
        self.rank = rank
        self.n_kernels = n_kernels


@dataclass(frozen=True)
class VolterraDesign:
    """Two-sided tap counts ``T_1..T_P`` (``T_p = 2 M_p + 1``)."""

    taps: tuple[int, ...]

    def __post_init__(self):
        taps = tuple(int(t) for t in self.taps)
        if not taps:
            raise ValueError("design needs at least the linear order")
        for p, t in enumerate(taps, start=1):
            if t < 1 or t % 2 == 0:
                raise ValueError(f"order {p}: tap count must be odd and positive, got {t}")
            if p > 1 and t > taps[0]:
                raise ValueError(f"order {p}: {t} taps exceed the {taps[0]} linear taps")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def parse(cls, text: str) -> VolterraDesign:
        """From the ``17:17:11`` notation."""
        try:
            return cls(tuple(int(t) for t in str(text).split(":")))
        except ValueError as exc:
            raise ValueError(f"bad VNLE design {text!r}: {exc}") from None

    def __str__(self) -> str:
        return ":".join(str(t) for t in self.taps)

    @property
    def order(self) -> int:
        return len(self.taps)

    def memory(self, p: int) -> int:
        return (self.taps[p - 1] - 1) // 2

    @property
    def max_memory(self) -> int:
        return self.memory(1)


def kernel_count(design: VolterraDesign) -> list[int]:
    """Kernels per order: ``prod_{i<p}(T_p + i) / p!``."""
    out = []
    for p, t in enumerate(design.taps, start=1):
        out.append(math.prod(t + i for i in range(p)) // math.factorial(p))
    return out


def kernel_indices(design: VolterraDesign) -> list[np.ndarray]:
    """Canonical (lexicographic) non-decreasing tap tuples, one array per order."""
    out = []
    for p in range(1, design.order + 1):
        mp = design.memory(p)
        tuples = list(itertools.combinations_with_replacement(range(-mp, mp + 1), p))
        out.append(np.array(tuples, dtype=np.int64).reshape(len(tuples), p))
    return out


def delay_line(y: np.ndarray, memory: int) -> np.ndarray:
    """n x (2M+1) windows; column ``i`` is ``y(k - (i - M))``, zero padded."""
    y = np.asarray(y, dtype=float)
    padded = np.concatenate([np.zeros(memory), y, np.zeros(memory)])
    win = np.lib.stride_tricks.sliding_window_view(padded, 2 * memory + 1)
    return np.ascontiguousarray(win[:, ::-1])


def _window_features(design: VolterraDesign, windows: np.ndarray,
                     indices: list[np.ndarray]) -> np.ndarray:
    m1 = design.max_memory
    blocks = []
    for idx in indices:
        cols = idx + m1
        block = windows[:, cols[:, 0]].copy()
        for c in range(1, cols.shape[1]):
            block *= windows[:, cols[:, c]]
        blocks.append(block)
    return np.concatenate(blocks, axis=1)


def feature_matrix(design: VolterraDesign, y: SymbolFrame | np.ndarray,
                   rows: np.ndarray | slice | None = None) -> np.ndarray:
    """Products of delayed samples for every kernel, rows = time indices."""
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    windows = delay_line(values, design.max_memory)
    if rows is not None:
        windows = windows[rows]
    return _window_features(design, windows, kernel_indices(design))


def features(design: VolterraDesign, y: SymbolFrame | np.ndarray, k: int) -> np.ndarray:
    """Feature vector at time index ``k`` (zero padding beyond the frame)."""
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    m1 = design.max_memory
    if not 0 <= k < values.size:
        raise IndexError(f"time index {k} outside a frame of {values.size}")
    lo, hi = k - m1, k + m1 + 1
    seg = np.zeros(2 * m1 + 1)
    src_lo, src_hi = max(lo, 0), min(hi, values.size)
    seg[src_lo - lo : src_hi - lo] = values[src_lo:src_hi]
    window = seg[::-1][None, :]
    return _window_features(design, window, kernel_indices(design))[0]


@dataclass
class VolterraModel:
    design: VolterraDesign
    coeffs: np.ndarray
    mask: np.ndarray | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        total = sum(kernel_count(self.design))
        self.coeffs = np.array(self.coeffs, dtype=float).reshape(total)
        if self.mask is None:
            self.mask = np.ones(total, dtype=bool)
        self.mask = np.array(self.mask, dtype=bool).reshape(total)
        self.coeffs[~self.mask] = 0.0

    @classmethod
    def identity(cls, design: VolterraDesign) -> VolterraModel:
        coeffs = np.zeros(sum(kernel_count(design)))
        coeffs[design.max_memory] = 1.0
        return cls(design, coeffs)

    @property
    def active_count(self) -> int:
        return int(self.mask.sum())

    def active_counts(self) -> list[int]:
        bounds = np.cumsum([0] + kernel_count(self.design))
        return [int(self.mask[a:b].sum()) for a, b in zip(bounds[:-1], bounds[1:])]

    def order_slice(self, p: int) -> slice:
        bounds = np.cumsum([0] + kernel_count(self.design))
        return slice(int(bounds[p - 1]), int(bounds[p]))

    def kernels(self, p: int) -> dict[tuple[int, ...], float]:
        idx = kernel_indices(self.design)[p - 1]
        vals = self.coeffs[self.order_slice(p)]
        return {tuple(int(s) for s in t): float(v) for t, v in zip(idx, vals)}

    def effective(self) -> np.ndarray:
        return np.where(self.mask, self.coeffs, 0.0)

    def to_dict(self) -> dict:
        return {
            "design": str(self.design),
            "index_order": [idx.tolist() for idx in kernel_indices(self.design)],
            "coefficients": self.coeffs.tolist(),
            "mask": self.mask.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> VolterraModel:
        design = VolterraDesign.parse(data["design"])
        stored = data.get("index_order")
        if stored is not None:
            expected = [idx.tolist() for idx in kernel_indices(design)]
            if stored != expected:
                raise ValueError("stored kernel index order is not canonical")
        return cls(design, data["coefficients"], data.get("mask"))


def _predict_values(model: VolterraModel, values: np.ndarray) -> np.ndarray:
    h = model.effective()
    out = np.empty(values.size)
    windows = delay_line(values, model.design.max_memory)
    indices = kernel_indices(model.design)
    for start in range(0, values.size, _CHUNK):
        out[start : start + _CHUNK] = (
            _window_features(model.design, windows[start : start + _CHUNK], indices) @ h
        )
    return out


def predict(model: VolterraModel, y: SymbolFrame | np.ndarray) -> SymbolFrame:
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    return SymbolFrame(_predict_values(model, values),
                       source=y.source if isinstance(y, SymbolFrame) else None)


def _aligned(y, x) -> tuple[np.ndarray, np.ndarray]:
    yv = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    xv = x.symbols if isinstance(x, SymbolFrame) else np.asarray(x, dtype=float)
    if yv.shape != xv.shape:
        raise ValueError(f"received ({yv.size}) and reference ({xv.size}) lengths differ")
    return yv, xv


def _guard_rows(n: int, guard: int) -> np.ndarray:
    return np.arange(guard, max(n - guard, guard))


def fit_ls(design: VolterraDesign, y: SymbolFrame | np.ndarray,
           x: SymbolFrame | np.ndarray, guard: int | None = None) -> VolterraModel:
    """Least-squares kernels from the normal equations.

    The Gram matrix is accumulated in row chunks and solved through its
    eigendecomposition, which also yields the regression matrix's singular
    values; a numerically rank-deficient system raises
    :class:`RankDeficientError`. The first and last ``guard`` samples
    (default ``M_1``) are left out of the fit.
    """
    yv, xv = _aligned(y, x)
    guard = design.max_memory if guard is None else guard
    rows = _guard_rows(yv.size, guard)
    n_k = sum(kernel_count(design))
    if rows.size < n_k:
        raise RankDeficientError(f"only {rows.size} usable samples", np.inf, rows.size, n_k)
    windows = delay_line(yv, design.max_memory)
    indices = kernel_indices(design)
    gram = np.zeros((n_k, n_k))
    rhs = np.zeros(n_k)
    for start in range(0, rows.size, _CHUNK):
        r = rows[start : start + _CHUNK]
        f = _window_features(design, windows[r], indices)
        gram += f.T @ f
        rhs += f.T @ xv[r]
    evals, evecs = np.linalg.eigh(gram)
    top = evals[-1]
    sv = np.sqrt(np.clip(evals, 0.0, None))
    cond = float(sv[-1] / sv[0]) if sv[0] > 0 else np.inf
    tol = top * n_k * 10 * np.finfo(float).eps
    rank = int(np.sum(evals > tol))
    if top <= 0 or rank < n_k:
        raise RankDeficientError("regression matrix is rank deficient", cond, rank, n_k)
    coeffs = evecs @ ((evecs.T @ rhs) / evals)
    model = VolterraModel(design, coeffs)
    resid = xv[rows] - _predict_values(model, yv)[rows]
    model.info = {"condition_number": cond, "rank": rank, "mse": float(np.mean(resid**2)),
                  "method": "ls"}
    return model


@dataclass(frozen=True)
class Bitwise:
    """Bitwise-equivocation objective: VNLE output through a trainable MLA."""

    demapper: MlaDemapper
    bits: BitFrame | np.ndarray

    @property
    def bit_matrix(self) -> np.ndarray:
        return self.bits.bits if isinstance(self.bits, BitFrame) else np.asarray(self.bits)


MSE = "mse"


class _VnleProblem:
    """Loss and gradients for kernel training on precomputed features."""

    def __init__(self, feats: np.ndarray, target: np.ndarray, objective, l1: float,
                 slope_params: _SlopeParams | None, bits: np.ndarray | None):
        self.f = feats
        self.x = target
        self.objective = objective
        self.l1 = l1
        self.sp = slope_params
        self.bits = bits

    def evaluate(self, p, rows=None, grad=True):
        f = self.f if rows is None else self.f[rows]
        yt = f @ p["h"]
        n = f.shape[0]
        grads = {}
        if self.objective == MSE:
            x = self.x if rows is None else self.x[rows]
            err = yt - x
            loss = float(np.mean(err**2))
            if grad:
                grads["h"] = f.T @ (2.0 * err / n)
        else:
            b = self.bits if rows is None else self.bits[rows]
            seg = np.searchsorted(self.objective.demapper.gray_map.midpoints, yt, side="left")
            llr, a = self.sp.llrs(p, yt, seg)
            m = llr.shape[1]
            loss = float(equivocation_loss(b, llr).mean())
            if grad:
                up = equivocation_grad(b, llr) / (n * m)
                grads["h"] = f.T @ np.sum(up * a, axis=1)
                grads.update(self.sp.grads(p, yt, seg, up))
        if self.l1 > 0:
            loss += self.l1 * float(np.abs(p["h"]).sum())
            if grad:
                grads["h"] = grads["h"] + self.l1 * np.sign(p["h"])
        return loss, grads


def fit_gd(design: VolterraDesign, y: SymbolFrame | np.ndarray, x: SymbolFrame | np.ndarray,
           objective: str | Bitwise = MSE, opt: AdamConfig = AdamConfig(), split: float = 0.5,
           init: VolterraModel | None = None, l1: float = 0.0, mask: np.ndarray | None = None,
           guard: int | None = None,
           ) -> tuple[VolterraModel, MlaDemapper | None, TrainTrace]:
    """Gradient-descent (ADAM) identification of the kernels.

    ``objective`` is ``"mse"`` or a :class:`Bitwise`, in which case the MLA
    slopes are trained jointly and the trained demapper is returned. The
    first ``split`` fraction of usable samples trains, the remainder
    validates; the best-validation parameters are kept.
    """
    yv, xv = _aligned(y, x)
    if not 0 < split <= 1:
        raise ValueError("split must lie in (0, 1]")
    guard = design.max_memory if guard is None else guard
    rows = _guard_rows(yv.size, guard)
    if rows.size < 2:
        raise ValueError("not enough samples after edge exclusion")
    n_tr = max(1, int(round(split * rows.size)))
    tr, va = rows[:n_tr], rows[n_tr:]
    if va.size == 0:
        va = tr
    model = VolterraModel.identity(design) if init is None else init
    if model.design != design:
        raise ValueError("initial model has a different design")
    h0 = model.effective().copy()
    keep = model.mask.copy() if mask is None else np.asarray(mask, dtype=bool)
    h0[~keep] = 0.0

    windows = delay_line(yv, design.max_memory)
    indices = kernel_indices(design)
    f_tr = _window_features(design, windows[tr], indices)
    f_va = _window_features(design, windows[va], indices)

    params = {"h": h0}
    sp = None
    bits_tr = bits_va = None
    if isinstance(objective, Bitwise):
        bits = objective.bit_matrix
        if bits.shape[0] != yv.size:
            raise ValueError("bits are not aligned with the symbols")
        sp = _SlopeParams(objective.demapper)
        params.update({k: v.copy() for k, v in sp.init.items()})
        bits_tr, bits_va = bits[tr], bits[va]
    elif objective != MSE:
        raise ValueError(f"unknown objective {objective!r}")

    train = _VnleProblem(f_tr, xv[tr], objective, l1, sp, bits_tr)
    valid = _VnleProblem(f_va, xv[va], objective, 0.0, sp, bits_va)
    trace = minimize(
        params,
        lambda p, r: train.evaluate(p, r),
        lambda p: valid.evaluate(p, grad=False)[0],
        tr.size, opt, masks={"h": keep.astype(float)},
    )
    fitted = VolterraModel(design, params["h"], keep)
    fitted.info = {"method": "gd", "objective": "mse" if objective == MSE else "bitwise",
                   "best_epoch": trace.best_epoch}
    demapper = sp.demapper(objective.demapper, params) if sp is not None else None
    return fitted, demapper, trace


def mse(model: VolterraModel, y, x, guard: int | None = None) -> float:
    yv, xv = _aligned(y, x)
    guard = model.design.max_memory if guard is None else guard
    rows = _guard_rows(yv.size, guard)
    return float(np.mean((_predict_values(model, yv)[rows] - xv[rows]) ** 2))


def prune_l1(design: VolterraDesign, y, x, lam: float, threshold: float,
             opt: AdamConfig = AdamConfig(), split: float = 0.5,
             init: VolterraModel | None = None, guard: int | None = None,
             ) -> tuple[VolterraModel, TrainTrace]:
    """LASSO sparsification: penalized fit, magnitude cut, unpenalized fine-tune.

    Kernels with ``|h| < threshold`` after the penalized MSE fit are masked;
    the survivors are then retrained without penalty. With ``lam == 0`` and
    nothing masked this is exactly :func:`fit_gd` under MSE.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    model, _, trace = fit_gd(design, y, x, MSE, opt, split, init, l1=lam, guard=guard)
    keep = np.abs(model.coeffs) >= threshold
    keep &= model.mask
    if lam > 0 or not keep.all():
        pruned = VolterraModel(design, model.coeffs, keep)
        model, _, ft = fit_gd(design, y, x, MSE, opt, split, pruned, mask=keep, guard=guard)
        trace = TrainTrace(trace.train_loss + ft.train_loss, trace.val_loss + ft.val_loss,
                           ft.best_epoch, trace.steps + ft.steps)
    model.info.update({"method": "l1", "lambda": lam, "threshold": threshold,
                       "active_kernels": model.active_count})
    log.info("L1 pruning kept %d of %d kernels", model.active_count, model.mask.size)
    return model, trace


def estimate_noise_var(model: VolterraModel, y, x, guard: int | None = None) -> float:
    """Residual variance of the equalized signal, for a FIXED demapper."""
    return max(mse(model, y, x, guard), 1e-12)


def default_demapper(gray_map, model: VolterraModel, y, x) -> MlaDemapper:
    return MlaDemapper(gray_map, FIXED, estimate_noise_var(model, y, x))
