"""Max-log soft demapping of equalized PAM symbols into LLRs.

Sign convention everywhere: a positive LLR favours bit 0.

The max-log LLR of a Gray PAM is affine between consecutive constellation
midpoints, so both demapper modes share one segment grid. FIXED mode
evaluates the nearest-point distance formula for a given noise variance;
TRAINED mode evaluates a free slope and intercept per (bit, segment).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import equivocation_grad, equivocation_loss
from .modem import BitFrame, GrayPamMap, SymbolFrame, build_gray_pam
from .optim import AdamConfig, TrainTrace, minimize

FIXED = "fixed"
TRAINED = "trained"


@dataclass
class LlrBlock:
    """n x m soft bits, optionally with the transmitted bits they refer to."""

    llrs: np.ndarray
    bits_ref: BitFrame | None = None

    def __post_init__(self):
        self.llrs = np.asarray(self.llrs, dtype=float)
        if self.llrs.ndim != 2:
            raise ValueError("llrs must be an n x m matrix")
        if np.isnan(self.llrs).any():
            raise ValueError("llrs contain NaN")
        if self.bits_ref is not None and self.bits_ref.bits.shape != self.llrs.shape:
            raise ValueError("llr block and reference bits differ in shape")

    @property
    def n(self) -> int:
        return self.llrs.shape[0]

    @property
    def m(self) -> int:
        return self.llrs.shape[1]


def fixed_llrs(gray_map: GrayPamMap, y: np.ndarray, noise_var: float) -> np.ndarray:
    """Max-log LLRs by brute-force minimum over all constellation points."""
    d2 = (np.asarray(y, dtype=float)[:, None] - gray_map.levels[None, :]) ** 2
    out = np.empty((d2.shape[0], gray_map.bits_per_symbol))
    for j in range(gray_map.bits_per_symbol):
        ones = gray_map.labels[:, j] == 1
        out[:, j] = d2[:, ones].min(axis=1) - d2[:, ~ones].min(axis=1)
    return out / (2.0 * noise_var)


def _segment_table(gray_map: GrayPamMap, noise_var: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact slope/intercept of the FIXED demapper on every segment."""
    lv = gray_map.levels
    half = 0.25 * (lv[1] - lv[0])
    y1 = lv
    y2 = lv + np.where(np.arange(lv.size) < lv.size - 1, half, -half)
    l1 = fixed_llrs(gray_map, y1, noise_var)
    l2 = fixed_llrs(gray_map, y2, noise_var)
    slopes = (l2 - l1) / (y2 - y1)[:, None]
    intercepts = l1 - slopes * y1[:, None]
    return slopes.T.copy(), intercepts.T.copy()


@dataclass
class MlaDemapper:
    gray_map: GrayPamMap
    mode: str = FIXED
    noise_var: float = 1.0
    slopes: np.ndarray | None = field(default=None, repr=False)
    intercepts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in (FIXED, TRAINED):
            raise ValueError(f"unknown demapper mode {self.mode!r}")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")
        if self.mode == TRAINED:
            if self.slopes is None or self.intercepts is None:
                self.slopes, self.intercepts = _segment_table(self.gray_map, self.noise_var)
            shape = (self.gray_map.bits_per_symbol, self.gray_map.order)
            self.slopes = np.array(self.slopes, dtype=float).reshape(shape)
            self.intercepts = np.array(self.intercepts, dtype=float).reshape(shape)

    @classmethod
    def fixed(cls, gray_map: GrayPamMap, noise_var: float) -> MlaDemapper:
        return cls(gray_map, FIXED, noise_var)

    def as_trained(self) -> MlaDemapper:
        """TRAINED-mode copy that reproduces this demapper exactly."""
        if self.mode == TRAINED:
            return MlaDemapper(self.gray_map, TRAINED, self.noise_var,
                               self.slopes.copy(), self.intercepts.copy())
        return MlaDemapper(self.gray_map, TRAINED, self.noise_var)

    def segments(self, y: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.gray_map.midpoints, y, side="left")

    def llrs(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.mode == FIXED:
            return fixed_llrs(self.gray_map, y, self.noise_var)
        seg = self.segments(y)
        return self.slopes[:, seg].T * y[:, None] + self.intercepts[:, seg].T

    def llrs_and_slope(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """LLRs and their derivative with respect to ``y`` (n x m each)."""
        d = self if self.mode == TRAINED else self.as_trained()
        seg = d.segments(y)
        slope = d.slopes[:, seg].T
        return slope * y[:, None] + d.intercepts[:, seg].T, slope

    def to_dict(self) -> dict:
        out = {"m": self.gray_map.bits_per_symbol, "mode": self.mode, "noise_var": self.noise_var}
        if self.mode == TRAINED:
            out["slopes"] = self.slopes.tolist()
            out["intercepts"] = self.intercepts.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> MlaDemapper:
        return cls(build_gray_pam(int(data["m"])), data["mode"], float(data["noise_var"]),
                   data.get("slopes"), data.get("intercepts"))


def demap_max_log(d: MlaDemapper, y: SymbolFrame | np.ndarray,
                  bits: BitFrame | None = None) -> LlrBlock:
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    return LlrBlock(d.llrs(values), bits)


def hard_decide(block: LlrBlock | np.ndarray) -> np.ndarray:
    """0 where the LLR is >= 0 (ties go to 0), 1 where it is negative."""
    llrs = block.llrs if isinstance(block, LlrBlock) else np.asarray(block)
    return (llrs < 0).astype(np.uint8)


class _SlopeParams:
    """Trainable MLA table, centred on the constellation and normalized.

    Segment ``k`` holds level ``k``, so each affine piece is stored as a
    slope and the LLR value at that level, both in units of the FIXED scale
    ``1 / (2 noise_var)``. Away from zero a raw slope/intercept pair is
    nearly collinear, which stalls first-order training.
    """

    def __init__(self, d: MlaDemapper):
        self.scale = 1.0 / (2.0 * d.noise_var)
        self.centers = d.gray_map.levels
        t = d.as_trained()
        self.init = {"slopes": t.slopes / self.scale,
                     "values": (t.slopes * self.centers + t.intercepts) / self.scale}

    def demapper(self, d: MlaDemapper, params) -> MlaDemapper:
        a, v = params["slopes"], params["values"]
        return MlaDemapper(d.gray_map, TRAINED, d.noise_var,
                           a * self.scale, (v - a * self.centers) * self.scale)

    def llrs(self, params, y: np.ndarray, seg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """LLRs and their derivative with respect to ``y`` (n x m each)."""
        slope = self.scale * params["slopes"][:, seg].T
        value = self.scale * params["values"][:, seg].T
        return slope * (y - self.centers[seg])[:, None] + value, slope

    def grads(self, params, y: np.ndarray, seg: np.ndarray,
              upstream: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of ``sum(upstream * llr)`` with respect to the table."""
        m, order = params["slopes"].shape
        dy = y - self.centers[seg]
        gs = np.empty((m, order))
        gv = np.empty((m, order))
        for j in range(m):
            gs[j] = np.bincount(seg, weights=upstream[:, j] * dy, minlength=order)
            gv[j] = np.bincount(seg, weights=upstream[:, j], minlength=order)
        return {"slopes": gs * self.scale, "values": gv * self.scale}


def fit_slopes(d: MlaDemapper, y: SymbolFrame | np.ndarray, bits: BitFrame | np.ndarray,
               opt: AdamConfig = AdamConfig(), split: float = 0.5,
               ) -> tuple[MlaDemapper, TrainTrace]:
    """Train per-segment slopes and intercepts on the mean bitwise equivocation.

    Starts from the FIXED demapper with ``d.noise_var``; the first ``split``
    fraction of symbols trains, the rest validates.
    """
    yv = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    b = bits.bits if isinstance(bits, BitFrame) else np.asarray(bits)
    if yv.size != b.shape[0]:
        raise ValueError("symbols and bits are not aligned")
    if not 0 < split <= 1:
        raise ValueError("split must lie in (0, 1]")
    n_train = int(round(split * yv.size))
    y_tr, b_tr = yv[:n_train], b[:n_train]
    y_va, b_va = (yv[n_train:], b[n_train:]) if n_train < yv.size else (y_tr, b_tr)
    sp = _SlopeParams(d)
    params = {k: v.copy() for k, v in sp.init.items()}
    m = d.gray_map.bits_per_symbol
    seg_tr = d.segments(y_tr)
    seg_va = d.segments(y_va)

    def loss_grad(p, rows):
        yy, ss, bb = y_tr[rows], seg_tr[rows], b_tr[rows]
        llr = sp.llrs(p, yy, ss)[0]
        loss = equivocation_loss(bb, llr).mean()
        up = equivocation_grad(bb, llr) / (rows.size * m)
        return loss, sp.grads(p, yy, ss, up)

    def val_loss(p):
        llr = sp.llrs(p, y_va, seg_va)[0]
        return equivocation_loss(b_va, llr).mean()

    trace = minimize(params, loss_grad, val_loss, n_train, opt)
    return sp.demapper(d, params), trace
