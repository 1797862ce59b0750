"""Synthetic component-nonlinearity channel.

A Wiener-Hammerstein chain (FIR, memoryless polynomial, FIR) followed by
additive white Gaussian noise. It stands in for a measured back-to-back
link: odd-dominant nonlinearity with two-sided ISI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .modem import SymbolFrame

DEFAULT_PRE_FIR = (0.08, 0.9, 0.25, -0.12, 0.04)
DEFAULT_POLY = (1.0, 0.0, -0.12, 0.0, 0.03)
DEFAULT_POST_FIR = (1.0, 0.15)
OSNR_REFERENCE_GHZ = 12.5  # 0.1 nm at 1550 nm


def _main_tap(taps: tuple[float, ...]) -> int:
    return int(np.argmax(np.abs(taps)))


@dataclass(frozen=True)
class WienerHammersteinChannel:
    """``y = post_fir * poly(pre_fir * x) + noise``.

    ``poly`` holds (a1, ..., a5) of ``a1 u + a2 u^2 + ... + a5 u^5``. Each FIR
    is aligned on its largest-magnitude tap (delay 0) unless ``pre_cursor`` /
    ``post_cursor`` say otherwise.
    """

    pre_fir: tuple[float, ...] = DEFAULT_PRE_FIR
    poly: tuple[float, ...] = DEFAULT_POLY
    post_fir: tuple[float, ...] = DEFAULT_POST_FIR
    noise_sigma: float = 0.0
    seed: int = 0
    pre_cursor: int | None = field(default=None)
    post_cursor: int | None = field(default=None)

    def __post_init__(self):
        pre = tuple(float(t) for t in self.pre_fir)
        post = tuple(float(t) for t in self.post_fir)
        poly = tuple(float(a) for a in self.poly)
        if not pre or not post:
            raise ValueError("FIR tap vectors must be non-empty")
        if not poly or poly[0] == 0.0:
            raise ValueError("linear coefficient a1 must be non-zero")
        if not self.noise_sigma >= 0.0:
            raise ValueError("noise_sigma must be >= 0")
        object.__setattr__(self, "pre_fir", pre)
        object.__setattr__(self, "post_fir", post)
        object.__setattr__(self, "poly", poly)
        if self.pre_cursor is None:
            object.__setattr__(self, "pre_cursor", _main_tap(pre))
        if self.post_cursor is None:
            object.__setattr__(self, "post_cursor", _main_tap(post))
        for name, taps in (("pre_cursor", pre), ("post_cursor", post)):
            if not 0 <= getattr(self, name) < len(taps):
                raise ValueError(f"{name} outside the tap vector")

    def with_snr(self, snr_db: float, seed: int | None = None) -> WienerHammersteinChannel:
        return WienerHammersteinChannel(
            self.pre_fir, self.poly, self.post_fir, sigma_from_snr(snr_db),
            self.seed if seed is None else seed, self.pre_cursor, self.post_cursor,
        )

    def to_dict(self) -> dict:
        return {
            "pre_fir": list(self.pre_fir),
            "poly": list(self.poly),
            "post_fir": list(self.post_fir),
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "pre_cursor": self.pre_cursor,
            "post_cursor": self.post_cursor,
        }


def _fir(x: np.ndarray, taps: tuple[float, ...], cursor: int) -> np.ndarray:
    full = np.convolve(x, np.asarray(taps))
    return full[cursor : cursor + x.size]


def distort(
    ch: WienerHammersteinChannel, x: SymbolFrame | np.ndarray, normalize: bool = True
) -> np.ndarray:
    """Noiseless channel output, scaled to unit mean square by default."""
    xs = x.symbols if isinstance(x, SymbolFrame) else np.asarray(x, dtype=float)
    if xs.size == 0:
        raise ValueError("input frame is empty")
    u = _fir(xs, ch.pre_fir, ch.pre_cursor)
    v = np.polynomial.polynomial.polyval(u, (0.0,) + ch.poly)
    s = _fir(v, ch.post_fir, ch.post_cursor)
    if not normalize:
        return s
    power = np.mean(s**2)
    if power == 0.0:
        raise ValueError("channel output is identically zero")
    return s / np.sqrt(power)


def propagate(
    ch: WienerHammersteinChannel, x: SymbolFrame, return_clean: bool = False
) -> SymbolFrame | tuple[SymbolFrame, np.ndarray]:
    """Pass ``x`` through the channel.

    The noiseless output is set to unit power before noise of std
    ``noise_sigma`` is added, so the SNR is ``1 / noise_sigma**2``; the noisy
    result is then rescaled to unit mean square. With ``return_clean`` the
    identically rescaled noiseless signal is returned as well.
    """
    s = distort(ch, x)
    rng = np.random.default_rng(ch.seed)
    y = s + ch.noise_sigma * rng.standard_normal(s.size)
    scale = 1.0 / np.sqrt(np.mean(y**2))
    out = SymbolFrame(y * scale, source=x.source if isinstance(x, SymbolFrame) else None)
    if return_clean:
        return out, s * scale
    return out


def sigma_from_snr(snr_db: float) -> float:
    """Noise std per real dimension for a unit-power signal."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return math.sqrt(10.0 ** (-snr_db / 10.0))


def osnr_to_snr(osnr_db: float, symbol_rate_ghz: float) -> float:
    """Electrical SNR from OSNR in a 0.1 nm (12.5 GHz) reference bandwidth.

    Dual-polarization convention: total signal power over both
    polarizations against ASE in the reference bandwidth, so the per-lane
    SNR equals the per-symbol SNR returned here.
    """
    if symbol_rate_ghz <= 0:
        raise ValueError("symbol rate must be positive")
    return osnr_db - 10.0 * math.log10(symbol_rate_ghz / OSNR_REFERENCE_GHZ)


def snr_to_osnr(snr_db: float, symbol_rate_ghz: float) -> float:
    if symbol_rate_ghz <= 0:
        raise ValueError("symbol rate must be positive")
    return snr_db + 10.0 * math.log10(symbol_rate_ghz / OSNR_REFERENCE_GHZ)
