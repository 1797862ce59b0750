"""Gray-labelled PAM constellations, bit frames and symbol mapping.

Every real dimension of a square QAM is handled as an independent PAM lane
with ``m`` bits per symbol. Label convention: bit value 0 goes with the
positive half of the constellation (and with positive LLRs downstream).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DEFAULT_FRAME_LENGTH = 66444


class Lane(enum.Enum):
    XI = 0
    XQ = 1
    YI = 2
    YQ = 3


@dataclass(frozen=True)
class GrayPamMap:
    """Reflected-Gray labelled ``2**m``-PAM with unit average power.

    ``levels`` is sorted ascending; ``labels[i]`` is the bit tuple of
    ``levels[i]`` with the sign bit first.
    """

    bits_per_symbol: int
    levels: np.ndarray
    labels: np.ndarray

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol

    @property
    def midpoints(self) -> np.ndarray:
        """Decision boundaries between adjacent levels."""
        return 0.5 * (self.levels[1:] + self.levels[:-1])

    @property
    def label_ints(self) -> np.ndarray:
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return self.labels.astype(np.int64) @ weights

    def level_of_label(self) -> np.ndarray:
        """Lookup table: integer label -> level."""
        table = np.empty(self.order)
        table[self.label_ints] = self.levels
        return table


def build_gray_pam(m: int) -> GrayPamMap:
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= 6:
        raise ValueError(f"bits per symbol must be in 1..6, got {m!r}")
    order = 1 << m
    # index j runs from the top amplitude down so the all-zero label sits at +max
    j = np.arange(order)
    gray = j ^ (j >> 1)
    amplitudes = (order - 1 - 2 * j).astype(float)
    scale = np.sqrt(np.mean(amplitudes**2))
    idx = np.argsort(amplitudes)
    levels = amplitudes[idx] / scale
    bits = (gray[idx, None] >> np.arange(m - 1, -1, -1)) & 1
    levels.setflags(write=False)
    bits = bits.astype(np.uint8)
    bits.setflags(write=False)
    return GrayPamMap(bits_per_symbol=m, levels=levels, labels=bits)


@dataclass(frozen=True)
class BitFrame:
    bits: np.ndarray
    lane_id: Lane = Lane.XI
    seed: int | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] == 0:
            raise ValueError("bits must be a non-empty n x m matrix")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bit entries must be 0 or 1")
        object.__setattr__(self, "bits", bits.astype(np.uint8))

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def m(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class SymbolFrame:
    symbols: np.ndarray
    source: BitFrame | str | None = field(default=None, compare=False)

    def __post_init__(self):
        sym = np.asarray(self.symbols, dtype=float)
        if sym.ndim != 1:
            raise ValueError("symbols must be a 1-d vector")
        if not np.all(np.isfinite(sym)):
            raise ValueError("symbols must be finite")
        if isinstance(self.source, BitFrame) and self.source.n != sym.size:
            raise ValueError("symbol count does not match source bit rows")
        object.__setattr__(self, "symbols", sym)

    def __len__(self) -> int:
        return self.symbols.size


def random_bits(n: int, m: int, seed: int, lane: Lane = Lane.XI) -> BitFrame:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    return BitFrame(rng.integers(0, 2, size=(n, m), dtype=np.uint8), lane, seed)


def map_bits(gray_map: GrayPamMap, frame: BitFrame) -> SymbolFrame:
    if frame.m != gray_map.bits_per_symbol:
        raise ValueError(
            f"frame has {frame.m} bit columns, map expects {gray_map.bits_per_symbol}"
        )
    weights = 1 << np.arange(frame.m - 1, -1, -1)
    labels = frame.bits.astype(np.int64) @ weights
    return SymbolFrame(gray_map.level_of_label()[labels], source=frame)


def slice_bits(gray_map: GrayPamMap, y: SymbolFrame | np.ndarray) -> np.ndarray:
    """Hard nearest-level decision; returns the n x m label bits."""
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    idx = np.searchsorted(gray_map.midpoints, values, side="left")
    return gray_map.labels[idx]
