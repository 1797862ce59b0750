"""Capture files: received symbols with their aligned transmitted bits.

Binary layout (little-endian)::

    offset  size  field
    0       8     magic  b"SOFTEQCP"
    8       2     version (uint16, currently 1)
    10      2     lane count L (uint16)
    then L lane records, each:
    +0      1     lane id (uint8, 0=XI 1=XQ 2=YI 3=YQ)
    +1      1     bits per symbol m (uint8)
    +2      2     reserved, zero
    +4      8     symbol count n (uint64)
    +12     8n    received symbols y (float64)
    ...     ceil(n*m/8)  transmitted bits, row-major, MSB-first (numpy.packbits)

The CSV alternative has the header ``lane,index,y,b1,...,bm`` with one row
per symbol; ``lane`` is the lane name (XI, XQ, YI, YQ).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .modem import BitFrame, Lane, SymbolFrame

MAGIC = b"SOFTEQCP"
VERSION = 1
_HEADER = struct.Struct("<8sHH")
_LANE = struct.Struct("<BBHQ")


class CaptureError(ValueError):
    """Malformed capture file; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class CaptureLane:
    lane_id: Lane
    y: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.y.ndim != 1 or self.bits.ndim != 2:
            raise ValueError("lane needs a symbol vector and an n x m bit matrix")
        if self.y.size != self.bits.shape[0]:
            raise ValueError("length mismatch between symbols and bits")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def m(self) -> int:
        return self.bits.shape[1]

    def frames(self) -> tuple[SymbolFrame, BitFrame]:
        bits = BitFrame(self.bits, self.lane_id)
        return SymbolFrame(self.y, source=bits), bits


@dataclass
class CaptureFile:
    path: Path | None
    lanes: list[CaptureLane]

    @property
    def lane_count(self) -> int:
        return len(self.lanes)

    def lane(self, lane_id: Lane | str | int) -> CaptureLane:
        if isinstance(lane_id, str):
            lane_id = Lane[lane_id.upper()]
        elif isinstance(lane_id, int):
            return self.lanes[lane_id]
        for ln in self.lanes:
            if ln.lane_id is lane_id:
                return ln
        raise KeyError(f"no lane {lane_id.name} in capture")


def save_capture(path: str | Path, lanes: list[CaptureLane]) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        _save_csv(path, lanes)
        return path
    chunks = [_HEADER.pack(MAGIC, VERSION, len(lanes))]
    for ln in lanes:
        chunks.append(_LANE.pack(ln.lane_id.value, ln.m, 0, ln.n))
        chunks.append(ln.y.astype("<f8").tobytes())
        chunks.append(np.packbits(ln.bits.reshape(-1)).tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def load_capture(path: str | Path) -> CaptureFile:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return CaptureFile(path, _load_csv(path))
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise CaptureError("malformed header: file too short", 0)
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CaptureError("malformed header: bad magic", 0)
    if version != VERSION:
        raise CaptureError(f"unsupported version {version}", 8)
    pos = _HEADER.size
    lanes = []
    for _ in range(count):
        if pos + _LANE.size > len(data):
            raise CaptureError("length mismatch: lane header truncated", pos)
        lane_val, m, _, n = _LANE.unpack_from(data, pos)
        try:
            lane_id = Lane(lane_val)
        except ValueError:
            raise CaptureError(f"malformed header: unknown lane id {lane_val}", pos) from None
        if m < 1:
            raise CaptureError("malformed header: zero bits per symbol", pos + 1)
        pos += _LANE.size
        n_bytes_bits = (n * m + 7) // 8
        if pos + 8 * n + n_bytes_bits > len(data):
            raise CaptureError(
                f"length mismatch: lane {lane_id.name} declares {n} symbols "
                f"but the payload is truncated",
                pos,
            )
        y = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            raise CaptureError("non-finite sample", pos + 8 * int(bad[0]))
        pos += 8 * n
        packed = np.frombuffer(data, dtype=np.uint8, count=n_bytes_bits, offset=pos)
        bits = np.unpackbits(packed, count=n * m).reshape(n, m)
        pos += n_bytes_bits
        lanes.append(CaptureLane(lane_id, y, bits))
    if pos != len(data):
        raise CaptureError("length mismatch: trailing bytes after last lane", pos)
    return CaptureFile(path, lanes)


def _save_csv(path: Path, lanes: list[CaptureLane]) -> None:
    ms = {ln.m for ln in lanes}
    if len(ms) > 1:
        raise ValueError("CSV captures need the same bits per symbol on every lane")
    m = ms.pop() if ms else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lane", "index", "y"] + [f"b{j + 1}" for j in range(m)])
        for ln in lanes:
            for i in range(ln.n):
                w.writerow([ln.lane_id.name, i, repr(float(ln.y[i]))] + ln.bits[i].tolist())


def _load_csv(path: Path) -> list[CaptureLane]:
    rows: dict[Lane, tuple[list[float], list[list[int]]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["lane", "index", "y"]:
            raise CaptureError("malformed header: expected lane,index,y,b1..bm", 0)
        m = len(header) - 3
        if m < 1 or header[3:] != [f"b{j + 1}" for j in range(m)]:
            raise CaptureError("malformed header: bit columns must be b1..bm", 0)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != m + 3:
                raise CaptureError(f"length mismatch on line {line_no}")
            try:
                lane = Lane[row[0]]
                idx = int(row[1])
                y = float(row[2])
                b = [int(v) for v in row[3:]]
            except (KeyError, ValueError) as exc:
                raise CaptureError(f"unparsable line {line_no}: {exc}") from None
            if not np.isfinite(y):
                raise CaptureError(f"non-finite sample on line {line_no}")
            ys, bs = rows.setdefault(lane, ([], []))
            if idx != len(ys):
                raise CaptureError(f"length mismatch: index gap on line {line_no}")
            ys.append(y)
            bs.append(b)
    return [
        CaptureLane(lane, np.array(ys), np.array(bs, dtype=np.uint8).reshape(len(ys), -1))
        for lane, (ys, bs) in rows.items()
    ]
