"""CSV / JSON plot data for a finished sweep.

Files written to the output directory:

``rate_vs_snr.csv``         point, snr_db, equalizer, rate, minimizing_s
``gain_vs_snr.csv``         point, snr_db, equalizer, gain (only with an LE baseline)
``rate_vs_multipliers.csv`` point, equalizer, multipliers, rate
``kernels_order1.csv``      equalizer, point, bit, tap1, value
``kernels_order3.csv``      equalizer, point, bit, tap1, tap2, tap3, value
``summary.json``            the complete SweepResult

Taps are delays relative to the window center. Floats carry 9 significant
digits in the CSVs and full precision in the JSON.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .sweep import SweepResult

RATE_HEADER = ["point", "snr_db", "equalizer", "rate", "minimizing_s"]
GAIN_HEADER = ["point", "snr_db", "equalizer", "gain"]
MULT_HEADER = ["point", "equalizer", "multipliers", "rate"]
K1_HEADER = ["equalizer", "point", "bit", "tap1", "value"]
K3_HEADER = ["equalizer", "point", "bit", "tap1", "tap2", "tap3", "value"]


def fmt(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"refusing to write non-finite value {value}")
    return f"{value:.9g}"


def _write(path: Path, header: list[str], rows: list[list]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def summary_json(res: SweepResult) -> str:
    return json.dumps(res.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_reports(res: SweepResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    rate_rows, gain_rows, mult_rows = [], [], []
    for r in res.results:
        rate = r.rate.rate_bits_per_real_symbol
        rate_rows.append([fmt(r.point), fmt(r.snr_db), r.equalizer, fmt(rate),
                          fmt(r.rate.minimizing_s)])
        if r.gain is not None:
            gain_rows.append([fmt(r.point), fmt(r.snr_db), r.equalizer, fmt(r.gain)])
        mult_rows.append([fmt(r.point), r.equalizer, r.complexity.multipliers, fmt(rate)])
    k1 = [[k.equalizer, fmt(k.point), k.bit, *k.taps, fmt(k.value)]
          for k in res.kernels if k.order == 1]
    k3 = [[k.equalizer, fmt(k.point), k.bit, *k.taps, fmt(k.value)]
          for k in res.kernels if k.order == 3]
    files = {
        "rate_vs_snr.csv": (RATE_HEADER, rate_rows),
        "gain_vs_snr.csv": (GAIN_HEADER, gain_rows),
        "rate_vs_multipliers.csv": (MULT_HEADER, mult_rows),
        "kernels_order1.csv": (K1_HEADER, k1),
        "kernels_order3.csv": (K3_HEADER, k3),
    }
    written = []
    for name, (header, rows) in files.items():
        _write(out / name, header, rows)
        written.append(out / name)
    path = out / "summary.json"
    try:
        path.write_text(summary_json(res))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    written.append(path)
    return written


def load_summary(path: str | Path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))
