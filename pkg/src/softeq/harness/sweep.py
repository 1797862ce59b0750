"""SNR / OSNR sweeps: simulate or ingest frames, train, evaluate, account."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..analysis import ComplexityReport, RateReport, achievable_rate, extract_kernels
from ..analysis.extraction import kernel_rows
from ..capture import load_capture
from ..channel import WienerHammersteinChannel, osnr_to_snr, propagate
from ..demapper import LlrBlock
from ..modem import BitFrame, Lane, build_gray_pam, map_bits, random_bits
from ..sdnne import TANH, MlpModel
from .config import ExperimentConfig
from .equalizers import TrainedEqualizer, fit_equalizer

log = logging.getLogger(__name__)


@dataclass
class PointResult:
    point: float
    snr_db: float
    equalizer: str
    kind: str
    design: str
    rate: RateReport
    complexity: ComplexityReport
    gain: float | None = None
    traces: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> PointResult:
        data = dict(data)
        data["rate"] = RateReport.from_dict(data["rate"])
        data["complexity"] = ComplexityReport.from_dict(data["complexity"])
        return cls(**data)


@dataclass
class KernelRow:
    equalizer: str
    point: float
    order: int
    bit: int
    taps: list[int]
    value: float


@dataclass
class SweepResult:
    axis: str
    points: list[float]
    results: list[PointResult] = field(default_factory=list)
    kernels: list[KernelRow] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "points": list(self.points),
            "results": [r.to_dict() for r in self.results],
            "kernels": [asdict(k) for k in self.kernels],
            "errors": dict(self.errors),
            "config": self.config,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SweepResult:
        return cls(
            data["axis"],
            list(data["points"]),
            [PointResult.from_dict(r) for r in data["results"]],
            [KernelRow(**k) for k in data["kernels"]],
            dict(data["errors"]),
            data.get("config", {}),
            data.get("meta", {}),
        )

    def rate(self, equalizer: str, point: float) -> float:
        for r in self.results:
            if r.equalizer == equalizer and r.point == point:
                return r.rate.rate_bits_per_real_symbol
        raise KeyError((equalizer, point))


@dataclass
class Frame:
    y: np.ndarray
    x: np.ndarray | None
    bits: BitFrame


def _seeds(cfg: ExperimentConfig, point_index: int, frame: int) -> tuple[int, int]:
    state = np.random.SeedSequence([cfg.seed, point_index, frame]).generate_state(2)
    return int(state[0]), int(state[1])


def point_snr(cfg: ExperimentConfig, point: float) -> float:
    return point if cfg.axis == "snr" else osnr_to_snr(point, cfg.symbol_rate_ghz)


def simulate_frames(cfg: ExperimentConfig, point_index: int) -> list[Frame]:
    """Training frame followed by ``eval_frames`` fresh frames for one sweep point."""
    gray_map = build_gray_pam(cfg.m)
    snr = point_snr(cfg, cfg.points[point_index])
    base = WienerHammersteinChannel(cfg.pre_fir, cfg.poly, cfg.post_fir)
    frames = []
    for f in range(cfg.eval_frames + 1):
        bit_seed, noise_seed = _seeds(cfg, point_index, f)
        bits = random_bits(cfg.frame_length, cfg.m, bit_seed, Lane.XI)
        x = map_bits(gray_map, bits)
        y = propagate(base.with_snr(snr, noise_seed), x)
        frames.append(Frame(y.symbols, x.symbols, bits))
    return frames


def capture_frames(cfg: ExperimentConfig, point_index: int) -> list[Frame]:
    """Lane 0 trains; every further lane is an evaluation frame (lane 0 if alone)."""
    gray_map = build_gray_pam(cfg.m)
    cap = load_capture(cfg.captures[point_index])
    frames = []
    for lane in cap.lanes:
        if lane.m != cfg.m:
            raise ValueError(f"capture lane has m={lane.m}, config expects {cfg.m}")
        bits = BitFrame(lane.bits, lane.lane_id)
        frames.append(Frame(lane.y, map_bits(gray_map, bits).symbols, bits))
    if len(frames) == 1:
        frames.append(frames[0])
    return frames


def evaluate(eq: TrainedEqualizer, frames: list[Frame], split: float, guard: int) -> RateReport:
    """Rate over the held-out part of every evaluation frame, edges excluded."""
    llrs, bits = [], []
    for fr in frames:
        n = fr.y.size
        start = int(round(split * n))
        stop = n - guard
        if stop <= start:
            raise ValueError("evaluation window is empty")
        llrs.append(eq.llrs(fr.y)[start:stop])
        bits.append(fr.bits.bits[start:stop])
    return achievable_rate(LlrBlock(np.concatenate(llrs)), np.concatenate(bits))


def _kernel_rows(name: str, point: float, eq: TrainedEqualizer) -> list[KernelRow]:
    model = eq.model
    if not isinstance(model, MlpModel) or model.design.activation != TANH:
        return []
    rows = []
    for ek in extract_kernels(model, orders=3):
        mem = ek.memory
        for order in (1, 3):
            for taps, value in kernel_rows(ek, order):
                rows.append(KernelRow(name, point, order, ek.output, [t - mem for t in taps], value))
    return rows


def run_point(cfg: ExperimentConfig, point_index: int) -> tuple[list[PointResult], list[KernelRow]]:
    point = cfg.points[point_index]
    frames = capture_frames(cfg, point_index) if cfg.captures else simulate_frames(cfg, point_index)
    train, evals = frames[0], frames[1:]
    gray_map = build_gray_pam(cfg.m)
    results, kernels = [], []
    for spec in cfg.equalizers:
        eq = fit_equalizer(spec, train.y, train.x, train.bits, gray_map, cfg.training, cfg.split)
        rate = evaluate(eq, evals, cfg.split, cfg.guard)
        results.append(PointResult(point, point_snr(cfg, point), spec.name, spec.kind,
                                   spec.design, rate, eq.complexity(),
                                   traces=[t.to_dict() for t in eq.traces]))
        kernels += _kernel_rows(spec.name, point, eq)
        log.info("point %g %s: rate %.6f", point, spec.name, rate.rate_bits_per_real_symbol)
    base = cfg.baseline
    if base is not None:
        ref = next(r for r in results if r.equalizer == base.name).rate.rate_bits_per_real_symbol
        for r in results:
            r.gain = r.rate.rate_bits_per_real_symbol - ref
    return results, kernels


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Every sweep point independently; a failing point is recorded and skipped."""

    def task(i):
        try:
            return run_point(cfg, i), None
        except Exception as exc:  # recorded per point, the sweep goes on
            log.warning("point %g failed: %s", cfg.points[i], exc)
            return None, f"{type(exc).__name__}: {exc}"

    indices = range(len(cfg.points))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(task, indices))
    else:
        outcomes = [task(i) for i in indices]
    res = SweepResult(cfg.axis, list(cfg.points), config=cfg.to_dict())
    for i, (ok, err) in zip(indices, outcomes):
        if err is not None:
            res.errors[repr(cfg.points[i])] = err
            continue
        results, kernels = ok
        res.results += results
        res.kernels += kernels
    n = cfg.frame_length
    n_train = int(round(cfg.split * n))
    res.meta = {
        "training_symbols": n_train,
        "training_fraction_of_first_frame": cfg.split,
        "training_overhead_fraction": n_train / (n * (cfg.eval_frames + 1)),
        "evaluated_symbols_per_point": cfg.eval_frames * (n - n_train - cfg.guard),
    }
    return res
