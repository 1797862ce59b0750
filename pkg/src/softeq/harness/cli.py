"""Command-line entry point.

Exit status: 0 on success, 2 for usage or configuration errors (bad flags,
missing or malformed config, unreadable inputs), 1 for failures while
running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..analysis import (achievable_rate, extract_kernels, sdnne_multipliers, vnle_multipliers,
                        write_kernels_csv)
from ..capture import CaptureLane, load_capture, save_capture
from ..channel import (DEFAULT_POLY, DEFAULT_POST_FIR, DEFAULT_PRE_FIR, WienerHammersteinChannel,
                       osnr_to_snr, propagate)
from ..demapper import LlrBlock
from ..modem import DEFAULT_FRAME_LENGTH, BitFrame, Lane, build_gray_pam, map_bits, random_bits
from ..optim import AdamConfig
from ..sdnne import ACTIVATIONS, MlpDesign, MlpModel, PruningSchedule, prune_gradual
from ..volterra import VolterraDesign, VolterraModel, default_demapper, prune_l1
from .config import ConfigError, EqualizerSpec, load_config
from .equalizers import TrainedEqualizer, fit_equalizer
from .reports import emit_reports
from .sweep import run_sweep

log = logging.getLogger("softeq")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed")
    p.add_argument("--out", default=d(None), help="output file or directory")
    p.add_argument("--threads", type=int, default=d(1), help="parallel sweep points")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="softeq", description="Volterra and soft neural-network equalizers")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        return p

    p = command("simulate", "write a synthetic capture file")
    p.add_argument("--snr", type=float, default=25.0, help="SNR per real dimension in dB")
    p.add_argument("--osnr", type=float, help="OSNR in dB (overrides --snr)")
    p.add_argument("--symbol-rate", type=float, default=92.0, help="GBd, for --osnr")
    p.add_argument("--n", type=int, default=DEFAULT_FRAME_LENGTH, help="symbols per lane")
    p.add_argument("--m", type=int, default=3, help="bits per real symbol")
    p.add_argument("--lanes", type=int, default=1, help="lanes (frames) to write")
    p.add_argument("--config", help="take the channel from this experiment config")

    def equalizer_flags(p):
        p.add_argument("--kind", choices=("le", "vnle", "sdnne"), required=True)
        p.add_argument("--design", required=True, help="e.g. 17:17:11 or 17|16|10|3")
        p.add_argument("--objective", default="ls", choices=("ls", "mse", "bitwise"))
        p.add_argument("--activation", default="tanh", choices=ACTIVATIONS[:-1])
        p.add_argument("--itanh-points", type=int, default=16)
        p.add_argument("--steps", default="", help="comma-separated ADAM steps per stage")

    p = command("train", "fit one equalizer on a capture lane and save it")
    p.add_argument("--capture", required=True)
    p.add_argument("--lane", type=int, default=0)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--max-epochs", type=int, default=200)
    equalizer_flags(p)

    p = command("evaluate", "achievable rate of a saved equalizer on a capture")
    p.add_argument("--model", required=True)
    p.add_argument("--capture", required=True)
    p.add_argument("--lane", type=int, help="only this lane (default: all)")
    p.add_argument("--split", type=float, default=0.5,
                   help="evaluate symbols after this fraction (0 for all)")

    p = command("expand-kernels", "Volterra kernels of a saved SDNNE")
    p.add_argument("--model", required=True)
    p.add_argument("--orders", type=int, default=3, choices=(1, 2, 3))

    p = command("complexity", "hardware multipliers of a design")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sdnne", help="layer sizes, e.g. 17|16|10|3")
    g.add_argument("--vnle", help="taps per order, e.g. 17:17:11")
    p.add_argument("--activation", default="htanh", choices=ACTIVATIONS)
    p.add_argument("--itanh-points", type=int, default=16)
    p.add_argument("--with-mla", action="store_true", help="count the m demapper multipliers")
    p.add_argument("--m", type=int, default=3)

    p = command("prune", "prune a saved equalizer (gradual for SDNNE, L1 for VNLE)")
    p.add_argument("--model", required=True)
    p.add_argument("--capture", required=True)
    p.add_argument("--lane", type=int, default=0)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--sparsity", type=float, default=0.2, help="final SDNNE sparsity")
    p.add_argument("--n-steps", type=int, default=10)
    p.add_argument("--lam", type=float, default=1e-4, help="VNLE L1 weight")
    p.add_argument("--threshold", type=float, default=1e-3, help="VNLE magnitude cut")
    p.add_argument("--max-epochs", type=int, default=200)

    p = command("sweep", "run an experiment config and write the plot data")
    p.add_argument("config", help="TOML experiment config")
    return parser


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def _load_capture(path: str):
    if not Path(path).exists():
        raise ConfigError(f"capture not found: {path}")
    return load_capture(path)


def _lane_data(cap, index: int):
    try:
        lane = cap.lanes[index]
    except IndexError:
        raise ConfigError(f"capture has {cap.lane_count} lanes, no lane {index}") from None
    bits = BitFrame(lane.bits, lane.lane_id)
    x = map_bits(build_gray_pam(lane.m), bits).symbols
    return lane.y, x, bits


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def cmd_simulate(a) -> int:
    if a.n < 1 or a.lanes < 1:
        raise ConfigError("need --n >= 1 and --lanes >= 1")
    if a.lanes > len(Lane):
        raise ConfigError(f"at most {len(Lane)} lanes")
    pre, poly, post = DEFAULT_PRE_FIR, DEFAULT_POLY, DEFAULT_POST_FIR
    if a.config:
        cfg = load_config(a.config)
        pre, poly, post = cfg.pre_fir, cfg.poly, cfg.post_fir
    snr = osnr_to_snr(a.osnr, a.symbol_rate) if a.osnr is not None else a.snr
    try:
        gray_map = build_gray_pam(a.m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seed = a.seed or 0
    base = WienerHammersteinChannel(pre, poly, post)
    lanes = []
    for i, lane_id in zip(range(a.lanes), Lane):
        bit_seed, noise_seed = np.random.SeedSequence([seed, i]).generate_state(2)
        bits = random_bits(a.n, a.m, int(bit_seed), lane_id)
        y = propagate(base.with_snr(snr, int(noise_seed)), map_bits(gray_map, bits))
        lanes.append(CaptureLane(lane_id, y.symbols, bits.bits))
    path = save_capture(a.out or "capture.bin", lanes)
    print(path)
    return 0


def _spec_from_args(a) -> EqualizerSpec:
    try:
        steps = tuple(float(s) for s in a.steps.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad --steps {a.steps!r}") from None
    return EqualizerSpec(a.kind, a.kind, a.design, a.objective, a.activation, a.itanh_points, steps)


def cmd_train(a) -> int:
    spec = _spec_from_args(a)
    cap = _load_capture(a.capture)
    y, x, bits = _lane_data(cap, a.lane)
    opt = AdamConfig(seed=a.seed or 0, max_epochs=a.max_epochs)
    eq = fit_equalizer(spec, y, x, bits, build_gray_pam(bits.m), opt, a.split)
    out = Path(a.out or "model.json")
    out.write_text(json.dumps(eq.to_dict()) + "\n")
    print(json.dumps({"model": str(out), "multipliers": eq.complexity().multipliers,
                      "best_epochs": [t.best_epoch for t in eq.traces]}))
    return 0


def cmd_evaluate(a) -> int:
    eq = TrainedEqualizer.from_dict(_load_json(a.model))
    cap = _load_capture(a.capture)
    indices = range(cap.lane_count) if a.lane is None else [a.lane]
    llrs, bits = [], []
    for i in indices:
        y, _, b = _lane_data(cap, i)
        start = int(round(a.split * y.size))
        llrs.append(eq.llrs(y)[start:])
        bits.append(b.bits[start:])
    report = achievable_rate(LlrBlock(np.concatenate(llrs)), np.concatenate(bits))
    _emit(json.dumps(report.to_dict()), a.out)
    return 0


def cmd_expand(a) -> int:
    eq = TrainedEqualizer.from_dict(_load_json(a.model))
    if not isinstance(eq.model, MlpModel):
        raise ConfigError("kernel expansion needs a saved SDNNE")
    kernels = extract_kernels(eq.model, orders=a.orders)
    out = Path(a.out or "kernels")
    out.mkdir(parents=True, exist_ok=True)
    for order in range(1, a.orders + 1):
        write_kernels_csv(out / f"kernels_order{order}.csv", kernels, order)
    print(out)
    return 0


def cmd_complexity(a) -> int:
    try:
        if a.sdnne:
            report = sdnne_multipliers(MlpDesign.parse(a.sdnne, a.activation, a.itanh_points))
        else:
            report = vnle_multipliers(VolterraDesign.parse(a.vnle), a.with_mla, a.m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(report.multipliers)
    print(json.dumps({"formula": report.formula, "breakdown": report.breakdown}))
    if a.out:
        Path(a.out).write_text(json.dumps(report.to_dict()) + "\n")
    return 0


def cmd_prune(a) -> int:
    eq = TrainedEqualizer.from_dict(_load_json(a.model))
    cap = _load_capture(a.capture)
    y, x, bits = _lane_data(cap, a.lane)
    opt = AdamConfig(seed=a.seed or 0, max_epochs=a.max_epochs)
    if isinstance(eq.model, MlpModel):
        rows = y.size - 2 * eq.model.design.memory
        steps_per_epoch = max(1, -(-int(round(a.split * rows)) // opt.batch_size))
        schedule = PruningSchedule(0.0, a.sparsity, 0, a.n_steps, 2 * steps_per_epoch)
        needed = -(-(schedule.end_step + 1) // steps_per_epoch) + opt.patience + 1
        model, _, trace = prune_gradual(eq.model, y, bits, schedule,
                                        opt.replace(max_epochs=max(a.max_epochs, needed)), a.split)
        eq = TrainedEqualizer(eq.spec, model, None, [trace])
        info = {"sparsity": model.sparsity}
    else:
        model: VolterraModel = eq.model
        pruned, trace = prune_l1(model.design, y, x, a.lam, a.threshold, opt, a.split, init=model)
        n_tr = int(round(a.split * y.size))
        eq = TrainedEqualizer(eq.spec, pruned,
                              default_demapper(build_gray_pam(bits.m), pruned, y[:n_tr], x[:n_tr]),
                              [trace])
        info = {"active_kernels": pruned.active_count}
    out = Path(a.out or "pruned.json")
    out.write_text(json.dumps(eq.to_dict()) + "\n")
    print(json.dumps({"model": str(out), "multipliers": eq.complexity().multipliers,
                      **info}))
    return 0


def cmd_sweep(a) -> int:
    cfg = load_config(a.config, seed=a.seed)
    if a.threads < 1:
        raise ConfigError("--threads must be >= 1")
    res = run_sweep(cfg, threads=a.threads)
    written = emit_reports(res, a.out or "results")
    for path in written:
        print(path)
    if res.errors:
        for point, err in res.errors.items():
            print(f"point {point} failed: {err}", file=sys.stderr)
    return 1 if res.errors and not res.results else 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "expand-kernels": cmd_expand,
    "complexity": cmd_complexity,
    "prune": cmd_prune,
    "sweep": cmd_sweep,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
