"""Experiment configuration, read from TOML.

Schema (every table optional except ``sweep`` and at least one
``equalizer``)::

    seed = 1

    [channel]               # synthetic Wiener-Hammerstein link
    pre_fir = [0.08, 0.9, 0.25, -0.12, 0.04]
    poly = [1.0, 0.0, -0.12, 0.0, 0.03]
    post_fir = [1.0, 0.15]
    captures = []           # optional: one capture file per sweep point

    [signal]
    m = 3
    frame_length = 66444
    split = 0.5
    eval_frames = 6

    [sweep]
    axis = "snr"            # or "osnr"
    points = [21.0, 23.0, 25.0]
    symbol_rate_ghz = 92.0  # used for the OSNR axis

    [training]              # ADAM defaults for every equalizer
    step = 1e-3
    batch_size = 512
    max_epochs = 200
    patience = 20

    [[equalizer]]
    name = "LE"
    kind = "le"             # le | vnle | sdnne
    design = "17"
    objective = "ls"        # le/vnle: ls | mse | bitwise
    activation = "tanh"     # sdnne: tanh | itanh | htanh | relu
    itanh_points = 16
    steps = [1e-2, 1e-3]    # ADAM step per training stage
    refit_output = true     # sdnne: final convex refit of the output layer
    prune = { kind = "gradual", final_sparsity = 0.2 }
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..channel import DEFAULT_POLY, DEFAULT_POST_FIR, DEFAULT_PRE_FIR
from ..modem import DEFAULT_FRAME_LENGTH
from ..optim import AdamConfig
from ..sdnne import ACTIVATIONS, LINEAR, MlpDesign
from ..volterra import VolterraDesign

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EQUALIZER_KINDS = ("le", "vnle", "sdnne")
VNLE_OBJECTIVES = ("ls", "mse", "bitwise")
SWEEP_AXES = ("snr", "osnr")
PRUNE_KINDS = ("gradual", "l1")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EqualizerSpec:
    name: str
    kind: str
    design: str
    objective: str = "ls"
    activation: str = "tanh"
    itanh_points: int = 16
    steps: tuple[float, ...] = ()
    prune: dict | None = None
    refit_output: bool = True

    def __post_init__(self):
        if self.kind not in EQUALIZER_KINDS:
            raise ConfigError(f"equalizer {self.name!r}: kind must be one of {EQUALIZER_KINDS}")
        try:
            if self.kind == "sdnne":
                if self.activation not in ACTIVATIONS or self.activation == LINEAR:
                    raise ConfigError(f"equalizer {self.name!r}: bad activation {self.activation!r}")
                MlpDesign.parse(self.design, self.activation, self.itanh_points).memory
            else:
                d = VolterraDesign.parse(self.design)
                if self.kind == "le" and d.order != 1:
                    raise ConfigError(f"equalizer {self.name!r}: an LE design has one order")
                if self.objective not in VNLE_OBJECTIVES:
                    raise ConfigError(f"equalizer {self.name!r}: objective must be one of "
                                      f"{VNLE_OBJECTIVES}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"equalizer {self.name!r}: {exc}") from None
        if any(not s > 0 for s in self.steps):
            raise ConfigError(f"equalizer {self.name!r}: steps must be positive")
        if self.prune is not None:
            kind = self.prune.get("kind")
            if kind not in PRUNE_KINDS:
                raise ConfigError(f"equalizer {self.name!r}: prune kind must be one of {PRUNE_KINDS}")
            if (kind == "gradual") != (self.kind == "sdnne"):
                raise ConfigError(f"equalizer {self.name!r}: gradual pruning is for SDNNEs, "
                                  "L1 pruning for Volterra equalizers")
        object.__setattr__(self, "steps", tuple(float(s) for s in self.steps))

    @property
    def memory(self) -> int:
        if self.kind == "sdnne":
            return MlpDesign.parse(self.design).memory
        return VolterraDesign.parse(self.design).max_memory

    def to_dict(self) -> dict:
        out = asdict(self)
        out["steps"] = list(self.steps)
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    points: tuple[float, ...]
    equalizers: tuple[EqualizerSpec, ...]
    axis: str = "snr"
    symbol_rate_ghz: float = 92.0
    m: int = 3
    frame_length: int = DEFAULT_FRAME_LENGTH
    split: float = 0.5
    eval_frames: int = 6
    pre_fir: tuple[float, ...] = DEFAULT_PRE_FIR
    poly: tuple[float, ...] = DEFAULT_POLY
    post_fir: tuple[float, ...] = DEFAULT_POST_FIR
    captures: tuple[str, ...] = ()
    training: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.points and not self.captures:
            raise ConfigError("the sweep needs at least one point")
        if not self.equalizers:
            raise ConfigError("at least one equalizer is required")
        names = [e.name for e in self.equalizers]
        if len(set(names)) != len(names):
            raise ConfigError("equalizer names must be unique")
        if sum(e.kind == "le" for e in self.equalizers) > 1:
            raise ConfigError("at most one LE baseline")
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
        if not 1 <= self.m <= 6:
            raise ConfigError("m must lie in 1..6")
        if not 0 < self.split < 1:
            raise ConfigError("split must lie strictly between 0 and 1")
        if self.eval_frames < 1 or self.frame_length < 20:
            raise ConfigError("need at least one evaluation frame of 20 or more symbols")
        if self.captures and len(self.captures) != len(self.points):
            raise ConfigError("give one capture file per sweep point")
        if self.symbol_rate_ghz <= 0:
            raise ConfigError("symbol rate must be positive")

    @property
    def baseline(self) -> EqualizerSpec | None:
        return next((e for e in self.equalizers if e.kind == "le"), None)

    @property
    def guard(self) -> int:
        """Edge rows dropped from every evaluation, so all equalizers see the same symbols."""
        return max(e.memory for e in self.equalizers)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "channel": {"pre_fir": list(self.pre_fir), "poly": list(self.poly),
                        "post_fir": list(self.post_fir), "captures": list(self.captures)},
            "signal": {"m": self.m, "frame_length": self.frame_length, "split": self.split,
                       "eval_frames": self.eval_frames},
            "sweep": {"axis": self.axis, "points": list(self.points),
                      "symbol_rate_ghz": self.symbol_rate_ghz},
            "training": {k: v for k, v in self.training.to_dict().items() if k != "seed"},
            "equalizer": [e.to_dict() for e in self.equalizers],
        }


def _table(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _known(table: dict, allowed: set[str], where: str) -> None:
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def config_from_dict(data: dict, seed: int | None = None) -> ExperimentConfig:
    _known(data, {"seed", "channel", "signal", "sweep", "training", "equalizer"}, "config")
    channel = _table(data, "channel")
    signal = _table(data, "signal")
    sweep = _table(data, "sweep")
    training = _table(data, "training")
    _known(channel, {"pre_fir", "poly", "post_fir", "captures"}, "[channel]")
    _known(signal, {"m", "frame_length", "split", "eval_frames"}, "[signal]")
    _known(sweep, {"axis", "points", "symbol_rate_ghz"}, "[sweep]")
    _known(training, {"step", "beta1", "beta2", "eps", "batch_size", "max_epochs", "patience"},
           "[training]")
    eq_tables = data.get("equalizer", [])
    if not isinstance(eq_tables, list):
        raise ConfigError("[[equalizer]] must be an array of tables")
    allowed = {"name", "kind", "design", "objective", "activation", "itanh_points", "steps", "prune",
               "refit_output"}
    equalizers = []
    for i, t in enumerate(eq_tables):
        _known(t, allowed, f"equalizer #{i + 1}")
        if "kind" not in t or "design" not in t:
            raise ConfigError(f"equalizer #{i + 1} needs kind and design")
        spec = {"name": t.get("name", f"{t['kind']}-{t['design']}"), **t}
        spec["steps"] = tuple(spec.get("steps", ()))
        equalizers.append(EqualizerSpec(**spec))
    run_seed = int(data.get("seed", 0)) if seed is None else seed
    try:
        opt = AdamConfig(seed=run_seed, **training)
        poly = tuple(float(a) for a in channel.get("poly", DEFAULT_POLY))
        if len(poly) != 5:
            raise ConfigError("poly needs the five coefficients a1..a5")
        return ExperimentConfig(
            points=tuple(float(p) for p in sweep.get("points", ())),
            equalizers=tuple(equalizers),
            axis=sweep.get("axis", "snr"),
            symbol_rate_ghz=float(sweep.get("symbol_rate_ghz", 92.0)),
            m=int(signal.get("m", 3)),
            frame_length=int(signal.get("frame_length", DEFAULT_FRAME_LENGTH)),
            split=float(signal.get("split", 0.5)),
            eval_frames=int(signal.get("eval_frames", 6)),
            pre_fir=tuple(float(a) for a in channel.get("pre_fir", DEFAULT_PRE_FIR)),
            poly=poly,
            post_fir=tuple(float(a) for a in channel.get("post_fir", DEFAULT_POST_FIR)),
            captures=tuple(str(p) for p in channel.get("captures", ())),
            training=opt,
            seed=run_seed,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = config_from_dict(data, seed)
    base = path.parent
    if cfg.captures:
        resolved = tuple(str((base / p).resolve()) if not Path(p).is_absolute() else p
                         for p in cfg.captures)
        cfg = replace(cfg, captures=resolved)
    return cfg
