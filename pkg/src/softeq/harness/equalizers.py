"""Fit, apply and serialize one equalizer as described by an EqualizerSpec."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import sdnne
from ..analysis import ComplexityReport, multiplier_count
from ..demapper import MlaDemapper
from ..modem import BitFrame, GrayPamMap
from ..optim import AdamConfig, TrainTrace
from ..sdnne import ITANH, TANH, MlpDesign, MlpModel, PruningSchedule
from ..volterra import (MSE, Bitwise, VolterraDesign, VolterraModel, default_demapper, fit_gd,
                        fit_ls, predict, prune_l1)
from .config import EqualizerSpec

log = logging.getLogger(__name__)

SDNNE_STEPS = (1e-2, 1e-3)
BITWISE_STEPS = (3e-5,)
MSE_STEPS = (1e-3,)


@dataclass
class TrainedEqualizer:
    spec: EqualizerSpec
    model: VolterraModel | MlpModel
    demapper: MlaDemapper | None = None
    traces: list[TrainTrace] = field(default_factory=list)

    @property
    def m(self) -> int:
        if isinstance(self.model, MlpModel):
            return self.model.design.layer_sizes[-1]
        return self.demapper.gray_map.bits_per_symbol

    def llrs(self, y: np.ndarray) -> np.ndarray:
        """Soft bits for every symbol of a received frame (n x m)."""
        if isinstance(self.model, MlpModel):
            return sdnne.llrs(self.model, y).llrs
        return self.demapper.llrs(predict(self.model, y).symbols)

    def complexity(self) -> ComplexityReport:
        return multiplier_count(self.model, with_mla=True, m=self.m)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "model": self.model.to_dict(),
            "demapper": None if self.demapper is None else self.demapper.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> TrainedEqualizer:
        spec_data = dict(data["spec"])
        spec_data["steps"] = tuple(spec_data.get("steps", ()))
        spec = EqualizerSpec(**spec_data)
        if spec.kind == "sdnne":
            model = MlpModel.from_dict(data["model"])
        else:
            model = VolterraModel.from_dict(data["model"])
        demapper = None if data.get("demapper") is None else MlaDemapper.from_dict(data["demapper"])
        return cls(spec, model, demapper)


def _stages(steps: tuple[float, ...], default: tuple[float, ...]) -> tuple[float, ...]:
    return steps if steps else default


def _fit_volterra(spec: EqualizerSpec, y, x, bits: BitFrame, gray_map: GrayPamMap,
                  opt: AdamConfig, split: float) -> TrainedEqualizer:
    design = VolterraDesign.parse(spec.design)
    n_tr = int(round(split * y.size))
    traces = []
    if spec.objective == "mse":
        model = None
        for step in _stages(spec.steps, MSE_STEPS):
            model, _, tr = fit_gd(design, y, x, MSE, opt.replace(step=step), split, init=model)
            traces.append(tr)
    else:
        model = fit_ls(design, y[:n_tr], x[:n_tr])
    demapper = default_demapper(gray_map, model, y[:n_tr], x[:n_tr])
    if spec.prune is not None:
        p = spec.prune
        model, tr = prune_l1(design, y, x, float(p.get("lam", 1e-4)),
                             float(p.get("threshold", 1e-3)), opt, split, init=model)
        traces.append(tr)
        demapper = default_demapper(gray_map, model, y[:n_tr], x[:n_tr])
    if spec.objective == "bitwise":
        # start from the LS / fixed-demapper optimum and refine both jointly
        demapper = demapper.as_trained()
        for step in _stages(spec.steps, BITWISE_STEPS):
            model, demapper, tr = fit_gd(design, y, x, Bitwise(demapper, bits),
                                         opt.replace(step=step), split, init=model,
                                         mask=model.mask)
            traces.append(tr)
    return TrainedEqualizer(spec, model, demapper, traces)


def _prune_schedule(spec: EqualizerSpec, n_train: int, opt: AdamConfig) -> PruningSchedule:
    p = spec.prune
    steps_per_epoch = math.ceil(n_train / opt.batch_size)
    return PruningSchedule(
        initial_sparsity=float(p.get("initial_sparsity", 0.0)),
        final_sparsity=float(p.get("final_sparsity", 0.2)),
        start_step=int(p.get("start_step", 0)),
        n_steps=int(p.get("n_steps", 10)),
        interval=int(p.get("interval", 2 * steps_per_epoch)),
    )


def _fit_sdnne(spec: EqualizerSpec, y, bits: BitFrame, opt: AdamConfig,
               split: float) -> TrainedEqualizer:
    # interpolated tanh reuses the tanh-trained parameters without retraining
    train_act = TANH if spec.activation == ITANH else spec.activation
    design = MlpDesign.parse(spec.design, train_act, spec.itanh_points)
    traces = []
    model = None
    for step in _stages(spec.steps, SDNNE_STEPS):
        model, tr = sdnne.train(design, y, bits, opt.replace(step=step), split, init=model)
        traces.append(tr)
    if spec.refit_output:
        model, tr = sdnne.refit_output(model, y, bits, sdnne.OUTPUT_REFIT.replace(seed=opt.seed),
                                       split)
        traces.append(tr)
    if spec.prune is not None:
        rows = y.size - 2 * design.memory
        n_train = int(round(split * rows))
        schedule = _prune_schedule(spec, n_train, opt)
        steps_per_epoch = math.ceil(n_train / opt.batch_size)
        epochs = max(opt.max_epochs, math.ceil((schedule.end_step + 1) / steps_per_epoch)
                     + opt.patience + 1)
        prune_opt = opt.replace(step=_stages(spec.steps, SDNNE_STEPS)[-1], max_epochs=epochs)
        model, tr, _ = sdnne.prune_gradual(model, y, bits, schedule, prune_opt, split)
        traces.append(tr)
    if spec.activation == ITANH:
        model = model.with_activation(ITANH, spec.itanh_points)
    return TrainedEqualizer(spec, model, None, traces)


def fit_equalizer(spec: EqualizerSpec, y: np.ndarray, x: np.ndarray, bits: BitFrame,
                  gray_map: GrayPamMap, opt: AdamConfig = AdamConfig(),
                  split: float = 0.5) -> TrainedEqualizer:
    """Train on the first ``split`` of one received frame, validate on the rest."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    log.debug("fitting %s (%s %s)", spec.name, spec.kind, spec.design)
    if spec.kind == "sdnne":
        return _fit_sdnne(spec, y, bits, opt, split)
    return _fit_volterra(spec, y, x, bits, gray_map, opt, split)
