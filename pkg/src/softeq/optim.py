"""ADAM optimizer and the minibatch training loop shared by all trainable blocks."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class AdamConfig:
    step: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 512
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step size must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decays must lie in (0, 1)")
        if self.eps <= 0 or self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("invalid ADAM configuration")

    def replace(self, **changes) -> AdamConfig:
        return AdamConfig(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainTrace:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, trace: TrainTrace):
        super().__init__(message)
        self.trace = trace


class Adam:
    def __init__(self, params: Params, cfg: AdamConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params, masks: Params | None = None) -> None:
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            params[k] -= cfg.step * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
            if masks is not None and k in masks:
                params[k] *= masks[k]


LossGrad = Callable[[Params, np.ndarray], tuple[float, Params]]


def minimize(
    params: Params,
    loss_grad: LossGrad,
    val_loss: Callable[[Params], float],
    n_rows: int,
    cfg: AdamConfig,
    masks: Params | None = None,
    on_step: Callable[[int, Params], bool] | None = None,
    min_steps: int = 0,
) -> TrainTrace:
    """Minibatch ADAM over ``n_rows`` training rows, in place on ``params``.

    ``loss_grad(params, rows)`` returns the batch loss and gradients. The
    parameters with the lowest validation loss are restored at the end.
    ``on_step(step, params)`` runs after every update; returning True marks
    a structural change (pruning), which restarts best-parameter tracking.
    Early stopping is suppressed until ``min_steps`` updates have run.
    """
    trace = TrainTrace()
    if cfg.max_epochs == 0 or n_rows == 0:
        return trace
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(params, cfg)
    best_val = val_loss(params)
    best = {k: v.copy() for k, v in params.items()}
    stagnant = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_rows)
        total = 0.0
        for start in range(0, n_rows, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            loss, grads = loss_grad(params, rows)
            if not np.isfinite(loss):
                trace.train_loss.append(float(loss))
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}", trace)
            if masks is not None:
                for k, mk in masks.items():
                    grads[k] = grads[k] * mk
            opt.step(params, grads, masks)
            trace.steps += 1
            total += loss * rows.size
            if on_step is not None and on_step(trace.steps, params):
                best_val = np.inf
                stagnant = 0
        trace.train_loss.append(total / n_rows)
        val = val_loss(params)
        trace.val_loss.append(float(val))
        if not np.isfinite(val):
            raise TrainingDiverged(f"validation loss became {val} at epoch {epoch}", trace)
        if val < best_val:
            best_val = val
            best = {k: v.copy() for k, v in params.items()}
            trace.best_epoch = epoch
            stagnant = 0
        else:
            stagnant += 1
            if stagnant >= cfg.patience and trace.steps >= min_steps:
                log.debug("early stop at epoch %d (best %d)", epoch, trace.best_epoch)
                break
    for k in params:
        params[k][...] = best[k]
    return trace
