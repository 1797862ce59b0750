"""Soft deep-neural-network equalizer (SDNNE).

A fully connected network maps a symmetric delay-line window of ``2M+1``
received samples to ``m`` LLRs (linear output layer). Training minimizes the
mean bitwise equivocation with ADAM; gradients come from a hand-written
backward pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .demapper import LlrBlock
from .losses import equivocation_grad, equivocation_loss
from .modem import BitFrame, SymbolFrame
from .optim import AdamConfig, TrainTrace, minimize
from .volterra import delay_line

log = logging.getLogger(__name__)

TANH = "tanh"
ITANH = "itanh"
HTANH = "htanh"
RELU = "relu"
LINEAR = "linear"
ACTIVATIONS = (TANH, ITANH, HTANH, RELU, LINEAR)
ITANH_RANGE = 4.0

EQUIVOCATION = "equivocation"
MSE = "mse"


@dataclass(frozen=True)
class MlpDesign:
    """Layer sizes ``s_1|...|s_d`` and the hidden-layer activation."""

    layer_sizes: tuple[int, ...]
    activation: str = TANH
    itanh_points: int = 16

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.itanh_points < 2:
            raise ValueError("interpolated tanh needs at least 2 points")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def parse(cls, text: str, activation: str = TANH, itanh_points: int = 16) -> MlpDesign:
        """From the ``17|16|10|3`` notation."""
        try:
            sizes = tuple(int(s) for s in str(text).split("|"))
        except ValueError as exc:
            raise ValueError(f"bad SDNNE design {text!r}: {exc}") from None
        return cls(sizes, activation, itanh_points)

    def __str__(self) -> str:
        return "|".join(str(s) for s in self.layer_sizes)

    @property
    def memory(self) -> int:
        """Delay-line memory ``M``; only odd input sizes form a symmetric window."""
        if self.layer_sizes[0] % 2 == 0:
            raise ValueError("input layer must be a symmetric window of 2M+1 taps")
        return (self.layer_sizes[0] - 1) // 2

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def with_activation(self, activation: str, itanh_points: int | None = None) -> MlpDesign:
        return MlpDesign(self.layer_sizes, activation,
                         self.itanh_points if itanh_points is None else itanh_points)


def itanh_table(points: int) -> tuple[np.ndarray, np.ndarray]:
    xs = np.linspace(-ITANH_RANGE, ITANH_RANGE, points)
    return xs, np.tanh(xs)


def activate(kind: str, z: np.ndarray, points: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Activation value and derivative."""
    if kind == TANH:
        a = np.tanh(z)
        return a, 1.0 - a * a
    if kind == HTANH:
        return np.clip(z, -1.0, 1.0), (np.abs(z) < 1.0).astype(float)
    if kind == RELU:
        return np.maximum(z, 0.0), (z > 0).astype(float)
    if kind == LINEAR:
        return z, np.ones_like(z)
    if kind == ITANH:
        xs, ys = itanh_table(points)
        slopes = np.diff(ys) / np.diff(xs)
        seg = np.clip(np.searchsorted(xs, z, side="right") - 1, 0, points - 2)
        inside = (z > xs[0]) & (z < xs[-1])
        return np.interp(z, xs, ys), np.where(inside, slopes[seg], 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def kinks(kind: str, points: int = 16) -> np.ndarray:
    """Pre-activation values where the activation is not differentiable."""
    if kind == HTANH:
        return np.array([-1.0, 1.0])
    if kind == RELU:
        return np.array([0.0])
    if kind == ITANH:
        return itanh_table(points)[0]
    return np.empty(0)


@dataclass
class MlpModel:
    design: MlpDesign
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    masks: list[np.ndarray] | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        sizes = self.design.layer_sizes
        self.weights = [np.array(w, dtype=float).reshape(sizes[l + 1], sizes[l])
                        for l, w in enumerate(self.weights)]
        self.biases = [np.array(b, dtype=float).reshape(sizes[l + 1])
                       for l, b in enumerate(self.biases)]
        if len(self.weights) != self.design.n_layers or len(self.biases) != self.design.n_layers:
            raise ValueError("parameter count does not match the design")
        if self.masks is None:
            self.masks = [np.ones(w.shape, dtype=bool) for w in self.weights]
        self.masks = [np.array(mk, dtype=bool).reshape(w.shape)
                      for mk, w in zip(self.masks, self.weights)]
        for w, mk in zip(self.weights, self.masks):
            w[~mk] = 0.0

    @classmethod
    def initialize(cls, design: MlpDesign, seed: int = 0) -> MlpModel:
        rng = np.random.default_rng([seed, 7])
        sizes = design.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(design, weights, biases)

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{l}"] = w.copy()
            out[f"b{l}"] = b.copy()
        return out

    def param_masks(self) -> dict[str, np.ndarray]:
        return {f"W{l}": mk.astype(float) for l, mk in enumerate(self.masks)}

    @classmethod
    def from_params(cls, design: MlpDesign, params, masks=None) -> MlpModel:
        n = design.n_layers
        ws = [params[f"W{l}"].copy() for l in range(n)]
        bs = [params[f"b{l}"].copy() for l in range(n)]
        mk = None if masks is None else [masks[f"W{l}"] > 0 for l in range(n)]
        return cls(design, ws, bs, mk)

    def with_activation(self, activation: str, itanh_points: int | None = None) -> MlpModel:
        """Same parameters under another activation (no retraining)."""
        return MlpModel(self.design.with_activation(activation, itanh_points),
                        [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        [mk.copy() for mk in self.masks])

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    @property
    def active_weights(self) -> int:
        return int(sum(mk.sum() for mk in self.masks))

    @property
    def sparsity(self) -> float:
        return 1.0 - self.active_weights / self.n_weights

    def to_dict(self) -> dict:
        d = self.design
        out = {
            "design": str(d),
            "activation": d.activation,
            "itanh_points": d.itanh_points,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "masks": [mk.astype(int).tolist() for mk in self.masks],
        }
        if d.activation == ITANH:
            xs, ys = itanh_table(d.itanh_points)
            out["itanh_table"] = {"x": xs.tolist(), "y": ys.tolist()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> MlpModel:
        design = MlpDesign.parse(data["design"], data["activation"], int(data.get("itanh_points", 16)))
        return cls(design, data["weights"], data["biases"], data.get("masks"))


def _forward(params, design: MlpDesign, a: np.ndarray, keep: bool = False):
    n = design.n_layers
    cache = []
    for l in range(n):
        z = a @ params[f"W{l}"].T + params[f"b{l}"]
        if l < n - 1:
            a_new, da = activate(design.activation, z, design.itanh_points)
        else:
            a_new, da = z, None
        if keep:
            cache.append((a, z, da))
        a = a_new
    return a, cache


def forward(model: MlpModel, window: np.ndarray) -> np.ndarray:
    """Network output for one window (1-d) or a batch of windows (2-d)."""
    x = np.asarray(window, dtype=float)
    if x.shape[-1] != model.design.layer_sizes[0]:
        raise ValueError(f"window length {x.shape[-1]} != {model.design.layer_sizes[0]} inputs")
    out, _ = _forward(model.params(), model.design, np.atleast_2d(x))
    return out[0] if x.ndim == 1 else out


def _backward(params, design: MlpDesign, cache, upstream: np.ndarray) -> dict[str, np.ndarray]:
    grads = {}
    delta = upstream
    for l in range(design.n_layers - 1, -1, -1):
        a_prev, _, _ = cache[l]
        grads[f"W{l}"] = delta.T @ a_prev
        grads[f"b{l}"] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params[f"W{l}"]) * cache[l - 1][2]
    return grads


def input_gradient(model: MlpModel, window: np.ndarray) -> np.ndarray:
    """Jacobian ``d output_j / d input_i`` (m x s_1), by reverse mode."""
    params = model.params()
    x = np.atleast_2d(np.asarray(window, dtype=float))
    out, cache = _forward(params, model.design, x, keep=True)
    jac = np.empty((out.shape[1], x.shape[1]))
    for j in range(out.shape[1]):
        delta = np.zeros_like(out)
        delta[:, j] = 1.0
        for l in range(model.design.n_layers - 1, -1, -1):
            delta = delta @ params[f"W{l}"]
            if l > 0:
                delta = delta * cache[l - 1][2]
        jac[j] = delta[0]
    return jac


def batch_input_gradient(model: MlpModel, windows: np.ndarray) -> np.ndarray:
    """Input Jacobians for a batch of windows, shape (B, m, s_1)."""
    params = model.params()
    x = np.asarray(windows, dtype=float)
    out, cache = _forward(params, model.design, x, keep=True)
    m = out.shape[1]
    jac = np.empty((x.shape[0], m, x.shape[1]))
    for j in range(m):
        delta = np.zeros_like(out)
        delta[:, j] = 1.0
        for l in range(model.design.n_layers - 1, -1, -1):
            delta = delta @ params[f"W{l}"]
            if l > 0:
                delta = delta * cache[l - 1][2]
        jac[:, j, :] = delta
    return jac


def _loss_and_upstream(out: np.ndarray, target: np.ndarray, loss: str):
    if loss == EQUIVOCATION:
        value = float(equivocation_loss(target, out).mean())
        return value, equivocation_grad(target, out) / out.size
    if loss == MSE:
        err = out - target
        return float(np.mean(err**2)), 2.0 * err / err.size
    raise ValueError(f"unknown loss {loss!r}")


def backprop_gradient(model: MlpModel, windows: np.ndarray, target: np.ndarray,
                      loss: str = EQUIVOCATION) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and its exact parameter gradient.

    ``target`` holds the transmitted bits (equivocation) or the desired
    outputs (MSE). Masked weights get zero gradient.
    """
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    if windows.shape[0] == 0:
        raise ValueError("empty batch")
    params = model.params()
    out, cache = _forward(params, model.design, windows, keep=True)
    value, up = _loss_and_upstream(out, np.asarray(target, dtype=float).reshape(out.shape), loss)
    grads = _backward(params, model.design, cache, up)
    for l, mk in enumerate(model.masks):
        grads[f"W{l}"] *= mk
    return value, grads


def mean_loss(model: MlpModel, windows: np.ndarray, target: np.ndarray,
              loss: str = EQUIVOCATION) -> float:
    out = forward(model, windows)
    return _loss_and_upstream(np.atleast_2d(out), np.asarray(target, dtype=float)
                              .reshape(np.atleast_2d(out).shape), loss)[0]


def windows_for(model_or_design, y: SymbolFrame | np.ndarray) -> np.ndarray:
    design = model_or_design.design if isinstance(model_or_design, MlpModel) else model_or_design
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    return delay_line(values, design.memory)


def llrs(model: MlpModel, y: SymbolFrame | np.ndarray, bits: BitFrame | None = None) -> LlrBlock:
    return LlrBlock(np.atleast_2d(forward(model, windows_for(model, y))), bits)


@dataclass(frozen=True)
class PruningSchedule:
    """Gradual magnitude pruning: sparsity ramps from ``initial`` to ``final``.

    Pruning happens every ``interval`` training steps starting at
    ``start_step``, ``n_steps`` times, following a cubic ramp.
    """

    initial_sparsity: float = 0.0
    final_sparsity: float = 0.2
    start_step: int = 0
    n_steps: int = 10
    interval: int = 100

    def __post_init__(self):
        if not 0.0 <= self.initial_sparsity <= self.final_sparsity < 1.0:
            raise ValueError("need 0 <= initial sparsity <= final sparsity < 1")
        if self.n_steps < 1 or self.interval < 1 or self.start_step < 0:
            raise ValueError("pruning needs n_steps >= 1, interval >= 1, start_step >= 0")

    @property
    def end_step(self) -> int:
        return self.start_step + self.n_steps * self.interval

    def sparsity_at(self, step: int) -> float:
        if step < self.start_step:
            return self.initial_sparsity
        frac = min((step - self.start_step) / (self.n_steps * self.interval), 1.0)
        return self.final_sparsity + (self.initial_sparsity - self.final_sparsity) * (1.0 - frac) ** 3

    def is_pruning_step(self, step: int) -> bool:
        return (self.start_step <= step <= self.end_step
                and (step - self.start_step) % self.interval == 0)


def _split_rows(n: int, guard: int, split: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < split < 1:
        raise ValueError("split must lie strictly between 0 and 1")
    rows = np.arange(guard, max(n - guard, guard))
    if rows.size < 10:
        raise ValueError(f"only {rows.size} usable windows; need at least 10")
    n_tr = int(round(split * rows.size))
    if n_tr < 1 or n_tr >= rows.size:
        raise ValueError("split leaves no training or validation windows")
    return rows[:n_tr], rows[n_tr:]


def _targets(bits, target, loss: str, n: int) -> np.ndarray:
    if loss == EQUIVOCATION:
        b = bits.bits if isinstance(bits, BitFrame) else np.asarray(bits)
        out = np.asarray(b, dtype=float)
    else:
        t = target if target is not None else bits
        t = t.symbols if isinstance(t, SymbolFrame) else np.asarray(t, dtype=float)
        out = t.reshape(t.shape[0], -1)
    if out.shape[0] != n:
        raise ValueError("training targets are not aligned with the symbols")
    return out


def _fit(model: MlpModel, wins: np.ndarray, targ: np.ndarray, tr, va, opt: AdamConfig,
         loss: str, on_step=None, min_steps: int = 0, masks=None):
    design = model.design
    params = model.params()
    masks = model.param_masks() if masks is None else masks
    x_tr, t_tr = wins[tr], targ[tr]
    x_va, t_va = wins[va], targ[va]

    def loss_grad(p, rows):
        out, cache = _forward(p, design, x_tr[rows], keep=True)
        value, up = _loss_and_upstream(out, t_tr[rows], loss)
        return value, _backward(p, design, cache, up)

    def val_loss(p):
        out, _ = _forward(p, design, x_va)
        return _loss_and_upstream(out, t_va, loss)[0]

    trace = minimize(params, loss_grad, val_loss, tr.size, opt, masks=masks,
                     on_step=on_step, min_steps=min_steps)
    return MlpModel.from_params(design, params, masks), trace


def train(design: MlpDesign, y: SymbolFrame | np.ndarray, bits: BitFrame | np.ndarray | None,
          opt: AdamConfig = AdamConfig(), split: float = 0.5, loss: str = EQUIVOCATION,
          target: SymbolFrame | np.ndarray | None = None, init: MlpModel | None = None,
          guard: int | None = None) -> tuple[MlpModel, TrainTrace]:
    """Fit the network on the first ``split`` of the windows.

    With ``loss="equivocation"`` the outputs are trained as LLRs of ``bits``;
    with ``loss="mse"`` they regress ``target``. The first and last ``guard``
    windows (default ``M``) are skipped. Returns the best-validation model.
    """
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    guard = design.memory if guard is None else guard
    tr, va = _split_rows(values.size, guard, split)
    targ = _targets(bits, target, loss, values.size)
    if targ.shape[1] != design.layer_sizes[-1]:
        raise ValueError(f"design has {design.layer_sizes[-1]} outputs, targets have {targ.shape[1]}")
    model = MlpModel.initialize(design, opt.seed) if init is None else init
    fitted, trace = _fit(model, delay_line(values, design.memory), targ, tr, va, opt, loss)
    fitted.info = {"loss": loss, "best_epoch": trace.best_epoch}
    return fitted, trace


OUTPUT_REFIT = AdamConfig(step=1e-2, batch_size=4096, max_epochs=500)


def refit_output(model: MlpModel, y: SymbolFrame | np.ndarray, bits: BitFrame | np.ndarray,
                 opt: AdamConfig = OUTPUT_REFIT, split: float = 0.5,
                 guard: int | None = None) -> tuple[MlpModel, TrainTrace]:
    """Retrain only the linear output layer on frozen hidden features.

    With the hidden layers fixed the equivocation loss is convex in the
    output weights, so this stage settles the overall LLR scale that joint
    training approaches only slowly.
    """
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    design = model.design
    guard = design.memory if guard is None else guard
    tr, va = _split_rows(values.size, guard, split)
    targ = _targets(bits, None, EQUIVOCATION, values.size)
    params = model.params()
    last = design.n_layers - 1
    feats = delay_line(values, design.memory)
    for l in range(last):
        feats = activate(design.activation, feats @ params[f"W{l}"].T + params[f"b{l}"],
                         design.itanh_points)[0]
    f_tr, t_tr, f_va, t_va = feats[tr], targ[tr], feats[va], targ[va]
    head = {"W": params[f"W{last}"], "b": params[f"b{last}"]}

    def loss_grad(p, rows):
        a = f_tr[rows]
        value, up = _loss_and_upstream(a @ p["W"].T + p["b"], t_tr[rows], EQUIVOCATION)
        return value, {"W": up.T @ a, "b": up.sum(axis=0)}

    def val_loss(p):
        return _loss_and_upstream(f_va @ p["W"].T + p["b"], t_va, EQUIVOCATION)[0]

    mask = {"W": model.masks[last].astype(float)}
    trace = minimize(head, loss_grad, val_loss, tr.size, opt, masks=mask)
    params[f"W{last}"], params[f"b{last}"] = head["W"], head["b"]
    refit = MlpModel.from_params(design, params, model.param_masks())
    refit.info = {**model.info, "output_refit_epoch": trace.best_epoch}
    return refit, trace


def _prune_to(params, masks, sparsity: float) -> None:
    for name, mk in masks.items():
        w = params[name]
        k = min(math.ceil(sparsity * w.size - 1e-9), w.size)
        if k <= 0:
            continue
        order = np.argsort(np.abs(w), axis=None, kind="stable")
        flat = mk.reshape(-1)
        flat[order[:k]] = 0.0
        w *= mk


def prune_gradual(model: MlpModel, y: SymbolFrame | np.ndarray, bits: BitFrame | np.ndarray,
                  schedule: PruningSchedule, opt: AdamConfig = AdamConfig(), split: float = 0.5,
                  guard: int | None = None,
                  ) -> tuple[MlpModel, TrainTrace, list[tuple[int, float]]]:
    """Continue training while masking the smallest weights on a cubic schedule.

    Every weight matrix is pruned to the scheduled sparsity (rounded up to
    whole weights) at each pruning step; training then fine-tunes the
    survivors. Returns the model, the loss trace and ``(step, sparsity)``
    after every pruning event.
    """
    values = y.symbols if isinstance(y, SymbolFrame) else np.asarray(y, dtype=float)
    design = model.design
    guard = design.memory if guard is None else guard
    tr, va = _split_rows(values.size, guard, split)
    steps_per_epoch = math.ceil(tr.size / opt.batch_size)
    if schedule.end_step > opt.max_epochs * steps_per_epoch:
        raise ValueError(
            f"schedule ends at step {schedule.end_step} but training stops after "
            f"{opt.max_epochs * steps_per_epoch} steps"
        )
    targ = _targets(bits, None, EQUIVOCATION, values.size)
    masks = model.param_masks()
    total = sum(mk.size for mk in masks.values())
    sparsity_trace: list[tuple[int, float]] = []

    def on_step(step, params):
        # step 0 of the schedule coincides with the first update
        if not schedule.is_pruning_step(step - 1):
            return False
        _prune_to(params, masks, schedule.sparsity_at(step - 1))
        zeros = total - sum(mk.sum() for mk in masks.values())
        sparsity_trace.append((step - 1, float(zeros / total)))
        return True

    pruned, trace = _fit(model, delay_line(values, design.memory), targ, tr, va, opt,
                         EQUIVOCATION, on_step=on_step, min_steps=schedule.end_step + 1,
                         masks=masks)
    pruned.info = {"sparsity": pruned.sparsity, "schedule": schedule.__dict__.copy()}
    log.info("gradual pruning reached sparsity %.3f", pruned.sparsity)
    return pruned, trace, sparsity_trace
