"""Optimizer and training loop.

Adam with global-norm gradient clipping and bias correction, decoupled
weight decay for the Cox-like model kinds only, and a projection of the
constrained tensors back onto the non-negative orthant after every step,
so the shape guarantees of the monotone networks hold throughout
training. Early stopping watches a moving average of validation-batch
losses and the returned model is the snapshot taken at that average's
minimum.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from monosurv.losses import LOSS_KINDS, LossConfig, loss_and_grads, loss_value
from monosurv.metrics import evaluate_all
from monosurv.models import build_model, split_samples

__all__ = [
    "COX_LIKE_KINDS",
    "TrainConfig",
    "AdamState",
    "TrainHistory",
    "TrainingDiverged",
    "SelectionResult",
    "clip_gradients",
    "adam_step",
    "train",
    "multi_run_select",
    "history_csv",
]

# kinds whose risk scores pass through an exponential; the ones the decay
# setting applies to.
COX_LIKE_KINDS = ("cox_nn", "cox_deep_nn", "ctx_nn")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Optimization settings."""

    lr: float = 1e-3
    clip_norm: float = 1.0
    batch_size: int = 8
    ma_window: int = 512
    patience: int = 8192
    max_steps: int = 200000
    weight_decay: float = 0.0
    loss_kind: str = "bce"
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "clip_norm"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("batch_size", "ma_window", "patience"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.max_steps < 0:
            raise ValueError(f"max_steps must be non-negative, got {self.max_steps}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(
                f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}"
            )


@dataclass
class AdamState:
    """Per-tensor moment accumulators."""

    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_model(cls, model) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in model.tensors.items()},
            v={name: np.zeros_like(arr) for name, arr in model.tensors.items()},
        )


@dataclass
class TrainHistory:
    """Loss traces and the stopping bookkeeping of one training run."""

    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    moving_average: list = field(default_factory=list)
    stop_reason: str = ""
    steps: int = 0
    best_step: int = 0
    best_moving_average: float = math.inf


class TrainingDiverged(RuntimeError):
    """Loss or gradients left the finite range; history rides along."""

    def __init__(self, message: str, history: TrainHistory | None = None):
        super().__init__(message)
        self.history = history


def clip_gradients(grads: dict, max_norm: float):
    """Scale the whole gradient so its global norm is at most max_norm.

    Returns the (possibly rescaled) gradients and the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


def adam_step(model, grads: dict, state: AdamState, cfg: TrainConfig) -> float:
    """One optimization step, in place; returns the pre-clip gradient norm.

    Order matters: clip, Adam update with bias correction, decoupled decay
    (Cox-like kinds only), then projection of the constrained tensors.
    """
    for name in grads:
        if not np.all(np.isfinite(grads[name])):
            raise TrainingDiverged(f"non-finite gradient in tensor {name!r}")
    grads, norm = clip_gradients(grads, cfg.clip_norm)
    state.step += 1
    correct1 = 1.0 - ADAM_BETA1**state.step
    correct2 = 1.0 - ADAM_BETA2**state.step
    decay = cfg.weight_decay if model.kind in COX_LIKE_KINDS else 0.0
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        tensor = model.tensors[name]
        tensor -= cfg.lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)
        if decay > 0.0:
            tensor *= 1.0 - cfg.lr * decay
    for name in model.constrained:
        np.maximum(model.tensors[name], 0.0, out=model.tensors[name])
    return norm


def _sample_batch(samples, rng, batch_size: int):
    idx = rng.integers(0, len(samples), size=batch_size)
    return [samples[i] for i in idx]


def train(model, train_samples, val_samples, cfg: TrainConfig):
    """Fit the model in place and return (model, history).

    Three independent seeded streams drive batch selection, the loss
    sampler, and validation batches, so histories reproduce bitwise for
    a fixed (seed, config, data) triple. The model that comes back holds
    the parameters from the step with the lowest validation moving
    average, not necessarily the last ones.
    """
    if not train_samples:
        raise ValueError("training split is empty")
    if not val_samples:
        raise ValueError("validation split is empty")
    batch_rng, loss_rng, val_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3)
    )
    state = AdamState.for_model(model)
    history = TrainHistory()
    best_tensors = model.copy_tensors()
    for step in range(1, cfg.max_steps + 1):
        batch = _sample_batch(train_samples, batch_rng, cfg.batch_size)
        loss, grads = loss_and_grads(model, batch, cfg.loss, loss_rng, cfg.loss_kind)
        history.train_loss.append(loss)
        if not math.isfinite(loss):
            history.stop_reason = "diverged"
            history.steps = step
            raise TrainingDiverged(
                f"training loss became {loss} at step {step}", history
            )
        try:
            adam_step(model, grads, state, cfg)
        except TrainingDiverged as err:
            history.stop_reason = "diverged"
            history.steps = step
            raise TrainingDiverged(f"step {step}: {err}", history) from None
        val_batch = _sample_batch(val_samples, val_rng, cfg.batch_size)
        val_loss = loss_value(model, val_batch, cfg.loss, val_rng, cfg.loss_kind)
        history.val_loss.append(val_loss)
        if not math.isfinite(val_loss):
            history.stop_reason = "diverged"
            history.steps = step
            raise TrainingDiverged(
                f"validation loss became {val_loss} at step {step}", history
            )
        window = history.val_loss[-cfg.ma_window :]
        average = float(np.mean(window))
        history.moving_average.append(average)
        if average < history.best_moving_average:
            history.best_moving_average = average
            history.best_step = step
            best_tensors = model.copy_tensors()
        if step - history.best_step >= cfg.patience:
            history.stop_reason = "patience"
            history.steps = step
            break
    else:
        history.stop_reason = "max_steps"
        history.steps = cfg.max_steps
    model.load_tensors(best_tensors)
    return model, history


def history_csv(history: TrainHistory) -> str:
    """Loss traces as CSV text (step, train loss, val loss, moving average)."""
    lines = ["step,train_loss,val_loss,moving_average"]
    for k, (tr, va, ma) in enumerate(
        zip(history.train_loss, history.val_loss, history.moving_average), start=1
    ):
        lines.append(f"{k},{tr!r},{va!r},{ma!r}")
    return "\n".join(lines) + "\n"


@dataclass
class SelectionResult:
    """Winner of a multi-run selection plus the per-run audit trail."""

    model: object
    report: object
    history: TrainHistory
    run_index: int
    seed: int
    mean_scores: list
    failures: list


def multi_run_select(
    kind: str,
    model_config,
    train_samples,
    val_samples,
    cfg: TrainConfig,
    n_runs: int = 5,
    grid_size: int = 65,
) -> SelectionResult:
    """Train n_runs fresh models (seeds cfg.seed .. cfg.seed + n_runs - 1)
    and keep the one with the best validation mean score."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be at least 1, got {n_runs}")
    X, _, _ = split_samples(train_samples)
    feature_dim = X.shape[1]
    runs = []
    scores = []
    failures = []
    for i in range(n_runs):
        seed = cfg.seed + i
        model = build_model(kind, feature_dim, model_config, seed=seed)
        try:
            model, history = train(model, train_samples, val_samples, replace(cfg, seed=seed))
        except TrainingDiverged as err:
            failures.append(f"run {i} (seed {seed}): {err}")
            continue
        report = evaluate_all(model, val_samples, grid_size=grid_size)
        scores.append(report["mean_score"])
        runs.append((report["mean_score"], i, seed, model, report, history))
    if not runs:
        raise TrainingDiverged("every run diverged:\n" + "\n".join(failures))
    best = max(runs, key=lambda r: r[0])
    return SelectionResult(
        model=best[3],
        report=best[4],
        history=best[5],
        run_index=best[1],
        seed=best[2],
        mean_scores=scores,
        failures=failures,
    )
