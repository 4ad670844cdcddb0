"""Training losses over survival-curve graphs.

Two estimators drive training on right-censored samples:

* BCE survival loss: each sample contributes a binary cross-entropy term at
  a random time. Censored samples stay at their censoring time on the
  premortem side; event samples flip a fair coin between a premortem draw
  (observed time minus half-normal noise, clipped at zero) and a postmortem
  draw (observed time plus half-normal noise). The premortem term carries
  weight (1 - w), the postmortem term weight w. One draw per sample per call.

* SuMo loss: negative log-likelihood with the event density down-weighted by
  gamma, evaluated at the observed times (no sampling).

A third, deterministic loss fits survival probabilities at explicit
(time, target) points and exists for the hand-drawn-curve toy experiment.

Losses are expression graphs too: the model's survival graph is instantiated
once per needed time column (parameters are shared by name), clamped away
from {0, 1}, and reduced with a batch mean, so one reverse sweep returns
every parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from monosurv import autodiff as ad
from monosurv.models import GraphSurvivalModel, split_samples

__all__ = [
    "LossConfig",
    "sample_event_time",
    "bce_loss_graph",
    "bce_bindings",
    "bce_survival_loss",
    "bce_loss_and_grads",
    "sumo_loss_graph",
    "sumo_bindings",
    "sumo_loss",
    "sumo_loss_and_grads",
    "point_bce_graph",
    "point_bce_bindings",
    "point_target_bce_loss",
    "point_target_bce_grads",
    "loss_and_grads",
]

LOSS_KINDS = ("bce", "sumo")


@dataclass
class LossConfig:
    """Knobs shared by the losses.

    sigma_factor scales the half-normal noise relative to t_max (the time
    scale the model is trained on); bce_weight is the postmortem weight w;
    gamma down-weights the density term of the SuMo loss; clamp_eps keeps
    probabilities and densities inside the log domain.
    """

    sigma_factor: float = 0.5
    bce_weight: float = 0.5
    gamma: float = 1.0
    clamp_eps: float = 1e-7
    t_max: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.sigma_factor:
            raise ValueError(f"sigma_factor must be non-negative, got {self.sigma_factor}")
        if not 0.0 <= self.bce_weight <= 1.0:
            raise ValueError(f"bce_weight must lie in [0, 1], got {self.bce_weight}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.clamp_eps <= 1e-3:
            raise ValueError(f"clamp_eps must lie in (0, 1e-3], got {self.clamp_eps}")
        if not self.t_max > 0.0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")

    @property
    def sigma(self) -> float:
        return self.sigma_factor * self.t_max


def sample_event_time(event: int, time: float, sigma: float, side: str, rng) -> float:
    """One draw from the premortem or postmortem time distribution.

    Premortem: the censoring time itself for censored samples; for events,
    the observed time minus folded Gaussian noise, clipped at zero.
    Postmortem (events only): the observed time plus folded Gaussian noise.
    """
    if side not in ("pre", "post"):
        raise ValueError(f"side must be 'pre' or 'post', got {side!r}")
    if sigma < 0.0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if event not in (0, 1):
        raise ValueError(f"event must be 0 or 1, got {event}")
    if side == "pre":
        if event == 0:
            return float(time)
        return max(0.0, float(time) - sigma * abs(rng.standard_normal()))
    if event == 0:
        raise ValueError("censored samples have no postmortem distribution")
    return float(time) + sigma * abs(rng.standard_normal())


# ---------------------------------------------------------------------------
# Graph pieces


def _clamp_below(v: ad.Expr, lo: float) -> ad.Expr:
    return ad.add(ad.const(lo), ad.relu(ad.sub(v, ad.const(lo))))


def _clamp_unit(v: ad.Expr, eps: float) -> ad.Expr:
    hi = 1.0 - eps
    lifted = _clamp_below(v, eps)
    return ad.sub(ad.const(hi), ad.relu(ad.sub(ad.const(hi), lifted)))


def _require_graph_model(model):
    if not isinstance(model, GraphSurvivalModel):
        raise TypeError(f"model kind {model.kind!r} has no trainable loss graph")


def _grad_names(model):
    return sorted(model.tensors)


def bce_loss_graph(model, clamp_eps: float = 1e-7) -> ad.Expr:
    """Mean of w_pre * (-log S(t_minus)) + w_post * (-log(1 - S(t_plus)))."""
    _require_graph_model(model)

    def build():
        s_minus = _clamp_unit(model.survival_graph("t_minus", "x"), clamp_eps)
        s_plus = _clamp_unit(model.survival_graph("t_plus", "x"), clamp_eps)
        pre = ad.hadamard(ad.inp("w_pre"), ad.neg(ad.log(s_minus)))
        post = ad.hadamard(
            ad.inp("w_post"), ad.neg(ad.log(ad.sub(ad.const(1.0), s_plus)))
        )
        return ad.mean_all(ad.add(pre, post))

    return model.graph_cache(("loss", "bce", clamp_eps), build)


def bce_bindings(model, samples, cfg: LossConfig, rng) -> dict:
    """Input bindings for one stochastic evaluation of the BCE loss."""
    X, event, time = split_samples(samples)
    n = X.shape[0]
    t_minus = np.empty((n, 1))
    t_plus = np.empty((n, 1))
    w_pre = np.zeros((n, 1))
    w_post = np.zeros((n, 1))
    w = cfg.bce_weight
    sigma = cfg.sigma
    for i in range(n):
        if event[i] == 0:
            t_minus[i, 0] = time[i]
            t_plus[i, 0] = time[i]
            w_pre[i, 0] = 1.0 - w
        elif rng.random() < 0.5:
            t_minus[i, 0] = sample_event_time(1, time[i], sigma, "pre", rng)
            t_plus[i, 0] = time[i]
            w_pre[i, 0] = 1.0 - w
        else:
            t_minus[i, 0] = time[i]
            t_plus[i, 0] = sample_event_time(1, time[i], sigma, "post", rng)
            w_post[i, 0] = w
    bindings = dict(model.tensors)
    bindings.update(model.extra_bindings(X))
    bindings.update(
        {"x": X, "t_minus": t_minus, "t_plus": t_plus, "w_pre": w_pre, "w_post": w_post}
    )
    return bindings


def bce_survival_loss(model, samples, cfg: LossConfig, rng) -> float:
    expr = bce_loss_graph(model, cfg.clamp_eps)
    return ad.eval_graph(expr, bce_bindings(model, samples, cfg, rng)).item()


def bce_loss_and_grads(model, samples, cfg: LossConfig, rng):
    expr = bce_loss_graph(model, cfg.clamp_eps)
    bindings = bce_bindings(model, samples, cfg, rng)
    grads = ad.gradient(expr, bindings, _grad_names(model))
    return expr.val.item(), grads


def sumo_loss_graph(model, clamp_eps: float = 1e-7) -> ad.Expr:
    """Mean of -gamma * e * log f(T) - (1 - e) * log S(T), via the symbolic
    time derivative of the survival graph for f."""
    _require_graph_model(model)

    def build():
        density = _clamp_below(model.density_graph("t", "x"), clamp_eps)
        survival = _clamp_below(model.survival_graph("t", "x"), clamp_eps)
        event_term = ad.hadamard(ad.inp("w_event"), ad.neg(ad.log(density)))
        censor_term = ad.hadamard(ad.inp("w_censor"), ad.neg(ad.log(survival)))
        return ad.mean_all(ad.add(event_term, censor_term))

    return model.graph_cache(("loss", "sumo", clamp_eps), build)


def sumo_bindings(model, samples, cfg: LossConfig) -> dict:
    X, event, time = split_samples(samples)
    bindings = dict(model.tensors)
    bindings.update(model.extra_bindings(X))
    bindings.update(
        {
            "x": X,
            "t": time.reshape(-1, 1),
            "w_event": (cfg.gamma * event).reshape(-1, 1).astype(np.float64),
            "w_censor": (1.0 - event).reshape(-1, 1).astype(np.float64),
        }
    )
    return bindings


def sumo_loss(model, samples, cfg: LossConfig) -> float:
    expr = sumo_loss_graph(model, cfg.clamp_eps)
    return ad.eval_graph(expr, sumo_bindings(model, samples, cfg)).item()


def sumo_loss_and_grads(model, samples, cfg: LossConfig):
    expr = sumo_loss_graph(model, cfg.clamp_eps)
    bindings = sumo_bindings(model, samples, cfg)
    grads = ad.gradient(expr, bindings, _grad_names(model))
    return expr.val.item(), grads


def point_bce_graph(model, clamp_eps: float = 1e-7) -> ad.Expr:
    """Mean cross-entropy against explicit survival targets p at times t."""
    _require_graph_model(model)

    def build():
        s = _clamp_unit(model.survival_graph("t", "x"), clamp_eps)
        p = ad.inp("p")
        hit = ad.hadamard(p, ad.log(s))
        miss = ad.hadamard(
            ad.sub(ad.const(1.0), p), ad.log(ad.sub(ad.const(1.0), s))
        )
        return ad.neg(ad.mean_all(ad.add(hit, miss)))

    return model.graph_cache(("loss", "point", clamp_eps), build)


def point_bce_bindings(model, X, target_points) -> dict:
    """Flatten per-sample (time, target) lists into one row per point."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(target_points):
        raise ValueError("need one target list per feature row")
    rows, times, targets = [], [], []
    for i, points in enumerate(target_points):
        if not points:
            raise ValueError(f"sample {i} has no target points")
        for t, p in points:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"target probability {p} outside [0, 1]")
            rows.append(X[i])
            times.append(t)
            targets.append(p)
    bindings = dict(model.tensors)
    stacked = np.stack(rows)
    bindings.update(model.extra_bindings(stacked))
    bindings.update(
        {
            "x": stacked,
            "t": np.asarray(times, dtype=np.float64).reshape(-1, 1),
            "p": np.asarray(targets, dtype=np.float64).reshape(-1, 1),
        }
    )
    return bindings


def point_target_bce_loss(model, X, target_points, clamp_eps: float = 1e-7) -> float:
    expr = point_bce_graph(model, clamp_eps)
    return ad.eval_graph(expr, point_bce_bindings(model, X, target_points)).item()


def point_target_bce_grads(model, X, target_points, clamp_eps: float = 1e-7):
    expr = point_bce_graph(model, clamp_eps)
    bindings = point_bce_bindings(model, X, target_points)
    grads = ad.gradient(expr, bindings, _grad_names(model))
    return expr.val.item(), grads


def loss_and_grads(model, samples, cfg: LossConfig, rng, kind: str):
    """Dispatch used by the trainer."""
    if kind == "bce":
        return bce_loss_and_grads(model, samples, cfg, rng)
    if kind == "sumo":
        return sumo_loss_and_grads(model, samples, cfg)
    raise ValueError(f"unknown loss kind {kind!r}; choose from {LOSS_KINDS}")


def loss_value(model, samples, cfg: LossConfig, rng, kind: str) -> float:
    if kind == "bce":
        return bce_survival_loss(model, samples, cfg, rng)
    if kind == "sumo":
        return sumo_loss(model, samples, cfg)
    raise ValueError(f"unknown loss kind {kind!r}; choose from {LOSS_KINDS}")
