"""Survival models over monotone networks, behind one curve interface.

Every model exposes S(t|x) (survival), Lambda(t|x) (cumulative hazard),
f(t|x) (event density) and lambda(t|x) (hazard). The neural kinds are
expression graphs, so densities and hazards come from the symbolic time
derivative of the survival graph rather than a second tape.

Model kinds
-----------
km             Kaplan-Meier product-limit curve; ignores the features.
sumo           S = sigmoid(-M([t, Q(x)])) with a MONDE stack M; flexible but
               S(0|x) < 1 and S(inf|x) > 0 in general.
sumo_plus      S = exp(-(M([t,q]) - M([0,q]))) with the same MONDE stack;
               a proper curve (S(0)=1) but the whole stack must be monotone
               in every coordinate.
sumo_plusplus  same exponential form with a MONDE+ stack, monotone in t only.
cox_nn         proportional hazards: S = exp(-exp(<a, x>) * Lambda0(t)) with
               a MONDE+ baseline.
cox_deep_nn    the same with a dense-net log relative risk instead of <a, x>.
ctx_nn         time-varying Cox: S = exp(-alpha(t, x) * Lambda0(t)) where
               log alpha = <omega(t, x), |x - o|> and omega picks, per
               coordinate, one of two monotone coefficient curves depending
               on the side of the reference point o.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from monosurv import autodiff as ad
from monosurv import nets
from monosurv.ioutil import atomic_write_text
from monosurv.nets import ConfigError

__all__ = [
    "MODEL_KINDS",
    "Sample",
    "ModelConfig",
    "UnsupportedOperation",
    "SurvivalModel",
    "KaplanMeierCurve",
    "KaplanMeierModel",
    "km_fit",
    "build_model",
    "cox_time_coefficients",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_KINDS = (
    "km",
    "sumo",
    "sumo_plus",
    "sumo_plusplus",
    "cox_nn",
    "cox_deep_nn",
    "ctx_nn",
)


class UnsupportedOperation(RuntimeError):
    """The model kind cannot provide the requested quantity."""


@dataclass(frozen=True)
class Sample:
    """One right-censored observation: features, event flag, observed time."""

    x: np.ndarray
    event: int
    time: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64).ravel())
        if self.event not in (0, 1):
            raise ValueError(f"event must be 0 or 1, got {self.event}")
        if not np.isfinite(self.time) or self.time <= 0.0:
            raise ValueError(f"time must be positive and finite, got {self.time}")


def split_samples(samples):
    """(X, event, time) arrays from a sample sequence."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample list")
    X = np.stack([s.x for s in samples]).astype(np.float64)
    event = np.array([s.event for s in samples], dtype=np.int64)
    time = np.array([s.time for s in samples], dtype=np.float64)
    return X, event, time


@dataclass
class ModelConfig:
    """Architecture knobs shared by the neural kinds."""

    hidden_layers: int = 5
    hidden_width: int = 32
    monde_width: int = 98
    t_width: int = 64
    feature_width: int = 32
    feature_layers: int = 3
    use_feature_net: bool = True

    def __post_init__(self):
        for name in (
            "hidden_layers",
            "hidden_width",
            "monde_width",
            "t_width",
            "feature_width",
            "feature_layers",
        ):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")
            setattr(self, name, int(value))
        self.use_feature_net = bool(self.use_feature_net)


def _check_time(t) -> float:
    t = float(t)
    if not np.isfinite(t) or t < 0.0:
        raise ad.DomainError(f"time must be finite and non-negative, got {t}")
    return t


def _as_batch(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ad.ShapeMismatch(
            f"expected features with {model.feature_dim} columns, got shape {X.shape}"
        )
    return X


class SurvivalModel:
    """Shared curve API; subclasses fill in the batched survival evaluation."""

    kind: str = "?"

    def __init__(self, feature_dim: int, config: ModelConfig):
        self.feature_dim = int(feature_dim)
        self.config = config
        self.tensors: dict[str, np.ndarray] = {}
        self.constrained: frozenset[str] = frozenset()
        self.meta: dict = {}

    # -- batched quantities -------------------------------------------------
    def survival_batch(self, t: float, X) -> np.ndarray:
        raise NotImplementedError

    def cumhaz_batch(self, t: float, X) -> np.ndarray:
        raise NotImplementedError

    def density_batch(self, t: float, X) -> np.ndarray:
        raise UnsupportedOperation(f"{self.kind} has no event density")

    def hazard_batch(self, t: float, X) -> np.ndarray:
        raise UnsupportedOperation(f"{self.kind} has no hazard")

    def survival_curve(self, times, x) -> np.ndarray:
        """S at a vector of times for one feature row."""
        times = np.asarray(times, dtype=np.float64).ravel()
        return np.array([self.survival_batch(t, x)[0] for t in times])

    # -- scalar conveniences ------------------------------------------------
    def survival(self, t, x) -> float:
        return float(self.survival_batch(t, x)[0])

    def cumulative_hazard(self, t, x) -> float:
        return float(self.cumhaz_batch(t, x)[0])

    def event_density(self, t, x) -> float:
        return float(self.density_batch(t, x)[0])

    def hazard(self, t, x) -> float:
        return float(self.hazard_batch(t, x)[0])

    # -- parameter plumbing for the trainer ---------------------------------
    def copy_tensors(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.tensors.items()}

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        if set(tensors) != set(self.tensors):
            missing = set(self.tensors) ^ set(tensors)
            raise ValueError(f"tensor names do not match the model: {sorted(missing)}")
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self.tensors[name].shape:
                raise ValueError(
                    f"tensor {name!r} has shape {arr.shape}, "
                    f"expected {self.tensors[name].shape}"
                )
            self.tensors[name] = arr.copy()


# ---------------------------------------------------------------------------
# Kaplan-Meier


@dataclass
class KaplanMeierCurve:
    """Product-limit estimate as a right-continuous step function."""

    event_times: np.ndarray
    values: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray
    n_samples: int

    def evaluate(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64)
        idx = np.searchsorted(self.event_times, times, side="right")
        padded = np.concatenate([[1.0], self.values])
        return padded[idx]


def km_fit(samples) -> KaplanMeierCurve:
    """Kaplan-Meier product-limit fit over right-censored samples."""
    _, event, time = split_samples(samples)
    order = np.argsort(time, kind="stable")
    time, event = time[order], event[order]
    n = time.size
    event_times, values, at_risk_out, events_out = [], [], [], []
    survival = 1.0
    i = 0
    while i < n:
        t = time[i]
        j = i
        deaths = 0
        while j < n and time[j] == t:
            deaths += int(event[j])
            j += 1
        if deaths > 0:
            at_risk = n - i
            survival *= 1.0 - deaths / at_risk
            event_times.append(t)
            values.append(survival)
            at_risk_out.append(at_risk)
            events_out.append(deaths)
        i = j
    return KaplanMeierCurve(
        event_times=np.array(event_times, dtype=np.float64),
        values=np.array(values, dtype=np.float64),
        n_at_risk=np.array(at_risk_out, dtype=np.int64),
        n_events=np.array(events_out, dtype=np.int64),
        n_samples=n,
    )


class KaplanMeierModel(SurvivalModel):
    """Population curve; ignores features, cannot produce densities."""

    kind = "km"

    def __init__(self, feature_dim: int, config: ModelConfig):
        super().__init__(feature_dim, config)
        self.curve = KaplanMeierCurve(
            event_times=np.empty(0),
            values=np.empty(0),
            n_at_risk=np.empty(0, dtype=np.int64),
            n_events=np.empty(0, dtype=np.int64),
            n_samples=0,
        )

    def fit(self, samples) -> "KaplanMeierModel":
        self.curve = km_fit(samples)
        return self

    def survival_batch(self, t, X) -> np.ndarray:
        t = _check_time(t)
        X = _as_batch(self, X)
        return np.full(X.shape[0], float(self.curve.evaluate(t)))

    def cumhaz_batch(self, t, X) -> np.ndarray:
        s = self.survival_batch(t, X)
        with np.errstate(divide="ignore"):
            return np.where(s > 0.0, -np.log(np.maximum(s, 1e-300)), np.inf)


# ---------------------------------------------------------------------------
# Graph-backed models


def _row_sum(x: ad.Expr, width: int) -> ad.Expr:
    return ad.affine(x, ad.const(np.ones((1, width))))


class GraphSurvivalModel(SurvivalModel):
    """Base for the neural kinds: cached expression graphs per quantity."""

    def __init__(self, feature_dim: int, config: ModelConfig):
        super().__init__(feature_dim, config)
        self._cache: dict = {}

    def graph_cache(self, key, builder) -> ad.Expr:
        """Build-once storage for derived graphs (losses attach theirs here)."""
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    # subclasses implement one of the two natural forms; the base derives
    # the other one.
    def survival_graph(self, t_name: str = "t", x_name: str = "x") -> ad.Expr:
        key = ("S", t_name, x_name)
        if key not in self._cache:
            self._cache[key] = self._build_survival(t_name, x_name)
        return self._cache[key]

    def cumhaz_graph(self, t_name: str = "t", x_name: str = "x") -> ad.Expr:
        key = ("H", t_name, x_name)
        if key not in self._cache:
            self._cache[key] = self._build_cumhaz(t_name, x_name)
        return self._cache[key]

    def density_graph(self, t_name: str = "t", x_name: str = "x") -> ad.Expr:
        key = ("f", t_name, x_name)
        if key not in self._cache:
            self._cache[key] = ad.neg(
                ad.time_derivative(self.survival_graph(t_name, x_name), t_name)
            )
        return self._cache[key]

    def hazard_graph(self, t_name: str = "t", x_name: str = "x") -> ad.Expr:
        key = ("h", t_name, x_name)
        if key not in self._cache:
            self._cache[key] = ad.time_derivative(
                self.cumhaz_graph(t_name, x_name), t_name
            )
        return self._cache[key]

    def _build_survival(self, t_name, x_name) -> ad.Expr:
        return ad.exp(ad.neg(self.cumhaz_graph(t_name, x_name)))

    def _build_cumhaz(self, t_name, x_name) -> ad.Expr:
        raise NotImplementedError

    # -- bindings ------------------------------------------------------------
    def extra_bindings(self, X: np.ndarray) -> dict:
        """Per-batch auxiliary inputs (zero columns, masks)."""
        return {"zero_col": np.zeros((X.shape[0], 1))}

    def data_bindings(self, t_col, X, t_name: str = "t", x_name: str = "x") -> dict:
        bindings = dict(self.tensors)
        bindings.update(self.extra_bindings(X))
        bindings[t_name] = t_col
        bindings[x_name] = X
        return bindings

    def _eval(self, graph_method, t, X) -> np.ndarray:
        t = _check_time(t)
        X = _as_batch(self, X)
        expr = graph_method()
        t_col = np.full((X.shape[0], 1), t)
        return ad.eval_graph(expr, self.data_bindings(t_col, X)).ravel()

    def survival_batch(self, t, X) -> np.ndarray:
        return self._eval(self.survival_graph, t, X)

    def cumhaz_batch(self, t, X) -> np.ndarray:
        return self._eval(self.cumhaz_graph, t, X)

    def density_batch(self, t, X) -> np.ndarray:
        return self._eval(self.density_graph, t, X)

    def hazard_batch(self, t, X) -> np.ndarray:
        return self._eval(self.hazard_graph, t, X)

    def survival_curve(self, times, x) -> np.ndarray:
        times = np.asarray(times, dtype=np.float64).ravel()
        for t in times:
            _check_time(t)
        x = _as_batch(self, x)
        if x.shape[0] != 1:
            raise ad.ShapeMismatch("survival_curve expects a single feature row")
        X = np.repeat(x, times.size, axis=0)
        t_col = times.reshape(-1, 1)
        expr = self.survival_graph()
        return ad.eval_graph(expr, self.data_bindings(t_col, X)).ravel()

    # -- shared sub-builders --------------------------------------------------
    def _feature_graph(self, x_name: str) -> tuple[ad.Expr, int]:
        """Q(x) and its width; identity when the feature net is disabled."""
        cfg = self.config
        if not cfg.use_feature_net:
            return ad.inp(x_name), self.feature_dim
        dims = (self.feature_dim,) + (cfg.feature_width,) * cfg.feature_layers
        blocks = (True,) * cfg.feature_layers
        return nets.dense_graph(dims, blocks, ad.inp(x_name), prefix="q."), cfg.feature_width

    def _feature_dims(self):
        cfg = self.config
        return (self.feature_dim,) + (cfg.feature_width,) * cfg.feature_layers

    def _init_feature_net(self, seed) -> dict:
        cfg = self.config
        if not cfg.use_feature_net:
            return {}
        dense = nets.init_dense(self._feature_dims(), seed=seed)
        return {f"q.{name}": arr for name, arr in dense.tensors.items()}


def _prefixed(prefix: str, params) -> dict:
    return {f"{prefix}{name}": arr for name, arr in params.tensors.items()}


def _prefixed_names(prefix: str, names) -> frozenset:
    return frozenset(f"{prefix}{name}" for name in names)


class SumoModel(GraphSurvivalModel):
    """Sigmoid readout of a MONDE stack on [t, Q(x)]; S(0|x) stays below 1."""

    kind = "sumo"

    def __init__(self, feature_dim, config, seed=0):
        super().__init__(feature_dim, config)
        ss = np.random.SeedSequence(seed)
        q_seed, m_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        self.tensors.update(self._init_feature_net(q_seed))
        q_dim = config.feature_width if config.use_feature_net else feature_dim
        self._monde_widths = (1 + q_dim,) + (config.monde_width,) * config.hidden_layers + (1,)
        monde = nets.init_monde(self._monde_widths, seed=m_seed)
        self.tensors.update(_prefixed("m.", monde))
        self.constrained = _prefixed_names("m.", monde.constrained)

    def _monde_on(self, t_expr, x_name):
        q, _ = self._feature_graph(x_name)
        return nets.monde_graph(self._monde_widths, ad.concat(t_expr, q), prefix="m.")

    def _build_survival(self, t_name, x_name):
        return ad.sigmoid(ad.neg(self._monde_on(ad.inp(t_name), x_name)))

    def _build_cumhaz(self, t_name, x_name):
        # -log S for S = sigmoid(-M) is exactly softplus(M); Lambda(0|x) > 0
        # here because this kind does not pin S(0|x) = 1.
        return ad.softplus(self._monde_on(ad.inp(t_name), x_name))


class SumoPlusModel(GraphSurvivalModel):
    """Exponential form over a MONDE stack: S = exp(-(M(t,q) - M(0,q)))."""

    kind = "sumo_plus"

    def __init__(self, feature_dim, config, seed=0):
        super().__init__(feature_dim, config)
        ss = np.random.SeedSequence(seed)
        q_seed, m_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        self.tensors.update(self._init_feature_net(q_seed))
        q_dim = config.feature_width if config.use_feature_net else feature_dim
        self._monde_widths = (1 + q_dim,) + (config.monde_width,) * config.hidden_layers + (1,)
        monde = nets.init_monde(self._monde_widths, seed=m_seed)
        self.tensors.update(_prefixed("m.", monde))
        self.constrained = _prefixed_names("m.", monde.constrained)

    def _build_cumhaz(self, t_name, x_name):
        q, _ = self._feature_graph(x_name)
        at_t = nets.monde_graph(self._monde_widths, ad.concat(ad.inp(t_name), q), prefix="m.")
        at_zero = nets.monde_graph(
            self._monde_widths, ad.concat(ad.inp("zero_col"), q), prefix="m."
        )
        return ad.sub(at_t, at_zero)


class SumoPlusPlusModel(GraphSurvivalModel):
    """Exponential form over a MONDE+ stack, monotone in t only."""

    kind = "sumo_plusplus"

    def __init__(self, feature_dim, config, seed=0):
        super().__init__(feature_dim, config)
        ss = np.random.SeedSequence(seed)
        q_seed, m_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        self.tensors.update(self._init_feature_net(q_seed))
        q_dim = config.feature_width if config.use_feature_net else feature_dim
        self._mp_dims = (q_dim, (config.hidden_width,) * config.hidden_layers, 1)
        mp = nets.init_monde_plus(
            q_dim,
            self._mp_dims[1],
            1,
            t_width=config.t_width,
            seed=m_seed,
        )
        self.tensors.update(_prefixed("m.", mp))
        self.constrained = _prefixed_names("m.", mp.constrained)

    def _build_cumhaz(self, t_name, x_name):
        q, q_dim = self._feature_graph(x_name)
        in_dim, hidden, out = self._mp_dims
        at_t = nets.monde_plus_graph(in_dim, hidden, out, ad.inp(t_name), q, prefix="m.")
        at_zero = nets.monde_plus_graph(
            in_dim, hidden, out, ad.inp("zero_col"), q, prefix="m."
        )
        return ad.sub(at_t, at_zero)


class _BaselineMixin:
    """A MONDE+ baseline cumulative hazard driven by a zero feature column."""

    def _init_baseline(self, seed, prefix="l0."):
        cfg = self.config
        mp = nets.init_monde_plus(
            1, (cfg.hidden_width,) * cfg.hidden_layers, 1, t_width=cfg.t_width, seed=seed
        )
        self.tensors.update(_prefixed(prefix, mp))
        return _prefixed_names(prefix, mp.constrained), (1, mp.hidden, 1)

    def _baseline_graph(self, t_name, dims, prefix="l0."):
        in_dim, hidden, out = dims
        zero = ad.inp("zero_col")
        at_t = nets.monde_plus_graph(in_dim, hidden, out, ad.inp(t_name), zero, prefix=prefix)
        at_zero = nets.monde_plus_graph(in_dim, hidden, out, zero, zero, prefix=prefix)
        return ad.sub(at_t, at_zero)


class CoxNNModel(GraphSurvivalModel, _BaselineMixin):
    """Proportional hazards with a linear log relative risk."""

    kind = "cox_nn"

    def __init__(self, feature_dim, config, seed=0):
        super().__init__(feature_dim, config)
        ss = np.random.SeedSequence(seed)
        (b_seed,) = (int(s.generate_state(1)[0]) for s in ss.spawn(1))
        self.constrained, self._base_dims = self._init_baseline(b_seed)
        self.tensors["cox.a"] = np.zeros((1, feature_dim))

    def _build_cumhaz(self, t_name, x_name):
        log_alpha = ad.affine(ad.inp(x_name), ad.inp("cox.a"))
        alpha = ad.exp(log_alpha)
        return ad.mul(alpha, self._baseline_graph(t_name, self._base_dims))


class CoxDeepNNModel(GraphSurvivalModel, _BaselineMixin):
    """Proportional hazards with a dense-net log relative risk."""

    kind = "cox_deep_nn"

    def __init__(self, feature_dim, config, seed=0):
        super().__init__(feature_dim, config)
        ss = np.random.SeedSequence(seed)
        b_seed, r_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        self.constrained, self._base_dims = self._init_baseline(b_seed)
        self._risk_dims = (feature_dim, 2 * feature_dim, 8, 1)
        self._risk_blocks = (True, True, False)
        dense = nets.init_dense(self._risk_dims, blocks=self._risk_blocks, seed=r_seed)
        self.tensors.update(_prefixed("r.", dense))

    def _build_cumhaz(self, t_name, x_name):
        log_alpha = nets.dense_graph(
            self._risk_dims, self._risk_blocks, ad.inp(x_name), prefix="r."
        )
        alpha = ad.exp(log_alpha)
        return ad.mul(alpha, self._baseline_graph(t_name, self._base_dims))


class TimeCoxModel(GraphSurvivalModel, _BaselineMixin):
    """Cox form with time-varying coefficients that stay monotone in t.

    log alpha(t, x) = sum_i omega_i(t, x) * |x_i - o_i| where omega_i picks
    the "below" coefficient curve when x_i < o_i and the "above" curve
    otherwise. Both curves are baseline-style MONDE+ differences shifted so
    they agree at t = 0, which keeps alpha continuous across the reference
    point o and non-decreasing in t.
    """

    kind = "ctx_nn"

    def __init__(self, feature_dim, config, seed=0):
        super().__init__(feature_dim, config)
        ss = np.random.SeedSequence(seed)
        b_seed, neg_seed, pos_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
        self.constrained, self._base_dims = self._init_baseline(b_seed)
        cfg = config
        hidden = (cfg.hidden_width,) * cfg.hidden_layers
        self._coef_dims = (1, hidden, feature_dim)
        for prefix, coef_seed in (("bneg.", neg_seed), ("bpos.", pos_seed)):
            mp = nets.init_monde_plus(
                1, hidden, feature_dim, t_width=cfg.t_width, seed=coef_seed
            )
            self.tensors.update(_prefixed(prefix, mp))
            self.constrained = self.constrained | _prefixed_names(prefix, mp.constrained)
        self.tensors["o"] = np.zeros((1, feature_dim))

    def extra_bindings(self, X: np.ndarray) -> dict:
        bindings = super().extra_bindings(X)
        bindings["mask_below"] = (X < self.tensors["o"]).astype(np.float64)
        return bindings

    def _coef_net(self, t_expr, prefix):
        in_dim, hidden, out = self._coef_dims
        return nets.monde_plus_graph(
            in_dim, hidden, out, t_expr, ad.inp("zero_col"), prefix=prefix
        )

    def _omega_graph(self, t_name):
        key = ("omega", t_name)
        if key not in self._cache:
            zero = ad.inp("zero_col")
            t_expr = ad.inp(t_name)
            below = ad.add(
                ad.sub(self._coef_net(t_expr, "bneg."), self._coef_net(zero, "bneg.")),
                self._coef_net(zero, "bpos."),
            )
            above = self._coef_net(t_expr, "bpos.")
            mask = ad.inp("mask_below")
            self._cache[key] = ad.add(
                ad.mul(mask, below),
                ad.mul(ad.sub(ad.const(1.0), mask), above),
            )
        return self._cache[key]

    def _build_cumhaz(self, t_name, x_name):
        omega = self._omega_graph(t_name)
        gap = ad.absolute(ad.sub(ad.inp(x_name), ad.inp("o")))
        log_alpha = _row_sum(ad.hadamard(omega, gap), self.feature_dim)
        alpha = ad.exp(log_alpha)
        return ad.mul(alpha, self._baseline_graph(t_name, self._base_dims))


def cox_time_coefficients(model: TimeCoxModel, t, x) -> tuple[np.ndarray, float]:
    """(omega(t, x), alpha(t, x)) for a ctx_nn model at one sample."""
    if model.kind != "ctx_nn":
        raise UnsupportedOperation("time coefficients exist only for ctx_nn models")
    t = _check_time(t)
    x = _as_batch(model, x)
    if x.shape[0] != 1:
        raise ad.ShapeMismatch("cox_time_coefficients expects a single feature row")
    omega_expr = model._omega_graph("t")
    bindings = model.data_bindings(np.full((1, 1), t), x)
    omega = ad.eval_graph(omega_expr, bindings).ravel()
    gap = np.abs(x.ravel() - model.tensors["o"].ravel())
    alpha = float(np.exp(np.sum(omega * gap)))
    return omega, alpha


_MODEL_CLASSES = {
    cls.kind: cls
    for cls in (
        SumoModel,
        SumoPlusModel,
        SumoPlusPlusModel,
        CoxNNModel,
        CoxDeepNNModel,
        TimeCoxModel,
    )
}


def build_model(kind: str, feature_dim: int, config: ModelConfig | None = None, seed: int = 0):
    """Construct a model of the given kind with freshly initialized tensors."""
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    if int(feature_dim) != feature_dim or feature_dim < 1:
        raise ConfigError(f"feature_dim must be a positive integer, got {feature_dim}")
    config = config if config is not None else ModelConfig()
    if kind == "km":
        return KaplanMeierModel(int(feature_dim), config)
    return _MODEL_CLASSES[kind](int(feature_dim), config, seed=seed)


# ---------------------------------------------------------------------------
# Serialization

_FORMAT = "monosurv-model"
_VERSION = 1


def model_to_dict(model: SurvivalModel) -> dict:
    out = {
        "format": _FORMAT,
        "version": _VERSION,
        "kind": model.kind,
        "feature_dim": model.feature_dim,
        "config": asdict(model.config),
        "meta": model.meta,
        "tensors": {name: arr.tolist() for name, arr in sorted(model.tensors.items())},
    }
    if model.kind == "km":
        out["curve"] = {
            "event_times": model.curve.event_times.tolist(),
            "values": model.curve.values.tolist(),
            "n_at_risk": model.curve.n_at_risk.tolist(),
            "n_events": model.curve.n_events.tolist(),
            "n_samples": model.curve.n_samples,
        }
    return out


def model_from_dict(payload: dict) -> SurvivalModel:
    if payload.get("format") != _FORMAT:
        raise ValueError("not a model payload")
    if payload.get("version") != _VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')!r}")
    config = ModelConfig(**payload["config"])
    model = build_model(payload["kind"], payload["feature_dim"], config, seed=0)
    model.meta = dict(payload.get("meta", {}))
    if model.kind == "km":
        curve = payload["curve"]
        model.curve = KaplanMeierCurve(
            event_times=np.asarray(curve["event_times"], dtype=np.float64),
            values=np.asarray(curve["values"], dtype=np.float64),
            n_at_risk=np.asarray(curve["n_at_risk"], dtype=np.int64),
            n_events=np.asarray(curve["n_events"], dtype=np.int64),
            n_samples=int(curve["n_samples"]),
        )
        return model
    tensors = {
        name: np.asarray(values, dtype=np.float64)
        for name, values in payload["tensors"].items()
    }
    model.load_tensors(tensors)
    return model


def save_model(model: SurvivalModel, path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model)))


def load_model(path) -> SurvivalModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
