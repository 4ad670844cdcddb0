"""scikit-learn style facade over the survival models.

One estimator object owns the whole pipeline: feature standardization,
time rescaling, the Kaplan-Meier balanced train/validation split, seeded
multi-run training, and curve-based prediction. Hyperparameters follow
the sklearn constructor convention (stored verbatim, validated at fit
time), so ``get_params``/``set_params`` and therefore ``sklearn.clone``
and the model-selection utilities work unchanged.
"""

import inspect

import numpy as np

from monosurv.data import Dataset, km_balanced_split, normalize_features, subset
from monosurv.losses import LOSS_KINDS, LossConfig
from monosurv.metrics import concordance_index, evaluate_all, restricted_mean_survival
from monosurv.models import MODEL_KINDS, ModelConfig, Sample, build_model
from monosurv.training import SelectionResult, TrainConfig, TrainHistory, multi_run_select

__all__ = [
    "MonotoneSurvivalEstimator",
    "NotFittedError",
    "check_feature_array",
    "check_survival_target",
]


class NotFittedError(RuntimeError):
    """Prediction was requested before fit."""


def check_feature_array(X, n_features: int | None = None) -> np.ndarray:
    """Validate a 2-d finite float feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"feature matrix must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains NaN or infinite entries")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"feature matrix has {X.shape[1]} columns, the fit saw {n_features}"
        )
    return X


def check_survival_target(y, n_samples: int | None = None):
    """Coerce a survival target into (event, time) vectors.

    Accepts a structured/record array with 'event' and 'time' fields, a
    two-column array laid out as [event, time], or an (event, time) pair
    of vectors.
    """
    if isinstance(y, np.ndarray) and y.dtype.names:
        missing = {"event", "time"} - set(y.dtype.names)
        if missing:
            raise ValueError(f"structured target lacks field(s) {sorted(missing)}")
        event, time = y["event"], y["time"]
    elif isinstance(y, (tuple, list)) and len(y) == 2 and np.ndim(y[0]) == 1:
        event, time = y
    else:
        arr = np.asarray(y, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(
                "target must be a structured array with 'event'/'time' fields, "
                f"an (n, 2) [event, time] array, or an (event, time) pair; got {y!r:.80}"
            )
        event, time = arr[:, 0], arr[:, 1]
    event = np.asarray(event)
    time = np.asarray(time, dtype=np.float64)
    if event.shape != time.shape or event.ndim != 1:
        raise ValueError(
            f"event and time must be equal-length vectors, got {event.shape} and {time.shape}"
        )
    if not np.isin(event, (0, 1)).all():
        raise ValueError("event indicators must be 0 or 1")
    if not np.all(np.isfinite(time)) or np.any(time <= 0.0):
        raise ValueError("times must be positive and finite")
    if n_samples is not None and time.size != n_samples:
        raise ValueError(f"target has {time.size} rows, features have {n_samples}")
    return event.astype(np.int64), time


def _samples(X: np.ndarray, event: np.ndarray, time: np.ndarray):
    return [Sample(x=x, event=int(e), time=float(t)) for x, e, t in zip(X, event, time)]


class MonotoneSurvivalEstimator:
    """Monotone neural survival curves behind a fit/predict interface.

    ``fit`` standardizes features, rescales times by the 90th-percentile
    horizon, picks a Kaplan-Meier balanced validation split, trains
    ``n_runs`` seeded models, and keeps the one with the best validation
    mean score. ``predict`` returns restricted mean survival times in the
    original time units, so larger predictions mean longer expected
    survival, and ``score`` is the concordance index of those predictions.
    """

    def __init__(
        self,
        kind: str = "sumo_plusplus",
        loss: str = "bce",
        lr: float = 1e-3,
        clip_norm: float = 1.0,
        batch_size: int = 8,
        ma_window: int = 512,
        patience: int = 8192,
        max_steps: int = 20000,
        weight_decay: float = 0.0,
        sigma_factor: float = 0.5,
        bce_weight: float = 0.5,
        gamma: float = 1.0,
        n_runs: int = 1,
        val_fraction: float = 0.25,
        split_seeds: int = 1000,
        grid_size: int = 65,
        hidden_layers: int = 5,
        hidden_width: int = 32,
        monde_width: int = 98,
        t_width: int = 64,
        feature_width: int = 32,
        feature_layers: int = 3,
        random_state: int = 0,
    ):
        self.kind = kind
        self.loss = loss
        self.lr = lr
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.ma_window = ma_window
        self.patience = patience
        self.max_steps = max_steps
        self.weight_decay = weight_decay
        self.sigma_factor = sigma_factor
        self.bce_weight = bce_weight
        self.gamma = gamma
        self.n_runs = n_runs
        self.val_fraction = val_fraction
        self.split_seeds = split_seeds
        self.grid_size = grid_size
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.monde_width = monde_width
        self.t_width = t_width
        self.feature_width = feature_width
        self.feature_layers = feature_layers
        self.random_state = random_state

    # -- sklearn parameter plumbing ------------------------------------------
    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    # -- configuration assembly ------------------------------------------------
    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_layers=self.hidden_layers,
            hidden_width=self.hidden_width,
            monde_width=self.monde_width,
            t_width=self.t_width,
            feature_width=self.feature_width,
            feature_layers=self.feature_layers,
        )

    def _train_config(self) -> TrainConfig:
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        return TrainConfig(
            lr=self.lr,
            clip_norm=self.clip_norm,
            batch_size=self.batch_size,
            ma_window=self.ma_window,
            patience=self.patience,
            max_steps=self.max_steps,
            weight_decay=self.weight_decay,
            loss_kind=self.loss,
            loss=LossConfig(
                sigma_factor=self.sigma_factor,
                bce_weight=self.bce_weight,
                gamma=self.gamma,
            ),
            seed=self.random_state,
        )

    # -- fitting ---------------------------------------------------------------
    def fit(self, X, y):
        X = check_feature_array(X)
        event, time = check_survival_target(y, n_samples=X.shape[0])
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        cfg = self._train_config()

        dataset = Dataset(
            samples=_samples(X, event, time),
            feature_names=tuple(f"x{k}" for k in range(X.shape[1])),
        )
        normalized, stats = normalize_features(dataset)
        split = km_balanced_split(
            normalized.samples, val_fraction=self.val_fraction, n_seeds=self.split_seeds
        )
        train_part = subset(normalized.samples, split.train_indices)
        val_part = subset(normalized.samples, split.val_indices)
        if self.kind == "km":
            # nonparametric baseline: nothing to optimize
            model = build_model("km", X.shape[1], self._model_config()).fit(train_part)
            report = evaluate_all(model, val_part, grid_size=self.grid_size)
            selection = SelectionResult(
                model=model,
                report=report,
                history=TrainHistory(stop_reason="max_steps"),
                run_index=0,
                seed=cfg.seed,
                mean_scores=[report["mean_score"]],
                failures=[],
            )
        else:
            selection = multi_run_select(
                self.kind,
                self._model_config(),
                train_part,
                val_part,
                cfg,
                n_runs=self.n_runs,
                grid_size=self.grid_size,
            )

        self.n_features_in_ = X.shape[1]
        self.normalization_ = stats
        self.t_max_ = float(stats["t_max"])
        self.split_ = split
        self.selection_ = selection
        self.model_ = selection.model
        self.report_ = selection.report
        self.history_ = selection.history
        return self

    # -- prediction --------------------------------------------------------------
    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this estimator is not fitted yet; call fit first")

    def _transform(self, X) -> np.ndarray:
        X = check_feature_array(X, n_features=self.n_features_in_)
        mean = np.asarray(self.normalization_["mean"])
        std = np.asarray(self.normalization_["std"])
        return (X - mean) / std

    def predict_survival(self, X, times) -> np.ndarray:
        """S(t|x) for each sample (rows) at each requested time (columns).

        Times are in the units the estimator was fitted with.
        """
        self._require_fitted()
        Xs = self._transform(X)
        times = np.asarray(times, dtype=np.float64).ravel()
        if times.size == 0:
            raise ValueError("need at least one evaluation time")
        if np.any(times < 0.0) or not np.all(np.isfinite(times)):
            raise ValueError("evaluation times must be finite and non-negative")
        rows = [self.model_.survival_batch(t / self.t_max_, Xs) for t in times]
        return np.stack(rows, axis=1)

    def predict_cumulative_hazard(self, X, times) -> np.ndarray:
        """Integrated hazard at each requested time, same layout as
        predict_survival."""
        self._require_fitted()
        Xs = self._transform(X)
        times = np.asarray(times, dtype=np.float64).ravel()
        if times.size == 0:
            raise ValueError("need at least one evaluation time")
        rows = [self.model_.cumhaz_batch(t / self.t_max_, Xs) for t in times]
        return np.stack(rows, axis=1)

    def predict(self, X) -> np.ndarray:
        """Restricted mean survival time over [0, horizon], original units."""
        self._require_fitted()
        grid = np.linspace(0.0, self.t_max_, self.grid_size)
        surv = self.predict_survival(X, grid)
        return restricted_mean_survival(surv.T, grid)

    def score(self, X, y) -> float:
        """Concordance index of the predicted restricted mean survival times."""
        self._require_fitted()
        event, time = check_survival_target(y)
        return concordance_index(time, event, self.predict(X))

    def evaluate(self, X, y):
        """Full validation-style metric report on the given data."""
        self._require_fitted()
        X = check_feature_array(X, n_features=self.n_features_in_)
        event, time = check_survival_target(y, n_samples=X.shape[0])
        scaled = _samples(self._transform(X), event, time / self.t_max_)
        return evaluate_all(self.model_, scaled, grid_size=self.grid_size)
