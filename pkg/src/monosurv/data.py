"""Dataset loading, feature scaling, split selection, and generators.

CSV files are expected to carry one subject per row with a positive
observation time, a 0/1 event indicator, and numeric features. Errors
point at the offending row and column. Train/validation splits are
chosen so the two Kaplan-Meier curves agree as closely as possible,
which keeps small validation sets representative.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from monosurv.metrics import time_horizon
from monosurv.models import Sample, km_fit, split_samples

__all__ = [
    "Dataset",
    "SplitResult",
    "TOY_TARGET_CURVES",
    "load_csv",
    "normalize_features",
    "apply_normalization",
    "km_balanced_split",
    "subset",
    "toy_dataset",
    "synthetic_weibull",
]


@dataclass
class Dataset:
    """Samples plus the bookkeeping needed to reproduce a run."""

    samples: list
    feature_names: tuple
    name: str = ""
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def feature_dim(self) -> int:
        return len(self.feature_names)

    def arrays(self):
        """(X, event, time) as numpy arrays."""
        return split_samples(self.samples)


def load_csv(path, time_column: str = "time", event_column: str = "event") -> Dataset:
    """Read a survival dataset; every other numeric column is a feature."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        for needed in (time_column, event_column):
            if needed not in header:
                raise ValueError(
                    f"{path}: missing required column {needed!r}; found {header}"
                )
        t_col = header.index(time_column)
        e_col = header.index(event_column)
        feature_cols = [k for k in range(len(header)) if k not in (t_col, e_col)]
        if not feature_cols:
            raise ValueError(f"{path}: no feature columns besides time and event")
        samples = []
        for row_number, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {row_number} has {len(row)} fields, expected {len(header)}"
                )
            values = []
            for k, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {row_number}, column {header[k]!r}: "
                        f"{cell!r} is not a number"
                    ) from None
            if values[e_col] not in (0.0, 1.0):
                raise ValueError(
                    f"{path}: row {row_number}: event must be 0 or 1, got {row[e_col]!r}"
                )
            t = values[t_col]
            if not np.isfinite(t) or t <= 0.0:
                raise ValueError(
                    f"{path}: row {row_number}: time must be a positive finite "
                    f"number, got {row[t_col]!r}"
                )
            x = np.array([values[k] for k in feature_cols], dtype=np.float64)
            samples.append(Sample(x=x, event=int(values[e_col]), time=t))
    if not samples:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        samples=samples,
        feature_names=tuple(header[k] for k in feature_cols),
        name=path.stem,
    )


def normalize_features(dataset: Dataset):
    """Zero-mean unit-variance feature scaling plus time rescaling.

    Times are divided by the nearest-rank 90th percentile of the observed
    times, so the bulk of the data lands in [0, 1]. Returns the new
    dataset and the stats needed to scale held-out data the same way.
    """
    if dataset.normalized:
        raise ValueError("dataset features were already normalized once")
    X, _, times = dataset.arrays()
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    flat = np.flatnonzero(std == 0.0)
    if flat.size:
        names = [dataset.feature_names[k] for k in flat]
        raise ValueError(f"zero-variance feature column(s) {names} cannot be scaled")
    stats = {"mean": mean.tolist(), "std": std.tolist(), "t_max": time_horizon(times)}
    return apply_normalization(dataset, stats), stats


def apply_normalization(dataset: Dataset, stats: dict) -> Dataset:
    """Scale a dataset with previously computed stats (for held-out data)."""
    if dataset.normalized:
        raise ValueError("dataset features were already normalized once")
    mean = np.asarray(stats["mean"], dtype=np.float64)
    std = np.asarray(stats["std"], dtype=np.float64)
    t_max = float(stats["t_max"])
    if mean.size != dataset.feature_dim or std.size != dataset.feature_dim:
        raise ValueError(
            f"normalization stats cover {mean.size} features, "
            f"dataset has {dataset.feature_dim}"
        )
    if not t_max > 0.0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    samples = [
        Sample(x=(s.x - mean) / std, event=s.event, time=s.time / t_max)
        for s in dataset.samples
    ]
    return Dataset(
        samples=samples,
        feature_names=dataset.feature_names,
        name=dataset.name,
        normalized=True,
        meta={**dataset.meta, "normalization": stats},
    )


@dataclass(frozen=True)
class SplitResult:
    """Chosen train/validation partition and the quality of the choice."""

    train_indices: tuple
    val_indices: tuple
    seed: int
    discrepancy: float


def subset(samples, indices):
    return [samples[i] for i in indices]


def km_balanced_split(samples, val_fraction: float = 0.25, n_seeds: int = 1000) -> SplitResult:
    """Pick, among n_seeds shuffles, the split whose train and validation
    Kaplan-Meier curves are closest in sup norm.

    The curves are compared at every event time of the full dataset (a
    superset of both parts' jump points, so the sup over it equals the
    true sup-norm distance). Ties keep the lowest seed.
    """
    n = len(samples)
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie strictly inside (0, 1), got {val_fraction}")
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be positive, got {n_seeds}")
    n_val = min(max(int(round(n * val_fraction)), 1), n - 1)
    _, event, time = split_samples(samples)
    grid = np.unique(time[event == 1])
    if grid.size == 0:
        grid = np.unique(time)
    best = None
    for seed in range(n_seeds):
        perm = np.random.default_rng(seed).permutation(n)
        val_idx = perm[:n_val]
        train_idx = perm[n_val:]
        train_curve = km_fit(subset(samples, train_idx))
        val_curve = km_fit(subset(samples, val_idx))
        gap = float(np.max(np.abs(train_curve.evaluate(grid) - val_curve.evaluate(grid))))
        if best is None or gap < best.discrepancy:
            best = SplitResult(
                train_indices=tuple(int(i) for i in np.sort(train_idx)),
                val_indices=tuple(int(i) for i in np.sort(val_idx)),
                seed=seed,
                discrepancy=gap,
            )
    return best


# ---------------------------------------------------------------------------
# Generators

# Six hand-drawn survival targets on the unit time interval: a sharp early
# drop with a long plateau, a long plateau with a sharp late drop, a steady
# decline, a two-cliff shape, a minimal two-point sketch, and a staircase.
TOY_TARGET_CURVES = (
    ((0.05, 0.90), (0.12, 0.35), (0.25, 0.30), (0.60, 0.28), (0.95, 0.25)),
    ((0.10, 0.97), (0.40, 0.94), (0.70, 0.90), (0.82, 0.35), (0.92, 0.08)),
    ((0.15, 0.85), (0.50, 0.55), (0.85, 0.25)),
    ((0.08, 0.95), (0.20, 0.60), (0.35, 0.55), (0.55, 0.50), (0.70, 0.20), (0.90, 0.15)),
    ((0.30, 0.70), (0.75, 0.40)),
    ((0.10, 0.92), (0.25, 0.80), (0.40, 0.66), (0.55, 0.52), (0.70, 0.38), (0.85, 0.24), (0.97, 0.12)),
)


def toy_dataset(seed: int = 123, feature_dim: int = 32):
    """Random unit-cube features paired with fixed survival target points.

    Returns (X, targets) where targets[i] is a list of (time, probability)
    pairs the model should interpolate for row i.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(len(TOY_TARGET_CURVES), feature_dim))
    targets = [list(curve) for curve in TOY_TARGET_CURVES]
    return X, targets


def synthetic_weibull(
    n: int,
    feature_dim: int = 5,
    censor_rate: float = 0.3,
    seed: int = 0,
    shape: float = 1.5,
) -> Dataset:
    """Weibull proportional-hazards data with uniform censoring.

    Event times follow T = (E / exp(beta . x))^(1/shape) with E standard
    exponential; censoring times are U(0, c_max) with c_max calibrated by
    bisection so the realized censoring fraction lands near censor_rate.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if not 0.0 <= censor_rate < 1.0:
        raise ValueError(f"censor_rate must lie in [0, 1), got {censor_rate}")
    if shape <= 0.0:
        raise ValueError(f"shape must be positive, got {shape}")
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, feature_dim))
    beta = np.linspace(1.0, -1.0, feature_dim)
    risk = np.exp(X @ beta)
    event_time = (rng.standard_exponential(n) / risk) ** (1.0 / shape)
    meta = {"beta": beta.tolist(), "shape": shape, "seed": seed}
    if censor_rate == 0.0:
        time = event_time
        event = np.ones(n, dtype=np.int64)
        meta["c_max"] = None
        meta["censor_fraction"] = 0.0
    else:
        u = rng.random(n)

        def censored_fraction(c_max):
            return float(np.mean(u * c_max < event_time))

        lo, hi = 1e-9, float(event_time.max())
        while censored_fraction(hi) > censor_rate:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if censored_fraction(mid) > censor_rate:
                lo = mid
            else:
                hi = mid
        c_max = hi
        censor_time = np.maximum(u * c_max, 1e-9)
        event = (event_time <= censor_time).astype(np.int64)
        time = np.minimum(event_time, censor_time)
        meta["c_max"] = c_max
        meta["censor_fraction"] = 1.0 - float(event.mean())
    samples = [
        Sample(x=X[i], event=int(event[i]), time=float(time[i])) for i in range(n)
    ]
    return Dataset(
        samples=samples,
        feature_names=tuple(f"x{j}" for j in range(feature_dim)),
        name="weibull",
        meta=meta,
    )
