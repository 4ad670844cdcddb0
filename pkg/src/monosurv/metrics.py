"""Evaluation metrics for survival curves.

The model at a fixed time t is read as a probabilistic classifier of
"dead by t" with predicted probability 1 - S(t|x). Confusion counts are
soft (probabilities are summed, never thresholded), so calibration is
rewarded directly. Time-dependent scores are averaged over the valid
points of a uniform grid on [0, horizon]; a grid point is valid when at
least one known-dead and one known-alive sample remain after dropping
samples censored before t. Ranking quality over the whole horizon is
summarised by a concordance index on restricted mean survival times.
"""

import math
from dataclasses import dataclass

import numpy as np

from monosurv.models import split_samples

__all__ = [
    "CLASSIFICATION_METRICS",
    "REPORT_KEYS",
    "DegenerateMetricError",
    "MetricReport",
    "time_horizon",
    "classification_labels",
    "soft_confusion",
    "confusion_scores",
    "auroc",
    "auprc",
    "brier_score",
    "concordance_index",
    "restricted_mean_survival",
    "survival_matrix",
    "report_from_curves",
    "evaluate_all",
]

CLASSIFICATION_METRICS = (
    "accuracy",
    "balanced_accuracy",
    "auprc",
    "auroc",
    "f_05",
    "f_1",
    "f_2",
    "precision",
    "sensitivity",
    "specificity",
    "youden",
)

REPORT_KEYS = CLASSIFICATION_METRICS + (
    "inverted_brier",
    "concordance",
    "mean_score",
    "min_score",
)


class DegenerateMetricError(ValueError):
    """Raised when a score is undefined for the given labels."""


def time_horizon(times) -> float:
    """Nearest-rank 90th percentile of the observed times.

    Evaluating beyond this point would leave too few subjects at risk for
    the grid metrics to mean much.
    """
    t = np.sort(np.asarray(times, dtype=np.float64).ravel())
    if t.size == 0:
        raise ValueError("need at least one observed time")
    return float(t[math.ceil(0.9 * t.size) - 1])


def classification_labels(t: float, event, time):
    """Ground-truth death-by-t labels and the mask of usable samples.

    A sample counts as dead (label 1) when its event happened at or before
    t, and alive (label 0) when it was still observed after t. Samples
    censored at or before t carry no label and are masked out.
    """
    event = np.asarray(event)
    time = np.asarray(time, dtype=np.float64)
    dead = (time <= t) & (event == 1)
    alive = time > t
    return dead.astype(np.float64), dead | alive


def soft_confusion(probs, labels):
    """Probability-weighted (tp, fp, fn, tn)."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    tp = float(np.sum(y * p))
    fp = float(np.sum((1.0 - y) * p))
    fn = float(np.sum(y * (1.0 - p)))
    tn = float(np.sum((1.0 - y) * (1.0 - p)))
    return tp, fp, fn, tn


def _ratio(num: float, den: float) -> float:
    """Convention: a score with an empty denominator is zero."""
    return num / den if den > 0.0 else 0.0


def _f_beta(tp: float, fp: float, fn: float, beta: float) -> float:
    b2 = beta * beta
    return _ratio((1.0 + b2) * tp, (1.0 + b2) * tp + b2 * fn + fp)


def confusion_scores(tp: float, fp: float, fn: float, tn: float) -> dict:
    """The nine confusion-derived scores (no ranking metrics)."""
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    return {
        "accuracy": _ratio(tp + tn, tp + fp + fn + tn),
        "balanced_accuracy": 0.5 * (sens + spec),
        "f_05": _f_beta(tp, fp, fn, 0.5),
        "f_1": _f_beta(tp, fp, fn, 1.0),
        "f_2": _f_beta(tp, fp, fn, 2.0),
        "precision": _ratio(tp, tp + fp),
        "sensitivity": sens,
        "specificity": spec,
        "youden": sens + spec - 1.0,
    }


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; exact
    ties count one half. Computed with midranks."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateMetricError("auroc needs at least one sample of each class")
    ranks = _midranks(s)
    pos_rank_sum = float(np.sum(ranks[np.asarray(y) == 1]))
    return (pos_rank_sum - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Area under the precision-recall curve by step integration.

    Thresholds sweep the distinct score values from high to low; tied
    scores enter as one block.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n_pos = float(np.sum(y))
    if n_pos == 0:
        raise DegenerateMetricError("auprc needs at least one positive sample")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each distinct-score block
    block_end = np.flatnonzero(np.diff(s_sorted) != 0.0)
    block_end = np.append(block_end, s_sorted.size - 1)
    tp = np.cumsum(y_sorted)[block_end]
    predicted_pos = block_end + 1.0
    recall = tp / n_pos
    precision = tp / predicted_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def brier_score(probs, labels) -> float:
    """Mean squared gap between predicted death probability and outcome."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean((p - y) ** 2))


def concordance_index(time, event, predicted_survival) -> float:
    """Rank agreement between observed and predicted survival.

    A pair is comparable when the earlier observed time belongs to an
    event. It is concordant when the model predicts the shorter survival
    for that sample; exact prediction ties count one half.
    """
    t = np.asarray(time, dtype=np.float64).ravel()
    e = np.asarray(event).ravel()
    p = np.asarray(predicted_survival, dtype=np.float64).ravel()
    if not t.size == e.size == p.size:
        raise ValueError("time, event and predictions must have equal length")
    comparable = (t[:, None] < t[None, :]) & (e[:, None] == 1)
    total = int(comparable.sum())
    if total == 0:
        raise DegenerateMetricError("no comparable pairs: need an event before another observation")
    concordant = int(((p[:, None] < p[None, :]) & comparable).sum())
    tied = int(((p[:, None] == p[None, :]) & comparable).sum())
    return (concordant + 0.5 * tied) / total


def restricted_mean_survival(surv: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Trapezoid area under each survival curve column over the grid."""
    return np.trapezoid(surv, grid, axis=0)


def survival_matrix(model, X: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """S(t|x) for every grid time (rows) and sample (columns)."""
    return np.stack([model.survival_batch(t, X) for t in grid])


@dataclass
class MetricReport:
    """Scores keyed by name plus the grid bookkeeping behind them."""

    scores: dict
    grid: np.ndarray
    valid_points: int

    def __getitem__(self, key: str) -> float:
        return self.scores[key]

    def to_dict(self) -> dict:
        return {
            "scores": {k: self.scores[k] for k in REPORT_KEYS},
            "grid": [float(t) for t in self.grid],
            "valid_points": self.valid_points,
        }


def report_from_curves(surv: np.ndarray, grid: np.ndarray, event, time) -> MetricReport:
    """Score precomputed survival curves against observed outcomes.

    surv has one row per grid time and one column per sample. Grid points
    where the labels degenerate to a single class (or no sample keeps a
    label) are skipped and the averages renormalised over what remains.
    """
    event = np.asarray(event)
    time = np.asarray(time, dtype=np.float64)
    if surv.shape != (grid.size, time.size):
        raise ValueError(
            f"survival matrix shape {surv.shape} does not match "
            f"{(grid.size, time.size)}"
        )
    sums = dict.fromkeys(CLASSIFICATION_METRICS, 0.0)
    brier_sum = 0.0
    valid = 0
    for k in range(grid.size):
        labels, mask = classification_labels(grid[k], event, time)
        if not mask.any():
            continue
        y = labels[mask]
        if y.min() == y.max():
            continue
        p = 1.0 - surv[k][mask]
        point = confusion_scores(*soft_confusion(p, y))
        point["auroc"] = auroc(p, y)
        point["auprc"] = auprc(p, y)
        for name in CLASSIFICATION_METRICS:
            sums[name] += point[name]
        brier_sum += brier_score(p, y)
        valid += 1
    if valid == 0:
        raise DegenerateMetricError(
            "every grid point is single-class; the dataset cannot be scored"
        )
    scores = {name: sums[name] / valid for name in CLASSIFICATION_METRICS}
    scores["inverted_brier"] = 1.0 - brier_sum / valid
    rmst = restricted_mean_survival(surv, grid)
    scores["concordance"] = concordance_index(time, event, rmst)
    core = [scores[name] for name in CLASSIFICATION_METRICS]
    core += [scores["inverted_brier"], scores["concordance"]]
    scores["mean_score"] = float(np.mean(core))
    scores["min_score"] = float(np.min(core))
    return MetricReport(scores=scores, grid=np.asarray(grid, dtype=np.float64), valid_points=valid)


def evaluate_all(model, samples, grid_size: int = 65, t_max=None) -> MetricReport:
    """Full evaluation of a fitted model on a sample list."""
    if grid_size < 2:
        raise ValueError(f"grid_size must be at least 2, got {grid_size}")
    X, event, time = split_samples(samples)
    if t_max is None:
        t_max = time_horizon(time)
    grid = np.linspace(0.0, float(t_max), grid_size)
    surv = survival_matrix(model, X, grid)
    return report_from_curves(surv, grid, event, time)
