"""Command-line front end: training, evaluation, splits, and curve export.

Every subcommand is a batch job that reads CSV datasets and writes files
(model JSON, metric-report JSON, history CSV, curve CSV, SVG plots);
stdout carries a single JSON document per invocation so runs are easy to
script. Exit codes: 0 on success, 1 on runtime failure (diagnostic on
stderr), 2 on usage errors.
"""

import argparse
import json
import math
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from monosurv.data import (
    apply_normalization,
    km_balanced_split,
    load_csv,
    normalize_features,
    subset,
    toy_dataset,
)
from monosurv.experiments import run_toy_experiment
from monosurv.ioutil import atomic_write_text
from monosurv.losses import LOSS_KINDS, LossConfig
from monosurv.metrics import evaluate_all, time_horizon
from monosurv.models import (
    MODEL_KINDS,
    ModelConfig,
    build_model,
    km_fit,
    load_model,
    save_model,
    split_samples,
)
from monosurv.training import (
    SelectionResult,
    TrainConfig,
    TrainHistory,
    history_csv,
    multi_run_select,
)

__all__ = ["run_cli", "main", "load_run_config", "bundled_configs"]


# ---------------------------------------------------------------------------
# Run configuration files

_CONFIG_KEYS = {
    "kind",
    "loss",
    "lr",
    "clip_norm",
    "batch_size",
    "ma_window",
    "patience",
    "max_steps",
    "weight_decay",
    "weight_decay_sumo",
    "weight_decay_bce",
    "sigma_factor",
    "bce_weight",
    "gamma",
    "runs",
    "val_fraction",
    "split_seeds",
    "grid_size",
    "time_column",
    "event_column",
}


def bundled_configs():
    """Names of the per-dataset default configs shipped with the package."""
    root = resources.files("monosurv") / "configs"
    return sorted(entry.name[: -len(".json")] for entry in root.iterdir() if entry.name.endswith(".json"))


def load_run_config(name_or_path) -> dict:
    """Resolve --config: a file path, or the name of a bundled config."""
    if not name_or_path:
        return {}
    path = Path(name_or_path)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        bundled = resources.files("monosurv") / "configs" / f"{name_or_path}.json"
        if not bundled.is_file():
            raise FileNotFoundError(
                f"config {name_or_path!r} is neither a file nor a bundled name; "
                f"bundled configs: {', '.join(bundled_configs())}"
            )
        text = bundled.read_text(encoding="utf-8")
    config = json.loads(text)
    if not isinstance(config, dict):
        raise ValueError("config must be a flat JSON object")
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return config


def _resolve(args, config: dict, key: str, default):
    """Explicit flag beats config file beats built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _weight_decay(args, config: dict, loss_kind: str) -> float:
    value = _resolve(args, config, "weight_decay", None)
    if value is not None:
        return value
    return config.get(f"weight_decay_{loss_kind}", 0.0)


# ---------------------------------------------------------------------------
# Small output helpers

def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _write_curve_csv(path, times, values) -> None:
    lines = ["t,S"]
    lines += [f"{float(t)!r},{float(s)!r}" for t, s in zip(times, values)]
    atomic_write_text(path, "\n".join(lines) + "\n")


_PALETTE = ("#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#d68910", "#17a589")


def _svg_plot(series, path, x_label="t", y_label="S(t)") -> None:
    """Standalone SVG line plot; series is a list of (label, xs, ys)."""
    width, height, pad = 640, 440, 56
    x_max = max((max(xs) for _, xs, _ in series if len(xs)), default=1.0) or 1.0
    y_max = 1.0

    def sx(x):
        return pad + (width - 2 * pad) * (x / x_max)

    def sy(y):
        return height - pad - (height - 2 * pad) * (y / y_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        'stroke="black" stroke-width="1"/>',
        f'<text x="{width - pad}" y="{height - pad + 28}" text-anchor="end" '
        f'font-size="13">{x_label}</text>',
        f'<text x="{pad - 34}" y="{pad - 10}" font-size="13">{y_label}</text>',
        f'<text x="{pad}" y="{height - pad + 28}" text-anchor="middle" font-size="12">0</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" text-anchor="end" '
        f'font-size="12">{x_max:g}</text>',
        f'<text x="{pad - 8}" y="{height - pad + 4}" text-anchor="end" font-size="12">0</text>',
        f'<text x="{pad - 8}" y="{pad + 4}" text-anchor="end" font-size="12">1</text>',
    ]
    for k, (label, xs, ys) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(min(max(y, 0.0), y_max)):.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'
        )
        if label:
            parts.append(
                f'<text x="{width - pad + 4}" y="{pad + 16 * k + 4}" font-size="12" '
                f'fill="{color}">{label}</text>'
            )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def _load_dataset(args, config: dict):
    return load_csv(
        args.data,
        time_column=_resolve(args, config, "time_column", "time"),
        event_column=_resolve(args, config, "event_column", "event"),
    )


# ---------------------------------------------------------------------------
# Subcommands

def cmd_train(args) -> int:
    config = load_run_config(args.config)
    kind = _resolve(args, config, "kind", "sumo_plusplus")
    loss_kind = _resolve(args, config, "loss", "bce")
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {loss_kind!r}; choose from {LOSS_KINDS}")
    grid_size = _resolve(args, config, "grid_size", 65)

    dataset = _load_dataset(args, config)
    normalized, stats = normalize_features(dataset)
    split = km_balanced_split(
        normalized.samples,
        val_fraction=_resolve(args, config, "val_fraction", 0.25),
        n_seeds=_resolve(args, config, "split_seeds", 1000),
    )
    train_part = subset(normalized.samples, split.train_indices)
    val_part = subset(normalized.samples, split.val_indices)

    cfg = TrainConfig(
        lr=_resolve(args, config, "lr", 1e-3),
        clip_norm=_resolve(args, config, "clip_norm", 1.0),
        batch_size=_resolve(args, config, "batch_size", 8),
        ma_window=_resolve(args, config, "ma_window", 512),
        patience=_resolve(args, config, "patience", 8192),
        max_steps=_resolve(args, config, "max_steps", 200000),
        weight_decay=_weight_decay(args, config, loss_kind),
        loss_kind=loss_kind,
        loss=LossConfig(
            sigma_factor=_resolve(args, config, "sigma_factor", 0.5),
            bce_weight=_resolve(args, config, "bce_weight", 0.5),
            gamma=_resolve(args, config, "gamma", 1.0),
        ),
        seed=args.seed,
    )
    if kind == "km":
        # nonparametric baseline: nothing to optimize
        model = build_model("km", len(dataset.feature_names)).fit(train_part)
        report = evaluate_all(model, val_part, grid_size=grid_size)
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
            kind,
            ModelConfig(),
            train_part,
            val_part,
            cfg,
            n_runs=_resolve(args, config, "runs", 1),
            grid_size=grid_size,
        )

    model = selection.model
    model.meta.update(
        {
            "dataset": normalized.name,
            "normalization": stats,
            "split": {
                "train_indices": [int(i) for i in split.train_indices],
                "val_indices": [int(i) for i in split.val_indices],
                "seed": split.seed,
                "discrepancy": split.discrepancy,
            },
            "loss_kind": loss_kind,
            "train_config": asdict(cfg),
            "grid_size": grid_size,
            "run_index": selection.run_index,
            "run_seed": selection.seed,
            "mean_scores": selection.mean_scores,
        }
    )

    out = Path(args.out)
    model_path = out / "model.json"
    save_model(model, model_path)
    atomic_write_text(out / "history.csv", history_csv(selection.history))
    report_payload = selection.report.to_dict()
    report_payload["subset"] = "val"
    atomic_write_text(out / "report.json", json.dumps(report_payload, indent=2))

    _emit(
        {
            "kind": kind,
            "loss": loss_kind,
            "steps": selection.history.steps,
            "stop_reason": selection.history.stop_reason,
            "val_mean_score": selection.report["mean_score"],
            "val_concordance": selection.report["concordance"],
            "split_seed": split.seed,
            "model": str(model_path),
        }
    )
    return 0


def cmd_evaluate(args) -> int:
    config = load_run_config(args.config)
    model = load_model(args.model)
    dataset = _load_dataset(args, config)
    stats = model.meta.get("normalization")
    samples = apply_normalization(dataset, stats).samples if stats else dataset.samples
    if args.subset != "all":
        split_meta = model.meta.get("split")
        if not split_meta:
            raise ValueError(
                f"model file carries no split indices; cannot evaluate subset {args.subset!r}"
            )
        samples = subset(samples, split_meta[f"{args.subset}_indices"])
    grid_size = args.grid_size or model.meta.get("grid_size") or 65
    report = evaluate_all(model, samples, grid_size=grid_size)

    payload = report.to_dict()
    payload["subset"] = args.subset
    payload["model"] = str(args.model)
    payload["dataset"] = dataset.name
    atomic_write_text(Path(args.out) / "evaluation.json", json.dumps(payload, indent=2))
    _emit(payload)
    return 0


def cmd_split(args) -> int:
    config = load_run_config(args.config)
    dataset = _load_dataset(args, config)
    result = km_balanced_split(
        dataset.samples,
        val_fraction=_resolve(args, config, "val_fraction", 0.25),
        n_seeds=_resolve(args, config, "split_seeds", 1000),
    )
    out = Path(args.out)
    train_path = out / "train_indices.txt"
    val_path = out / "val_indices.txt"
    atomic_write_text(train_path, "\n".join(str(i) for i in result.train_indices) + "\n")
    atomic_write_text(val_path, "\n".join(str(i) for i in result.val_indices) + "\n")
    _emit(
        {
            "seed": result.seed,
            "discrepancy": result.discrepancy,
            "n_train": len(result.train_indices),
            "n_val": len(result.val_indices),
            "train_indices": str(train_path),
            "val_indices": str(val_path),
        }
    )
    return 0


def cmd_km(args) -> int:
    config = load_run_config(args.config)
    dataset = _load_dataset(args, config)
    curve = km_fit(dataset.samples)
    times = np.concatenate([[0.0], curve.event_times])
    values = np.concatenate([[1.0], curve.values])
    out = Path(args.out)
    csv_path = out / "km.csv"
    _write_curve_csv(csv_path, times, values)

    # step outline for the plot
    xs, ys = [0.0], [1.0]
    for t, s in zip(curve.event_times, curve.values):
        xs += [float(t), float(t)]
        ys += [ys[-1], float(s)]
    svg_path = out / "km.svg"
    _svg_plot([(dataset.name or "KM", xs, ys)], svg_path)

    _emit(
        {
            "n": curve.n_samples,
            "events": int(curve.n_events.sum()),
            "final_value": float(values[-1]),
            "csv": str(csv_path),
            "svg": str(svg_path),
        }
    )
    return 0


def cmd_toy(args) -> int:
    config = load_run_config(args.config)
    if args.repeats < 1:
        raise ValueError(f"--repeats must be at least 1, got {args.repeats}")
    grid_size = _resolve(args, config, "grid_size", 65)
    finals: dict[str, list] = {}
    first = None
    for r in range(args.repeats):
        runs = run_toy_experiment(steps=args.steps, seed=args.seed + r)
        if first is None:
            first = runs
        for kind, run in runs.items():
            finals.setdefault(kind, []).append(run.final_loss)

    out = Path(args.out)
    X, _ = toy_dataset()
    grid = np.linspace(0.0, 1.0, grid_size)
    curve_files = []
    for kind, run in first.items():
        for i in range(X.shape[0]):
            path = out / f"toy_{kind}_sample{i}.csv"
            _write_curve_csv(path, grid, run.model.survival_curve(grid, X[i]))
            curve_files.append(str(path))

    loss_lines = ["repeat,kind,final_loss"]
    for kind, values in finals.items():
        loss_lines += [f"{r},{kind},{v!r}" for r, v in enumerate(values)]
    losses_path = out / "losses.csv"
    atomic_write_text(losses_path, "\n".join(loss_lines) + "\n")

    _emit(
        {
            "steps": args.steps,
            "repeats": args.repeats,
            "final_losses": {kind: values[0] for kind, values in finals.items()},
            "median_final_losses": {
                kind: float(np.median(values)) for kind, values in finals.items()
            },
            "losses": str(losses_path),
            "curve_files": curve_files,
        }
    )
    return 0


def cmd_curves(args) -> int:
    config = load_run_config(args.config)
    model = load_model(args.model)
    dataset = _load_dataset(args, config)
    stats = model.meta.get("normalization")
    if stats:
        samples = apply_normalization(dataset, stats).samples
        t_max = float(stats["t_max"])
    else:
        samples = dataset.samples
        _, _, times = split_samples(samples)
        t_max = time_horizon(times)

    try:
        indices = [int(tok) for tok in args.samples.split(",") if tok.strip() != ""]
    except ValueError:
        raise ValueError(f"--samples must be a comma-separated list of integers, got {args.samples!r}")
    if not indices:
        raise ValueError("--samples selected nothing")
    bad = [i for i in indices if not 0 <= i < len(samples)]
    if bad:
        raise ValueError(f"sample index(es) {bad} out of range for {len(samples)} rows")

    grid_size = args.grid_size or model.meta.get("grid_size") or 65
    grid_norm = np.linspace(0.0, 1.0, grid_size)
    out = Path(args.out)
    series = []
    files = []
    for i in indices:
        values = model.survival_curve(grid_norm, samples[i].x)
        path = out / f"curve_sample{i}.csv"
        _write_curve_csv(path, grid_norm * t_max, values)
        files.append(str(path))
        series.append((f"sample {i}", list(grid_norm * t_max), list(values)))
    svg_path = out / "curves.svg"
    _svg_plot(series, svg_path)

    _emit({"samples": indices, "files": files, "svg": str(svg_path)})
    return 0


# ---------------------------------------------------------------------------
# Parser

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed for the run")
    parser.add_argument("--grid-size", type=int, default=None, help="evaluation grid points")
    parser.add_argument(
        "--config",
        default=None,
        help="JSON config file, or the name of a bundled per-dataset config",
    )
    parser.add_argument("--out", default=".", help="directory for output files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monosurv",
        description="Monotone neural survival curves: train, evaluate, and export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and save it with its history")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--kind", default=None, choices=MODEL_KINDS)
    p.add_argument("--loss", default=None, choices=LOSS_KINDS)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--ma-window", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--sigma-factor", type=float, default=None)
    p.add_argument("--bce-weight", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--runs", type=int, default=None, help="seeded runs to select over")
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--split-seeds", type=int, default=None)
    p.add_argument("--time-column", default=None)
    p.add_argument("--event-column", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a dataset")
    p.add_argument("--model", required=True, help="model JSON written by train")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument(
        "--subset",
        default="all",
        choices=("all", "train", "val"),
        help="evaluate everything or just the stored split part",
    )
    p.add_argument("--time-column", default=None)
    p.add_argument("--event-column", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("split", help="choose a KM-balanced train/validation split")
    p.add_argument("--data", required=True)
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--split-seeds", type=int, default=None)
    p.add_argument("--time-column", default=None)
    p.add_argument("--event-column", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("km", help="fit and export the Kaplan-Meier curve")
    p.add_argument("--data", required=True)
    p.add_argument("--time-column", default=None)
    p.add_argument("--event-column", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("toy", help="run the fixed-curve fitting benchmark")
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--repeats", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("curves", help="export survival curves for chosen samples")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", default="0", help="comma-separated sample indices")
    p.add_argument("--time-column", default=None)
    p.add_argument("--event-column", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_curves)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
