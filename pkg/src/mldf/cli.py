"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant
violation. Options may also come from ``--config`` (YAML or JSON, keys are
option names with underscores); flags given on the command line win.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields
from typing import Optional, Tuple

import click
import numpy as np
import yaml

from . import __version__
from .cascade import (CascadeConfig, fit_cascade, layerwise_curve, predict_cascade,
                      probe_correlations, rf_pct_baseline, without_reuse)
from .dataset import DatasetBundle, load_dataset, read_feature_csv, split_train_test
from .errors import DataError, VersionError
from .forest import FOREST_KINDS
from .metrics import MEASURES, MeasureKind, evaluate, evaluate_all
from .persistence import atomic_write_bytes, load_model, save_model

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

MEASURE_NAMES = [m.value for m in MEASURES]


@dataclass(frozen=True)
class RunConfig:
    data: Optional[str] = None
    labels: Optional[str] = None
    measure: str = "hamming-loss"
    max_layers: int = 20
    folds: int = 5
    seed: int = 0
    split: Optional[float] = None
    forests: Tuple[str, ...] = ("rf-pct", "erf-pct")
    trees_initial: int = 40
    trees_step: int = 20
    trees_max: int = 100
    depth_initial: int = 3
    depth_step: int = 3
    threshold_start: int = 3
    binarization_threshold: float = 0.5
    model_out: Optional[str] = None
    model_in: Optional[str] = None
    report: Optional[str] = None

    def cascade_config(self, seed: Optional[int] = None) -> CascadeConfig:
        return CascadeConfig(
            measure=self.measure, max_layers=self.max_layers, n_folds=self.folds,
            forests=self.forests, trees_initial=self.trees_initial, trees_step=self.trees_step,
            trees_max=self.trees_max, depth_initial=self.depth_initial,
            depth_step=self.depth_step, threshold_start=self.threshold_start,
            binarization_threshold=self.binarization_threshold,
            seed=self.seed if seed is None else seed)


class DataFailure(click.ClickException):
    exit_code = EXIT_DATA


def _parse_forests(value) -> Tuple[str, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",")]
    kinds = tuple(v.strip() for v in value if v.strip())
    if not kinds:
        raise click.UsageError("--forests needs at least one forest kind")
    bad = [k for k in kinds if k not in FOREST_KINDS]
    if bad:
        raise click.UsageError(f"unknown forest kind(s) {bad}; choose from {', '.join(FOREST_KINDS)}")
    return kinds


def build_config(config_path: Optional[str], **flags) -> RunConfig:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    values = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise click.UsageError(f"cannot read config {config_path}: {exc}")
        if not isinstance(loaded, dict):
            raise click.UsageError("config file must hold a mapping")
        values.update({k.replace("-", "_"): v for k, v in loaded.items()})
    values.update({k: v for k, v in flags.items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise click.UsageError(f"unknown config keys: {', '.join(unknown)}")
    if "forests" in values:
        values["forests"] = _parse_forests(values["forests"])
    if str(values.get("measure", "hamming-loss")) not in MEASURE_NAMES:
        raise click.UsageError(f"unknown measure {values['measure']!r}; "
                               f"choose from {', '.join(MEASURE_NAMES)}")
    cfg = RunConfig(**values)
    if cfg.split is not None and not 0 < cfg.split < 1:
        raise click.UsageError("--split must lie in (0, 1)")
    for name in ("max_layers", "trees_initial", "trees_max", "depth_initial"):
        if getattr(cfg, name) < 1:
            raise click.UsageError(f"{name} must be positive")
    if cfg.folds < 2:
        raise click.UsageError("--folds must be at least 2")
    return cfg


def _load(cfg: RunConfig) -> DatasetBundle:
    if not cfg.data:
        raise click.UsageError("--data is required")
    if not os.path.exists(cfg.data):
        raise click.UsageError(f"dataset not found: {cfg.data}")
    if cfg.labels and not os.path.exists(cfg.labels):
        raise click.UsageError(f"label file not found: {cfg.labels}")
    return load_dataset(cfg.data, cfg.labels)


def _num(x) -> str:
    return repr(float(x))


def _write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _write_json(path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _matrix_csv(header, rows, fmt) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return out.getvalue()


def _metrics_text(values: dict, spread: Optional[dict] = None) -> str:
    lines = []
    for name in MEASURE_NAMES:
        v = values[name]
        arrow = "↑" if MeasureKind(name).higher_is_better else "↓"
        if spread is None:
            lines.append(f"{name:<18} {arrow} {v:.9f}")
        else:
            lines.append(f"{name:<18} {arrow} {v:.9f} ± {spread[name]:.9f}")
    return "\n".join(lines)


def _split_or_all(cfg: RunConfig, data: DatasetBundle, seed: int):
    if cfg.split is None:
        return data, None
    return split_train_test(data, cfg.split, seed)


def _guard(fn):
    """Map library exceptions onto the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except (DataError, VersionError) as exc:
            raise DataFailure(str(exc))
        except ValueError as exc:
            raise DataFailure(str(exc))
        except AssertionError as exc:
            click.echo(f"Error: internal invariant violated: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)
    return wrapper


# ---------------------------------------------------------------------------

def common_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="YAML/JSON file with option values."),
        click.option("--data", help="Dataset (.arff with Mulan XML, or .csv)."),
        click.option("--labels", help="Mulan label XML for ARFF data."),
        click.option("--measure", type=click.Choice(MEASURE_NAMES), help="Target measure."),
        click.option("--max-layers", type=int, help="Maximal number of layers T."),
        click.option("--folds", type=int, help="Cross-validation folds k."),
        click.option("--seed", type=int, help="Random seed."),
        click.option("--split", type=float, help="Train fraction for a seeded train/test split."),
        click.option("--forests", help="Comma separated forest kinds per layer."),
        click.option("--trees-initial", type=int),
        click.option("--trees-step", type=int),
        click.option("--trees-max", type=int),
        click.option("--depth-initial", type=int),
        click.option("--depth-step", type=int),
        click.option("--threshold-start", type=int,
                     help="First layer whose threshold is determined (3 or 2)."),
        click.option("--report", type=click.Path(dir_okay=False), help="JSON report path."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="mldf")
@click.option("-v", "--verbose", is_flag=True, help="Log per-layer progress.")
def main(verbose):
    """Multi-label deep forest toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@common_options
@click.option("--model-out", type=click.Path(dir_okay=False), help="Where to write the model.")
@_guard
def train(config_path, **flags):
    """Fit a cascade and write the model plus a training report."""
    cfg = build_config(config_path, **flags)
    if not cfg.model_out and not cfg.report:
        raise click.UsageError("nothing to write: give --model-out and/or --report")
    data = _load(cfg)
    train_set, test_set = _split_or_all(cfg, data, cfg.seed)
    started = time.perf_counter()
    model = fit_cascade(cfg.cascade_config(), train_set.features, train_set.labels,
                        label_names=data.label_names)
    elapsed = time.perf_counter() - started
    if cfg.model_out:
        save_model(model, cfg.model_out)
    report = {
        "dataset": data.name,
        "measure": model.measure.value,
        "final_layer": model.final_layer,
        "layers_trained": len(model.history),
        "thresholds": model.thresholds,
        "layers": model.history,
        "wall_seconds": elapsed,
        "n_train": train_set.n_instances,
    }
    if test_set is not None:
        F, _ = predict_cascade(model, test_set.features)
        report["test"] = evaluate_all(F, test_set.labels, model.binarization_threshold)
        report["n_test"] = test_set.n_instances
    if cfg.report:
        _write_json(cfg.report, report)
    click.echo(f"{model.measure.value}: L={model.final_layer} "
               f"({len(model.history)} layers trained, {elapsed:.1f}s)")
    for rec in model.history:
        click.echo(f"  layer {rec['layer']:>2}  train={rec['train_measure']:.9f}  "
                   f"theta={rec['theta']:.9f}  replaced={rec['replaced']}")
    if test_set is not None:
        click.echo(_metrics_text(report["test"]))


@main.command("evaluate")
@common_options
@click.option("--model-in", type=click.Path(dir_okay=False), help="Model to evaluate.")
@click.option("--repeats", type=int, default=None,
              help="Without --model-in: train and test with seeds 1..N and summarize.")
@_guard
def evaluate_cmd(config_path, repeats, **flags):
    """Report all six measures."""
    cfg = build_config(config_path, **flags)
    data = _load(cfg)
    if cfg.model_in:
        model = load_model(cfg.model_in)
        _, test_set = _split_or_all(cfg, data, cfg.seed)
        target = test_set if test_set is not None else data
        if target.n_features != model.n_features:
            raise DataFailure(f"model expects {model.n_features} features, "
                              f"dataset has {target.n_features}")
        F, _ = predict_cascade(model, target.features)
        values = evaluate_all(F, target.labels, model.binarization_threshold)
        if cfg.report:
            _write_json(cfg.report, {"measures": values, "n": target.n_instances})
        click.echo(_metrics_text(values))
        return

    if not repeats:
        raise click.UsageError("give --model-in, or --repeats N to train and test N times")
    split = cfg.split if cfg.split is not None else 0.5
    runs = []
    for seed in range(1, repeats + 1):
        tr, te = split_train_test(data, split, seed)
        model = fit_cascade(cfg.cascade_config(seed), tr.features, tr.labels)
        F, _ = predict_cascade(model, te.features)
        runs.append(evaluate_all(F, te.labels, model.binarization_threshold))
        click.echo(f"seed {seed}: L={model.final_layer} "
                   f"{cfg.measure}={runs[-1][cfg.measure]:.9f}", err=True)
    mean = {k: float(np.mean([r[k] for r in runs])) for k in MEASURE_NAMES}
    std = {k: float(np.std([r[k] for r in runs])) for k in MEASURE_NAMES}
    if cfg.report:
        _write_json(cfg.report, {"measure": cfg.measure, "runs": runs, "mean": mean, "std": std})
    click.echo(_metrics_text(mean, std))


def _read_features(path, labels_path, n_expected):
    if not os.path.exists(path):
        raise click.UsageError(f"feature file not found: {path}")
    if path.lower().endswith(".arff"):
        X = load_dataset(path, labels_path).features
    else:
        with open(path, encoding="utf-8") as fh:
            X, _ = read_feature_csv(fh)
    if X.shape[0] == 0:
        raise DataFailure("feature file has no rows")
    if X.shape[1] != n_expected:
        raise DataFailure(f"model expects {n_expected} features, file has {X.shape[1]}")
    return X


@main.command()
@click.option("--model-in", required=True, type=click.Path(dir_okay=False))
@click.option("--data", required=True, help="Feature CSV (label columns ignored) or ARFF.")
@click.option("--labels", help="Mulan label XML when --data is ARFF.")
@click.option("--scores-out", required=True, type=click.Path(dir_okay=False))
@click.option("--binary-out", required=True, type=click.Path(dir_okay=False))
@_guard
def predict(model_in, data, labels, scores_out, binary_out):
    """Write relevance scores and thresholded predictions as CSV."""
    if not os.path.exists(model_in):
        raise click.UsageError(f"model not found: {model_in}")
    model = load_model(model_in)
    X = _read_features(data, labels, model.n_features)
    F, H = predict_cascade(model, X)
    header = list(model.label_names) or [f"y{j}" for j in range(model.n_labels)]
    _write_text(scores_out, _matrix_csv(header, F, _num))
    _write_text(binary_out, _matrix_csv(header, H, lambda v: str(int(v))))
    click.echo(f"wrote {F.shape[0]} rows")


@main.command()
@common_options
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="CSV for the l x l correlation matrix.")
@_guard
def probe(config_path, out_path, **flags):
    """Label-correlation probe: delete each label from layer 1's output in turn."""
    cfg = build_config(config_path, **flags)
    data = _load(cfg)
    tr, te = _split_or_all(cfg, data, cfg.seed)
    kwargs = {} if te is None else {"X_test": te.features, "Y_test": te.labels}
    D = probe_correlations(cfg.cascade_config(), tr.features, tr.labels, **kwargs)
    names = list(data.label_names)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["deleted"] + names)
    for name, row in zip(names, D):
        writer.writerow([name] + [_num(v) for v in row])
    _write_text(out_path, out.getvalue())
    if cfg.report:
        _write_json(cfg.report, {"labels": names, "deltas": D.tolist()})
    click.echo(out.getvalue(), nl=False)


@main.command("depth-curve")
@common_options
@_guard
def depth_curve(config_path, **flags):
    """Test measure after every layer, grown to --max-layers, plus an RF-PCT baseline."""
    cfg = build_config(config_path, **flags)
    data = _load(cfg)
    tr, te = split_train_test(data, cfg.split if cfg.split is not None else 0.5, cfg.seed)
    cc = cfg.cascade_config()
    curve = layerwise_curve(cc, tr.features, tr.labels, te.features, te.labels)
    L = curve["final_layer"]
    baseline = rf_pct_baseline(tr.features, tr.labels, te.features, te.labels,
                               cc.layer_config(L).n_trees, cfg.seed, cc.measure,
                               cc.binarization_threshold)
    curve["baseline_rf_pct"] = baseline
    if cfg.report:
        _write_json(cfg.report, curve)
    click.echo(f"{curve['measure']}: stop at layer {curve['stop_layer']}, L={L}, "
               f"RF-PCT baseline={baseline:.9f}")
    for t, (a, b) in enumerate(zip(curve["train"], curve["test"]), start=1):
        mark = " <- L" if t == L else ""
        click.echo(f"  layer {t:>2}  train={a:.9f}  test={b:.9f}{mark}")


@main.command()
@common_options
@_guard
def ablation(config_path, **flags):
    """Compare the cascade with and without confidence screening on a test split."""
    cfg = build_config(config_path, **flags)
    data = _load(cfg)
    tr, te = split_train_test(data, cfg.split if cfg.split is not None else 0.5, cfg.seed)
    out = {}
    for name, cc in (("screening", cfg.cascade_config()),
                     ("no-screening", without_reuse(cfg.cascade_config()))):
        model = fit_cascade(cc, tr.features, tr.labels)
        F, _ = predict_cascade(model, te.features)
        out[name] = {"final_layer": model.final_layer,
                     "test": evaluate(cc.measure, F, te.labels, cc.binarization_threshold)}
        click.echo(f"{name:<13} L={model.final_layer:>2} {cc.measure.value}={out[name]['test']:.9f}")
    if cfg.report:
        _write_json(cfg.report, out)


if __name__ == "__main__":  # pragma: no cover
    main()
