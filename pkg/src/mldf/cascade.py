"""Layer-wise cascade of multi-label forests driven by a target measure.

Each layer fits one folded forest per configured forest kind on the raw
features concatenated with the previous layer's screened representation.
Training uses out-of-fold predictions, so the representation a layer
passes on was produced by models that never saw the row.

Screening (feature reuse): slices of the new representation whose
measure-specific confidence falls below the layer threshold are replaced
by the previous layer's slices. Rows are screened for instance-based
measures, columns for label-based ones. The threshold of a layer is the
mean confidence over the slices whose training measure got worse than in
the previous layer.

Growth stops once the training measure has not improved for ``patience``
consecutive layers; only the layers up to the best one are kept.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .confidence import confidence
from .errors import ConfigError, UndefinedMeasureError
from .forest import (FOREST_KINDS, FoldedForest, ForestParams, fit_folded, fit_forest,
                     predict_folded, predict_forest)
from .metrics import DEFAULT_THRESHOLD, MeasureKind, binarize, evaluate, slice_values

logger = logging.getLogger(__name__)

LayerEvaluator = Callable[[int, np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class CascadeConfig:
    measure: MeasureKind = MeasureKind.HAMMING_LOSS
    max_layers: int = 20
    n_folds: int = 5
    forests: Tuple[str, ...] = ("rf-pct", "erf-pct")
    trees_initial: int = 40
    trees_step: int = 20
    trees_max: int = 100
    depth_initial: int = 3
    depth_step: int = 3
    min_samples_leaf: int = 1
    patience: int = 3
    # thresholds are determined for t >= threshold_start (3 reads "when t > 2")
    threshold_start: int = 3
    determine_thresholds: bool = True
    reuse: bool = True
    binarization_threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "measure", MeasureKind.from_name(self.measure))
        object.__setattr__(self, "forests", tuple(self.forests))
        if self.max_layers < 1:
            raise ConfigError("max_layers must be >= 1")
        if self.n_folds < 2:
            raise ConfigError("n_folds must be >= 2")
        if not self.forests:
            raise ConfigError("at least one forest kind is required")
        unknown = [k for k in self.forests if k not in FOREST_KINDS]
        if unknown:
            raise ConfigError(f"unknown forest kinds {unknown}")
        if min(self.trees_initial, self.trees_max, self.depth_initial) < 1:
            raise ConfigError("tree counts and depths must be positive")
        if self.trees_step < 0 or self.depth_step < 0:
            raise ConfigError("schedule steps must be non-negative")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.threshold_start < 2:
            raise ConfigError("threshold_start must be >= 2")
        if not 0.0 <= self.binarization_threshold <= 1.0:
            raise ConfigError("binarization_threshold must lie in [0, 1]")

    def layer_config(self, t: int) -> "LayerConfig":
        trees = min(self.trees_initial + self.trees_step * (t - 1), self.trees_max)
        depth = self.depth_initial + self.depth_step * (t - 1)
        return LayerConfig(t, self.forests, trees, depth, self.min_samples_leaf)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["measure"] = self.measure.value
        d["forests"] = list(self.forests)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeConfig":
        return cls(**d)


@dataclass(frozen=True)
class LayerConfig:
    index: int
    forests: Tuple[str, ...]
    n_trees: int
    max_depth: int
    min_samples_leaf: int = 1

    def forest_params(self, kind: str, n_inputs: int) -> ForestParams:
        return ForestParams.of_kind(kind, n_inputs, self.n_trees, self.max_depth,
                                    self.min_samples_leaf)


@dataclass(frozen=True, eq=False)
class Representation:
    """Per-forest score blocks, shape ``(n_forests, m, l)``."""

    blocks: np.ndarray

    @property
    def P(self) -> np.ndarray:
        return self.blocks.mean(axis=0)

    @property
    def stacked(self) -> np.ndarray:
        """``m x (n_forests * l)`` matrix fed to the next layer."""
        return np.concatenate(list(self.blocks), axis=1)

    @property
    def shape(self):
        return self.blocks.shape


@dataclass(eq=False)
class Layer:
    config: LayerConfig
    forests: List[FoldedForest]
    n_inputs: int

    @property
    def index(self) -> int:
        return self.config.index

    def transform(self, X_in) -> Representation:
        X_in = np.ascontiguousarray(X_in, dtype=np.float64)
        if X_in.shape[1] != self.n_inputs:
            raise ValueError(f"layer {self.index} expects {self.n_inputs} inputs, got {X_in.shape[1]}")
        return Representation(np.stack([predict_folded(ff, X_in) for ff in self.forests]))


@dataclass(eq=False)
class CascadeModel:
    config: CascadeConfig
    layers: List[Layer]
    thresholds: List[float]
    n_features: int
    n_labels: int
    history: List[dict] = field(default_factory=list)
    label_names: Tuple[str, ...] = ()

    @property
    def measure(self) -> MeasureKind:
        return self.config.measure

    @property
    def final_layer(self) -> int:
        return len(self.layers)

    @property
    def binarization_threshold(self) -> float:
        return self.config.binarization_threshold

    def predict(self, X):
        return predict_cascade(self, X)


# ---------------------------------------------------------------------------
# Screening and thresholds

def reuse_mask(measure, H: Representation, theta: float) -> np.ndarray:
    """Slices (rows or columns) of ``H`` whose confidence is below ``theta``."""
    return confidence(measure, H.P).values < theta


def feature_reuse(measure, H: Representation, G_prev: Optional[Representation],
                  theta: float) -> Representation:
    measure = MeasureKind.from_name(measure)
    if G_prev is None:
        raise ValueError("feature reuse needs the previous layer's representation")
    if H.shape != G_prev.shape:
        raise ValueError(f"representation shapes differ: {H.shape} vs {G_prev.shape}")
    if theta < 0:
        raise ValueError("theta must be non-negative")
    mask = reuse_mask(measure, H, theta)
    blocks = H.blocks.copy()
    if measure.label_based:
        blocks[:, :, mask] = G_prev.blocks[:, :, mask]
    else:
        blocks[:, mask, :] = G_prev.blocks[:, mask, :]
    return Representation(blocks)


def determine_threshold(measure, H: Representation, Y, prev_slice_measures,
                        binarization_threshold: float = DEFAULT_THRESHOLD):
    """Mean confidence over slices whose measure got strictly worse.

    Returns ``(theta, current_slice_measures)``; theta is 0 when no slice got
    worse. Slices with an undefined measure (NaN) never count as worse.
    """
    measure = MeasureKind.from_name(measure)
    current = slice_values(measure, H.P, Y, binarization_threshold)
    prev = np.asarray(prev_slice_measures, dtype=np.float64)
    if prev.shape != current.shape:
        raise ValueError(f"previous slice measures have shape {prev.shape}, expected {current.shape}")
    with np.errstate(invalid="ignore"):
        worse = current < prev if measure.higher_is_better else current > prev
    alpha = confidence(measure, H.P).values
    chosen = alpha[worse]
    theta = float(chosen.mean()) if chosen.size else 0.0
    return theta, current


class LayerGrowth:
    """Tracks the best layer and decides when growth stops."""

    def __init__(self, measure, patience: int = 3):
        self.measure = MeasureKind.from_name(measure)
        self.patience = patience
        self.best: Optional[float] = None
        self.best_layer = 0
        self.stop_layer: Optional[int] = None

    def update(self, t: int, value: float) -> bool:
        """Record layer ``t``'s value; True once growth should stop."""
        if self.measure.is_better(value, self.best):
            self.best = value
            self.best_layer = t
            return False
        stop = t - self.best_layer >= self.patience
        if stop and self.stop_layer is None:
            self.stop_layer = t
        return stop


# ---------------------------------------------------------------------------
# Training

def _forest_seed(seed: int, t: int, f: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, t, f]).generate_state(1)[0])


def fit_layer(config: CascadeConfig, t: int, X_in, Y, layer_config: Optional[LayerConfig] = None):
    """Fit layer ``t``; returns ``(Layer, out-of-fold Representation)``."""
    lc = layer_config or config.layer_config(t)
    X_in = np.ascontiguousarray(X_in, dtype=np.float64)
    forests, blocks = [], []
    for f, kind in enumerate(lc.forests):
        params = lc.forest_params(kind, X_in.shape[1])
        ff, oof = fit_folded(params, X_in, Y, config.n_folds, _forest_seed(config.seed, t, f),
                             n_jobs=config.n_jobs)
        forests.append(ff)
        blocks.append(oof)
    return Layer(lc, forests, X_in.shape[1]), Representation(np.stack(blocks))


def _augment(X, G: Optional[Representation]) -> np.ndarray:
    return X if G is None else np.hstack([X, G.stacked])


def _check_xy(X, Y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError(f"incompatible shapes X{X.shape} Y{Y.shape}")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValueError("Y must be binary")
    return X, Y.astype(np.int8)


def grow_cascade(config: CascadeConfig, X, Y, layer_evaluator: Optional[LayerEvaluator] = None,
                 early_stop: bool = True):
    """Grow layers until the stopping rule fires (or ``max_layers``).

    Returns ``(layers, thresholds, history, growth)`` for every trained layer;
    :func:`fit_cascade` truncates to the best layer. With ``early_stop=False``
    all ``max_layers`` layers are grown and ``growth.stop_layer`` records
    where the rule would have stopped.
    """
    X, Y = _check_xy(X, Y)
    measure = config.measure
    thr = config.binarization_threshold
    if layer_evaluator is None:
        try:
            evaluate(measure, Y.astype(np.float64), Y, thr)
        except UndefinedMeasureError as exc:
            raise ConfigError(f"labels are degenerate for {measure.value}: {exc}") from None

        def layer_evaluator(t, P, Y_):
            return evaluate(measure, P, Y_, thr)

    growth = LayerGrowth(measure, config.patience)
    layers: List[Layer] = []
    thresholds: List[float] = []
    history: List[dict] = []
    G: Optional[Representation] = None
    prev_slices = None

    for t in range(1, config.max_layers + 1):
        started = time.perf_counter()
        layer, H = fit_layer(config, t, _augment(X, G), Y)
        theta = 0.0
        n_replaced = 0
        if G is None or not config.reuse:
            G_new = H
        else:
            if config.determine_thresholds and t >= config.threshold_start:
                theta, _ = determine_threshold(measure, H, Y, prev_slices, thr)
            mask = reuse_mask(measure, H, theta)
            n_replaced = int(mask.sum())
            G_new = feature_reuse(measure, H, G, theta)
        G = G_new
        prev_slices = slice_values(measure, G.P, Y, thr)
        value = float(layer_evaluator(t, G.P, Y))
        stop = growth.update(t, value)
        layers.append(layer)
        thresholds.append(theta)
        history.append({
            "layer": t,
            "n_trees": layer.config.n_trees,
            "max_depth": layer.config.max_depth,
            "n_inputs": layer.n_inputs,
            "theta": theta,
            "replaced": n_replaced,
            "train_measure": value,
            "seconds": time.perf_counter() - started,
        })
        logger.info("layer %d: %s=%.6f theta=%.6f replaced=%d", t, measure.value, value,
                    theta, n_replaced)
        if stop and early_stop:
            break
    return layers, thresholds, history, growth


def fit_cascade(config: CascadeConfig, X, Y, layer_evaluator: Optional[LayerEvaluator] = None,
                label_names: Sequence[str] = ()) -> CascadeModel:
    X, Y = _check_xy(X, Y)
    layers, thresholds, history, growth = grow_cascade(config, X, Y, layer_evaluator)
    L = growth.best_layer
    return CascadeModel(config, layers[:L], thresholds[:L], X.shape[1], Y.shape[1],
                        history, tuple(label_names))


# ---------------------------------------------------------------------------
# Prediction

def forward(layers: Sequence[Layer], thresholds: Sequence[float], config: CascadeConfig, X):
    """Yield the screened representation after each layer for a test batch."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    measure = config.measure
    G: Optional[Representation] = None
    for layer, theta in zip(layers, thresholds):
        H = layer.transform(_augment(X, G))
        if G is None or not config.reuse:
            G = H
        elif measure.label_based and X.shape[0] == 1 and theta > 0:
            warnings.warn("label-based screening needs a batch; single instance passes "
                          "through unscreened", RuntimeWarning, stacklevel=3)
            G = H
        else:
            G = feature_reuse(measure, H, G, theta)
        yield G


def predict_cascade(model: CascadeModel, X_test):
    """Return ``(F, H)``: averaged scores after the final layer and their binarization."""
    X = np.ascontiguousarray(X_test, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, got shape {X.shape}")
    if X.shape[0] < 1:
        raise ValueError("empty batch")
    G = None
    for G in forward(model.layers, model.thresholds, model.config, X):
        pass
    F = G.P
    return F, binarize(F, model.binarization_threshold)


# ---------------------------------------------------------------------------
# Label-correlation probe

def _label_accuracy(P, Y, thr) -> np.ndarray:
    return 1.0 - slice_values(MeasureKind.HAMMING_LOSS, P, Y, thr)


def probe_correlations(config: CascadeConfig, X, Y, deleted_labels: Optional[Sequence[int]] = None,
                       X_test=None, Y_test=None) -> np.ndarray:
    """Relative per-label accuracy drop after zeroing one label in layer 1's output.

    Row ``r`` of the result corresponds to ``deleted_labels[r]`` (1-based;
    default all labels) and holds, for every label ``b``,
    ``(acc_b(intact) - acc_b(ablated)) / acc_b(intact)`` of a two-layer
    cascade. Accuracy is measured on ``(X_test, Y_test)`` when given,
    otherwise on layer 2's out-of-fold training predictions.
    """
    X, Y = _check_xy(X, Y)
    l = Y.shape[1]
    if l < 2:
        raise ValueError("the probe needs at least two labels")
    if deleted_labels is None:
        deleted_labels = range(1, l + 1)
    deleted_labels = list(deleted_labels)
    for j in deleted_labels:
        if not 1 <= j <= l:
            raise ValueError(f"deleted label {j} outside 1..{l}")
    held_out = X_test is not None
    if held_out:
        X_test, Y_test = _check_xy(X_test, Y_test)
    thr = config.binarization_threshold

    layer1, G1 = fit_layer(config, 1, X, Y)
    G1_test = layer1.transform(X_test) if held_out else None

    def second_layer(G_train, G_eval):
        layer2, H2 = fit_layer(config, 2, _augment(X, G_train), Y)
        if held_out:
            return _label_accuracy(layer2.transform(_augment(X_test, G_eval)).P, Y_test, thr)
        return _label_accuracy(H2.P, Y, thr)

    base = second_layer(G1, G1_test)
    out = np.zeros((len(deleted_labels), l))
    for r, j in enumerate(deleted_labels):
        def ablate(G):
            if G is None:
                return None
            blocks = G.blocks.copy()
            blocks[:, :, j - 1] = 0.0
            return Representation(blocks)

        acc = second_layer(ablate(G1), ablate(G1_test))
        with np.errstate(divide="ignore", invalid="ignore"):
            out[r] = np.where(base > 0, (base - acc) / base, 0.0)
    return out


def probe_label_correlation(config: CascadeConfig, X, Y, deleted_label: int,
                            X_test=None, Y_test=None) -> np.ndarray:
    """Per-label relative accuracy drop (length ``l``) for one deleted label (1-based)."""
    return probe_correlations(config, X, Y, [deleted_label], X_test, Y_test)[0]


# ---------------------------------------------------------------------------
# Experiments

def layerwise_curve(config: CascadeConfig, X, Y, X_test, Y_test) -> dict:
    """Grow all ``max_layers`` layers and score every depth on the test set.

    Also reports where the stopping rule would end growth and the best layer
    it would retain.
    """
    X, Y = _check_xy(X, Y)
    X_test, Y_test = _check_xy(X_test, Y_test)
    layers, thresholds, history, growth = grow_cascade(config, X, Y, early_stop=False)
    measure = config.measure
    values = [evaluate(measure, G.P, Y_test, config.binarization_threshold)
              for G in forward(layers, thresholds, config, X_test)]
    # best layer among those trained before the rule fired
    stop = growth.stop_layer or len(layers)
    check = LayerGrowth(measure, config.patience)
    for rec in history[:stop]:
        check.update(rec["layer"], rec["train_measure"])
    return {
        "measure": measure.value,
        "test": values,
        "train": [rec["train_measure"] for rec in history],
        "thresholds": thresholds,
        "stop_layer": stop,
        "final_layer": check.best_layer,
    }


def rf_pct_baseline(X, Y, X_test, Y_test, n_trees: int, seed: int, measure,
                    binarization_threshold: float = DEFAULT_THRESHOLD) -> float:
    """Test measure of one fully grown RF-PCT forest fitted on all of ``(X, Y)``."""
    X, Y = _check_xy(X, Y)
    params = ForestParams.of_kind("rf-pct", X.shape[1], n_trees, max_depth=10**6)
    forest = fit_forest(params, X, Y, seed)
    return evaluate(measure, predict_forest(forest, X_test), Y_test, binarization_threshold)


def without_reuse(config: CascadeConfig) -> CascadeConfig:
    """Configuration for the screening ablation: every threshold stays 0."""
    return replace(config, determine_thresholds=False)
