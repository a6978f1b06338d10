"""Bagged multi-label forests and k-fold out-of-fold fitting."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List

import numpy as np

from .trees import (SplitCriterion, SplitPointMode, Tree, TreeParams,
                    accumulate_predictions, fit_tree)

# forest kind name -> (criterion, split-point mode)
FOREST_KINDS = {
    "rf-pct": (SplitCriterion.VARIANCE, SplitPointMode.EXHAUSTIVE),
    "erf-pct": (SplitCriterion.VARIANCE, SplitPointMode.SINGLE_RANDOM),
    "rfml-c45": (SplitCriterion.ENTROPY, SplitPointMode.EXHAUSTIVE),
    "erfml-c45": (SplitCriterion.ENTROPY, SplitPointMode.SINGLE_RANDOM),
}


def sqrt_candidates(n_features: int) -> int:
    return max(1, int(math.sqrt(n_features)))


@dataclass(frozen=True)
class ForestParams:
    tree: TreeParams
    n_trees: int = 40
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    @classmethod
    def of_kind(cls, kind: str, n_features: int, n_trees: int, max_depth: int,
                min_samples_leaf: int = 1, bootstrap: bool = True) -> "ForestParams":
        try:
            criterion, mode = FOREST_KINDS[kind]
        except KeyError:
            raise ValueError(f"unknown forest kind {kind!r}; expected one of "
                             + ", ".join(FOREST_KINDS)) from None
        tree = TreeParams(criterion, mode, max_depth, min_samples_leaf,
                          sqrt_candidates(n_features))
        return cls(tree, n_trees, bootstrap)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: List[Tree]
    params: ForestParams
    n_features: int
    n_labels: int


@dataclass(frozen=True, eq=False)
class FoldedForest:
    forests: List[Forest]
    folds: np.ndarray  # fold id of every training row

    @property
    def k(self) -> int:
        return len(self.forests)


def _tree_plan(seed: int, index: int, m: int, bootstrap: bool):
    rng = np.random.default_rng([seed & 0xFFFFFFFF, index])
    rows = rng.integers(0, m, size=m) if bootstrap else np.arange(m)
    return rows, int(rng.integers(0, 2**31 - 1))


def fit_forest(params: ForestParams, X, Z, seed: int, rows=None, n_jobs: int = 1) -> Forest:
    """Fit ``params.n_trees`` trees, each on a bootstrap resample of ``rows``.

    Tree ``i`` draws its resample and its own seed from ``(seed, i)`` so the
    result does not depend on ``n_jobs``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Z = np.asarray(Z)
    if X.ndim != 2 or Z.ndim != 2 or X.shape[0] != Z.shape[0]:
        raise ValueError(f"incompatible shapes X{X.shape} Z{Z.shape}")
    base = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if params.tree.feature_candidates > X.shape[1]:
        raise ValueError("feature_candidates exceeds the number of features")

    def grow(i):
        local, tree_seed = _tree_plan(seed, i, len(base), params.bootstrap)
        return fit_tree(replace(params.tree, seed=tree_seed), X, Z, base[local])

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            trees = list(pool.map(grow, range(params.n_trees)))
    else:
        trees = [grow(i) for i in range(params.n_trees)]
    return Forest(trees, params, X.shape[1], Z.shape[1])


def predict_forest(forest: Forest, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} feature columns, got {X.shape}")
    out = np.zeros((X.shape[0], forest.n_labels))
    for tree in forest.trees:
        accumulate_predictions(tree, X, out)
    out /= len(forest.trees)
    return np.clip(out, 0.0, 1.0, out=out)


def assign_folds(m: int, k: int, seed: int) -> np.ndarray:
    """Shuffled near-equal fold ids 0..k-1 for ``m`` rows."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if m < k:
        raise ValueError(f"cannot split {m} rows into {k} folds")
    perm = np.random.default_rng([seed & 0xFFFFFFFF, 0xF01D]).permutation(m)
    folds = np.empty(m, dtype=np.int64)
    folds[perm] = np.arange(m) % k
    return folds


def fit_folded(params: ForestParams, X, Z, k: int, seed: int, n_jobs: int = 1):
    """Fit one forest per fold on the other folds.

    Returns ``(FoldedForest, oof)`` where ``oof[i]`` comes from the forest
    that never saw row ``i``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Z = np.asarray(Z)
    folds = assign_folds(X.shape[0], k, seed)
    forests = []
    oof = np.zeros((X.shape[0], Z.shape[1]))
    for f in range(k):
        held = folds == f
        forest = fit_forest(params, X, Z, seed=seed * 1009 + f + 1,
                            rows=np.flatnonzero(~held), n_jobs=n_jobs)
        oof[held] = predict_forest(forest, X[held])
        forests.append(forest)
    return FoldedForest(forests, folds), oof


def predict_folded(ff: FoldedForest, X) -> np.ndarray:
    out = predict_forest(ff.forests[0], X)
    for forest in ff.forests[1:]:
        out += predict_forest(forest, X)
    out /= ff.k
    return np.clip(out, 0.0, 1.0, out=out)
