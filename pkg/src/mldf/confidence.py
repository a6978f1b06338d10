"""Measure-specific confidence of an averaged score matrix.

``P[i, j]`` is read as the probability that label ``j`` of instance ``i`` is
relevant. Instance-based measures get one confidence per row, label-based
measures one per column. Each row (column) is sorted in descending order
before the formula is applied; callers pass slices in their natural order.

For ranking loss and average precision the confidence is the probability,
with independent Bernoulli labels, that the ground truth is one of the
``l + 1`` patterns ``1..10..0`` consistent with the sorted order, i.e. that
the ranking is perfect. Macro-AUC uses the same construction down a column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import MeasureKind


@dataclass(frozen=True, eq=False)
class ConfidenceVector:
    values: np.ndarray
    axis: str  # "rows" | "columns"
    measure: MeasureKind

    def __len__(self):
        return len(self.values)


def _prefix_pattern_probability(S: np.ndarray) -> np.ndarray:
    """Sum over j = 0..n of prod(S[:, :j]) * prod(1 - S[:, j:]) for each row of S.

    Rows of ``S`` are already sorted in descending order.
    """
    n_rows, n = S.shape
    head = np.ones((n_rows, n + 1))
    head[:, 1:] = np.cumprod(S, axis=1)
    tail = np.ones((n_rows, n + 1))
    tail[:, :-1] = np.cumprod((1.0 - S)[:, ::-1], axis=1)[:, ::-1]
    return (head * tail).sum(axis=1)


def _coverage(S: np.ndarray) -> np.ndarray:
    # 1 - (1/l) * sum_{j=1..l} j * p_j * prod_{k>j} (1 - p_k); the j = 0 term is 0
    n_rows, l = S.shape
    tail = np.ones((n_rows, l))
    tail[:, :-1] = np.cumprod((1.0 - S)[:, :0:-1], axis=1)[:, ::-1]
    j = np.arange(1, l + 1)
    return 1.0 - (j * S * tail).sum(axis=1) / l


def confidence(measure, P) -> ConfidenceVector:
    measure = MeasureKind.from_name(measure)
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.size == 0:
        raise ValueError("confidence needs a non-empty 2-d score matrix")

    if measure is MeasureKind.HAMMING_LOSS:
        vals = np.where(P > 0.5, P, 1.0 - P).mean(axis=0)
        return ConfidenceVector(vals, "columns", measure)

    # slices as rows, each sorted descending (stable)
    S = P.T if measure.label_based else P
    S = -np.sort(-S, axis=1, kind="stable")

    if measure is MeasureKind.ONE_ERROR:
        vals = S[:, 0].copy()
    elif measure is MeasureKind.COVERAGE:
        vals = _coverage(S)
    else:  # ranking loss, average precision, macro-AUC
        vals = _prefix_pattern_probability(S)
    return ConfidenceVector(vals, "columns" if measure.label_based else "rows", measure)
