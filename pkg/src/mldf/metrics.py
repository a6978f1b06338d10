"""The six multi-label measures, score binarization and label ranks.

Conventions that matter for reproducibility:

* ``binarize`` is strict: a label is predicted relevant iff its score is
  greater than the threshold.
* Ranks count strictly greater scores and break ties in favour of the
  lower label index, so every row has ranks 1..l exactly once.
* Ranking-loss pairs count ties as misordered while macro-AUC pairs count
  ties as correctly ordered.
* Instances whose relevant or irrelevant set is empty are left out of the
  instance-based averages; one-class label columns are left out of
  macro-AUC.
"""
from __future__ import annotations

import enum

import numpy as np

from .errors import UndefinedMeasureError

DEFAULT_THRESHOLD = 0.5
_CHUNK_CELLS = 1 << 22


class MeasureKind(enum.Enum):
    HAMMING_LOSS = "hamming-loss"
    ONE_ERROR = "one-error"
    COVERAGE = "coverage"
    RANKING_LOSS = "ranking-loss"
    AVERAGE_PRECISION = "average-precision"
    MACRO_AUC = "macro-auc"

    @property
    def higher_is_better(self) -> bool:
        return self in (MeasureKind.AVERAGE_PRECISION, MeasureKind.MACRO_AUC)

    @property
    def label_based(self) -> bool:
        return self in (MeasureKind.HAMMING_LOSS, MeasureKind.MACRO_AUC)

    @property
    def instance_based(self) -> bool:
        return not self.label_based

    @classmethod
    def from_name(cls, name) -> "MeasureKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown measure {name!r}; expected one of "
                         + ", ".join(m.value for m in cls))

    def is_better(self, a: float, b: float) -> bool:
        """Strictly better, orientation aware. ``b`` may be NaN/None (no value yet)."""
        if b is None or np.isnan(b):
            return not np.isnan(a)
        return a > b if self.higher_is_better else a < b

    def worst_value(self) -> float:
        return -np.inf if self.higher_is_better else np.inf


MEASURES = tuple(MeasureKind)


def _check_pair(scores, truth):
    F = np.asarray(scores, dtype=np.float64)
    Y = np.asarray(truth)
    if F.ndim == 1:
        F = F[None, :]
    if Y.ndim == 1:
        Y = Y[None, :]
    if F.shape != Y.shape:
        raise ValueError(f"shape mismatch: scores {F.shape} vs truth {Y.shape}")
    if F.size == 0:
        raise ValueError("empty score matrix")
    return F, Y.astype(bool)


def binarize(scores, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return (np.asarray(scores, dtype=np.float64) > threshold).astype(np.int8)


def ranks(scores) -> np.ndarray:
    """1-based rank of every entry within its row (see module notes on ties)."""
    F = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    l = F.shape[1]
    a = F[:, :, None]   # label j
    b = F[:, None, :]   # label k
    before = np.tril(np.ones((l, l), dtype=bool), k=-1)  # k < j
    ahead = (b > a) | ((b == a) & before[None, :, :])
    return 1 + ahead.sum(axis=2)


def rank_of(row, j: int) -> int:
    """Rank of label ``j`` (1-based index) within one score vector."""
    row = np.asarray(row, dtype=np.float64)
    if not 1 <= j <= row.shape[0]:
        raise ValueError(f"label index {j} outside 1..{row.shape[0]}")
    s = row[j - 1]
    return int(1 + np.sum(row > s) + np.sum(row[: j - 1] == s))


# ---------------------------------------------------------------------------
# Per-slice values. NaN marks an excluded row or column.

def _instance_values(measure: MeasureKind, F, Y) -> np.ndarray:
    m, l = F.shape
    n_pos = Y.sum(axis=1)
    n_neg = l - n_pos
    valid = (n_pos > 0) & (n_neg > 0)
    out = np.full(m, np.nan)
    if not valid.any():
        return out
    F, Y, n_pos, n_neg = F[valid], Y[valid], n_pos[valid], n_neg[valid]

    if measure is MeasureKind.ONE_ERROR:
        top = np.argmax(F, axis=1)
        vals = (~Y[np.arange(len(top)), top]).astype(np.float64)
    elif measure is MeasureKind.RANKING_LOSS:
        misordered = F[:, :, None] <= F[:, None, :]            # f_u <= f_v
        pair = Y[:, :, None] & ~Y[:, None, :]                  # u relevant, v irrelevant
        vals = (misordered & pair).sum(axis=(1, 2)) / (n_pos * n_neg)
    else:
        R = ranks(F)
        if measure is MeasureKind.COVERAGE:
            vals = (np.where(Y, R, 0).max(axis=1) - 1) / l
        elif measure is MeasureKind.AVERAGE_PRECISION:
            # for relevant j: |{k relevant : rank_k <= rank_j}| / rank_j
            rel_rank = np.where(Y, R, np.iinfo(np.int64).max)
            within = (rel_rank[:, None, :] <= R[:, :, None]).sum(axis=2)
            vals = np.where(Y, within / R, 0.0).sum(axis=1) / n_pos
        else:
            raise ValueError(f"{measure.value} is not instance-based")
    out[valid] = vals
    return out


def _auc_column(f, y) -> float:
    pos = f[y]
    neg = np.sort(f[~y])
    if pos.size == 0 or neg.size == 0:
        return np.nan
    # pairs (a, b) with f_a >= f_b
    hits = np.searchsorted(neg, pos, side="right").sum()
    return hits / (pos.size * neg.size)


def _label_values(measure: MeasureKind, F, Y, threshold) -> np.ndarray:
    if measure is MeasureKind.HAMMING_LOSS:
        return (binarize(F, threshold).astype(bool) != Y).mean(axis=0)
    if measure is MeasureKind.MACRO_AUC:
        return np.array([_auc_column(F[:, j], Y[:, j]) for j in range(F.shape[1])])
    raise ValueError(f"{measure.value} is not label-based")


def slice_values(measure, scores, truth, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Per-row (instance-based) or per-column (label-based) measure values.

    Excluded slices are NaN; :func:`evaluate` is the NaN-ignoring mean.
    """
    measure = MeasureKind.from_name(measure)
    F, Y = _check_pair(scores, truth)
    if measure.label_based:
        return _label_values(measure, F, Y, threshold)
    # bound the m x l x l temporaries
    step = max(1, _CHUNK_CELLS // (F.shape[1] ** 2))
    return np.concatenate([_instance_values(measure, F[i:i + step], Y[i:i + step])
                           for i in range(0, F.shape[0], step)])


def evaluate(measure, scores, truth, threshold: float = DEFAULT_THRESHOLD) -> float:
    measure = MeasureKind.from_name(measure)
    vals = slice_values(measure, scores, truth, threshold)
    kept = vals[~np.isnan(vals)]
    if kept.size == 0:
        raise UndefinedMeasureError(
            f"{measure.value} is undefined: every {'label' if measure.label_based else 'instance'}"
            " has a one-sided label set")
    return float(kept.mean())


def evaluate_all(scores, truth, threshold: float = DEFAULT_THRESHOLD) -> dict:
    """All six measures; undefined ones map to NaN."""
    out = {}
    for measure in MEASURES:
        try:
            out[measure.value] = evaluate(measure, scores, truth, threshold)
        except UndefinedMeasureError:
            out[measure.value] = float("nan")
    return out


def evaluate_per_instance(measure, score_row, truth_row) -> float:
    measure = MeasureKind.from_name(measure)
    if not measure.instance_based:
        raise ValueError(f"{measure.value} is not instance-based")
    v = slice_values(measure, np.atleast_2d(score_row), np.atleast_2d(truth_row))[0]
    if np.isnan(v):
        raise UndefinedMeasureError("instance has an empty relevant or irrelevant label set")
    return float(v)


def evaluate_per_label(measure, score_column, truth_column,
                       threshold: float = DEFAULT_THRESHOLD) -> float:
    measure = MeasureKind.from_name(measure)
    if not measure.label_based:
        raise ValueError(f"{measure.value} is not label-based")
    f = np.asarray(score_column, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(truth_column).reshape(-1, 1)
    v = slice_values(measure, f, y, threshold)[0]
    if np.isnan(v):
        raise UndefinedMeasureError("label column contains a single class")
    return float(v)
