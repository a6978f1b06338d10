"""Multi-label decision trees.

Two split criteria over binary label vectors:

* ``VARIANCE`` (predictive clustering tree): impurity of a node is the sum
  over labels of the within-node variance, ``sum_j q_j (1 - q_j)`` for
  binary labels with positive fraction ``q_j``.
* ``ENTROPY`` (ML-C4.5): impurity is the sum of the per-label binary
  entropies in bits.

and two ways of choosing split points for a candidate feature:

* ``EXHAUSTIVE`` scans the midpoints between consecutive distinct values.
* ``SINGLE_RANDOM`` draws one threshold uniformly in ``[min, max)`` of the
  feature at the node, as in extremely randomized trees.

Depth counts levels: ``max_depth=1`` is a single leaf. Rows go left iff
``x[feature] <= threshold``. Leaves store the positive fraction of every
label among the training rows that reach them.

Trees are stored as flat node arrays (preorder is not guaranteed; node 0
is the root and ``left == -1`` marks a leaf), which is also the persisted
encoding.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

# splits whose gain does not exceed this are treated as no improvement
MIN_GAIN = 1e-12


class SplitCriterion(enum.IntEnum):
    VARIANCE = 0
    ENTROPY = 1


class SplitPointMode(enum.IntEnum):
    EXHAUSTIVE = 0
    SINGLE_RANDOM = 1


@dataclass(frozen=True)
class TreeParams:
    criterion: SplitCriterion = SplitCriterion.VARIANCE
    mode: SplitPointMode = SplitPointMode.EXHAUSTIVE
    max_depth: int = 3
    min_samples_leaf: int = 1
    feature_candidates: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "criterion", SplitCriterion(self.criterion))
        object.__setattr__(self, "mode", SplitPointMode(self.mode))
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.feature_candidates < 1:
            raise ValueError("feature_candidates must be >= 1")


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray     # int64, -1 at leaves
    threshold: np.ndarray   # float64
    left: np.ndarray        # int64, -1 at leaves
    right: np.ndarray       # int64, -1 at leaves
    value: np.ndarray       # (n_nodes, l) positive fractions
    n_samples: np.ndarray   # int64 training rows (with multiplicity) per node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_labels(self) -> int:
        return self.value.shape[1]

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def depth(self) -> int:
        """Levels on the longest root-to-leaf path."""
        best, stack = 0, [(0, 1)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] >= 0:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


# ---------------------------------------------------------------------------
# Gain

def _impurity(criterion, Y) -> float:
    q = np.asarray(Y, dtype=np.float64).mean(axis=0)
    if SplitCriterion(criterion) is SplitCriterion.VARIANCE:
        return float(((np.asarray(Y, dtype=np.float64) - q) ** 2).mean(axis=0).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(q > 0, q * np.log2(q), 0.0)
              + np.where(q < 1, (1 - q) * np.log2(1 - q), 0.0))
    return float(h.sum())


def split_gain(criterion, targets, left, right) -> float:
    """Impurity decrease of splitting ``targets`` rows into ``left`` / ``right``.

    ``left`` and ``right`` are row index arrays (or boolean masks) into ``targets``.
    """
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    left = np.asarray(left)
    right = np.asarray(right)
    if left.dtype == bool:
        left = np.flatnonzero(left)
    if right.dtype == bool:
        right = np.flatnonzero(right)
    if left.size == 0 or right.size == 0:
        raise ValueError("both sides of a split must be non-empty")
    YL, YR = Y[left], Y[right]
    parent = np.concatenate([YL, YR])
    n, nl, nr = len(parent), len(YL), len(YR)
    return (_impurity(criterion, parent)
            - nl / n * _impurity(criterion, YL)
            - nr / n * _impurity(criterion, YR))


# ---------------------------------------------------------------------------
# Kernel

@numba.njit(cache=True, nogil=True)
def _node_impurity(sums, n, criterion):
    total = 0.0
    for j in range(sums.shape[0]):
        q = sums[j] / n
        if criterion == 0:
            total += q * (1.0 - q)
        else:
            if q > 0.0 and q < 1.0:
                total -= q * np.log2(q) + (1.0 - q) * np.log2(1.0 - q)
    return total


@numba.njit(cache=True, nogil=True)
def _better(gain, f, thr, best_gain, best_f, best_thr):
    if gain > best_gain:
        return True
    if gain == best_gain and best_f >= 0:
        if f < best_f or (f == best_f and thr < best_thr):
            return True
    return False


@numba.njit(cache=True, nogil=True)
def _build(X, Y, samples, criterion, mode, max_depth, min_leaf, n_cand, seed, capacity, min_gain):
    np.random.seed(seed)
    d = X.shape[1]
    l = Y.shape[1]

    feature = np.full(capacity, -1, np.int64)
    threshold = np.zeros(capacity)
    left = np.full(capacity, -1, np.int64)
    right = np.full(capacity, -1, np.int64)
    value = np.zeros((capacity, l))
    counts = np.zeros(capacity, np.int64)

    st_node = np.empty(capacity, np.int64)
    st_start = np.empty(capacity, np.int64)
    st_end = np.empty(capacity, np.int64)
    st_depth = np.empty(capacity, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = samples.shape[0]
    st_depth[0] = 1
    top = 1
    n_nodes = 1

    features = np.arange(d)
    parent_sums = np.zeros(l)
    left_sums = np.zeros(l)
    right_sums = np.zeros(l)
    xs = np.empty(samples.shape[0])

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start

        parent_sums[:] = 0.0
        for s in range(start, end):
            r = samples[s]
            for j in range(l):
                parent_sums[j] += Y[r, j]
        for j in range(l):
            value[node, j] = parent_sums[j] / n
        counts[node] = n

        pure = True
        for j in range(l):
            if parent_sums[j] != 0.0 and parent_sums[j] != n:
                pure = False
                break
        if depth >= max_depth or pure or n < 2 * min_leaf:
            continue

        parent_imp = _node_impurity(parent_sums, n, criterion)
        best_gain = -np.inf
        best_f = -1
        best_thr = 0.0

        for c in range(min(n_cand, d)):
            # partial Fisher-Yates: features[c] becomes a fresh draw
            k = c + np.random.randint(d - c)
            tmp = features[c]
            features[c] = features[k]
            features[k] = tmp
            f = features[c]

            for s in range(start, end):
                xs[s - start] = X[samples[s], f]

            if mode == 0:
                order = np.argsort(xs[:n], kind="mergesort")
                left_sums[:] = 0.0
                for i in range(1, n):
                    r = samples[start + order[i - 1]]
                    for j in range(l):
                        left_sums[j] += Y[r, j]
                    if i < min_leaf or n - i < min_leaf:
                        continue
                    lo = xs[order[i - 1]]
                    hi = xs[order[i]]
                    if not lo < hi:
                        continue
                    for j in range(l):
                        right_sums[j] = parent_sums[j] - left_sums[j]
                    gain = (parent_imp
                            - (i / n) * _node_impurity(left_sums, i, criterion)
                            - ((n - i) / n) * _node_impurity(right_sums, n - i, criterion))
                    thr = (lo + hi) / 2.0
                    if thr >= hi:
                        thr = lo
                    if _better(gain, f, thr, best_gain, best_f, best_thr):
                        best_gain = gain
                        best_f = f
                        best_thr = thr
            else:
                lo = np.inf
                hi = -np.inf
                for i in range(n):
                    if xs[i] < lo:
                        lo = xs[i]
                    if xs[i] > hi:
                        hi = xs[i]
                if not lo < hi:
                    continue
                thr = lo + np.random.random() * (hi - lo)
                if thr >= hi:
                    thr = lo
                left_sums[:] = 0.0
                nl = 0
                for i in range(n):
                    if xs[i] <= thr:
                        nl += 1
                        r = samples[start + i]
                        for j in range(l):
                            left_sums[j] += Y[r, j]
                if nl < min_leaf or n - nl < min_leaf:
                    continue
                for j in range(l):
                    right_sums[j] = parent_sums[j] - left_sums[j]
                gain = (parent_imp
                        - (nl / n) * _node_impurity(left_sums, nl, criterion)
                        - ((n - nl) / n) * _node_impurity(right_sums, n - nl, criterion))
                if _better(gain, f, thr, best_gain, best_f, best_thr):
                    best_gain = gain
                    best_f = f
                    best_thr = thr

        if best_f < 0 or not best_gain > min_gain:
            continue

        # stable in-place partition of samples[start:end]
        nl = 0
        for s in range(start, end):
            if X[samples[s], best_f] <= best_thr:
                nl += 1
        buf = samples[start:end].copy()
        a = start
        b = start + nl
        for i in range(n):
            r = buf[i]
            if X[r, best_f] <= best_thr:
                samples[a] = r
                a += 1
            else:
                samples[b] = r
                b += 1

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2

        st_node[top] = right[node]
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = left[node]
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], counts[:n_nodes])


@numba.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], np.int64)
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@numba.njit(cache=True, nogil=True)
def _accumulate(X, feature, threshold, left, right, value, out):
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        for j in range(value.shape[1]):
            out[r, j] += value[node, j]


# ---------------------------------------------------------------------------

def _as_targets(Z) -> np.ndarray:
    Z = np.asarray(Z)
    if Z.ndim != 2:
        raise ValueError("targets must be a 2-d label matrix")
    if not np.all((Z == 0) | (Z == 1)):
        raise ValueError("targets must be binary")
    return np.ascontiguousarray(Z, dtype=np.float64)


def fit_tree(params: TreeParams, X, Z, row_indices=None) -> Tree:
    """Grow one tree on ``X[row_indices]`` / ``Z[row_indices]``.

    ``row_indices`` may repeat rows (bootstrap samples); repeats are weighted
    by multiplicity in both split search and leaf fractions.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = _as_targets(Z)
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Z row counts differ")
    if row_indices is None:
        row_indices = np.arange(X.shape[0])
    samples = np.array(row_indices, dtype=np.int64)
    if samples.size == 0:
        raise ValueError("row_indices must be non-empty")
    n = samples.size
    capacity = 2 * n - 1
    if params.max_depth < 62:
        capacity = min(capacity, 2 ** params.max_depth - 1)
    arrays = _build(X, Y, samples, int(params.criterion), int(params.mode),
                    int(params.max_depth), int(params.min_samples_leaf),
                    int(params.feature_candidates), int(params.seed) & 0xFFFFFFFF,
                    int(capacity), MIN_GAIN)
    return Tree(*(np.array(a) for a in arrays))


def predict_tree(tree: Tree, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return tree.predict(x.reshape(1, -1))[0]


def accumulate_predictions(tree: Tree, X: np.ndarray, out: np.ndarray) -> None:
    """Add ``tree``'s leaf vectors for each row of ``X`` into ``out`` in place."""
    _accumulate(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, out)
