"""Regression random forest used by the missForest-style imputer.

Trees are grown unpruned on bootstrap samples: a node is split while it holds
more than ``min_node`` (bootstrap) rows and its responses are not all equal.
Each split takes the best variance-reducing (feature, threshold) pair among
``mtry`` features drawn without replacement; thresholds sit midway between
consecutive distinct values.  Exact score ties go to the lowest feature index
and then the lowest threshold.  Tree ``t`` draws its randomness from
``SeedSequence([seed, t])`` only, so trees can be grown in any order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, NonFiniteInput


@njit(cache=True)
def _grow(Xt, y, rows, counts, mtry, min_node, seed):
    """Grow one tree on distinct ``rows`` carrying bootstrap multiplicities ``counts``."""
    np.random.seed(seed)
    p = Xt.shape[0]
    m = rows.shape[0]
    cap = 2 * m + 1
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)

    idx = np.arange(m)
    perm = np.arange(p)
    chosen = np.empty(mtry, dtype=np.int64)
    vals = np.empty(m)
    order = np.empty(m, dtype=np.int64)
    wy = np.empty(m)
    cw = np.empty(m)
    for i in range(m):
        cw[i] = counts[i]
        wy[i] = counts[i] * y[rows[i]]
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        size = hi - lo
        total = 0.0
        weight = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(lo, hi):
            k = idx[i]
            total += wy[k]
            weight += cw[k]
            yi = y[rows[k]]
            if yi < ymin:
                ymin = yi
            if yi > ymax:
                ymax = yi
        value[node] = total / weight
        if weight <= min_node or ymin == ymax:
            continue

        # partial Fisher-Yates: first mtry entries of perm are a uniform draw
        for a in range(mtry):
            b = a + np.random.randint(0, p - a)
            tmp = perm[a]
            perm[a] = perm[b]
            perm[b] = tmp
            chosen[a] = perm[a]
        chosen.sort()

        best_score = -np.inf
        best_f = -1
        best_t = 0.0
        for c in range(mtry):
            f = chosen[c]
            row = Xt[f]
            # insertion sort of the node's local positions by feature value
            for i in range(size):
                k = idx[lo + i]
                x = row[rows[k]]
                j = i - 1
                while j >= 0 and vals[j] > x:
                    vals[j + 1] = vals[j]
                    order[j + 1] = order[j]
                    j -= 1
                vals[j + 1] = x
                order[j + 1] = k
            sl = 0.0
            nl = 0.0
            for i in range(size - 1):
                k = order[i]
                sl += wy[k]
                nl += cw[k]
                if vals[i] < vals[i + 1]:
                    sr = total - sl
                    score = sl * sl / nl + sr * sr / (weight - nl)
                    if score > best_score:
                        best_score = score
                        best_f = f
                        t = vals[i] + 0.5 * (vals[i + 1] - vals[i])
                        if t >= vals[i + 1]:
                            t = vals[i]
                        best_t = t
        if best_f < 0:
            continue

        row = Xt[best_f]
        i = lo
        j = hi - 1
        while i <= j:
            if row[rows[idx[i]]] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feat[node] = best_f
        thr[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        st_node[top] = rnode
        st_lo[top] = i
        st_hi[top] = hi
        top += 1
        st_node[top] = lnode
        st_lo[top] = lo
        st_hi[top] = i
        top += 1
    return feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _predict_flat(X, feat, thr, left, right, value, offsets):
    n = X.shape[0]
    T = offsets.shape[0] - 1
    out = np.zeros((T, n))
    for t in range(T):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feat[base + node] >= 0:
                if X[i, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[t, i] = value[base + node]
    return out


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    min_node: int

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def predict(self, X):
        offsets = np.array([0, self.n_nodes])
        return _predict_flat(np.ascontiguousarray(X, dtype=float), self.feature,
                             self.threshold, self.left, self.right, self.value, offsets)[0]


@dataclass(frozen=True)
class RandomForest:
    trees: tuple
    mtry: int
    in_bag: np.ndarray  # (n_trees, n) bootstrap multiplicities
    n_features: int

    @property
    def n_trees(self):
        return len(self.trees)

    def _flat(self):
        offsets = np.concatenate(([0], np.cumsum([t.n_nodes for t in self.trees])))
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
        return (cat("feature"), cat("threshold"), cat("left"), cat("right"), cat("value"),
                offsets)

    def tree_predictions(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} columns, got {X.shape}")
        return _predict_flat(X, *self._flat())

    def predict(self, X):
        return self.tree_predictions(X).mean(axis=0)

    def oob_prediction(self, X_train):
        """Average over trees whose bootstrap sample excluded the row (NaN if none)."""
        per_tree = self.tree_predictions(X_train)
        oob = self.in_bag == 0
        counts = oob.sum(axis=0)
        with np.errstate(invalid="ignore"):
            return np.where(counts > 0, (per_tree * oob).sum(axis=0) / counts, np.nan)


def default_mtry(p):
    return max(1, p // 3)


def fit_forest(X, y, n_trees=100, mtry=None, min_node=5, seed=0, bootstrap=True):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionMismatch("X must be n x p and y of length n")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("forest inputs must be finite")
    n, p = X.shape
    if n < 2 or p < 1:
        raise ValueError("need n >= 2 and p >= 1")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    mtry = default_mtry(p) if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}]")
    Xt = np.ascontiguousarray(X.T)
    trees = []
    in_bag = np.zeros((n_trees, n), dtype=np.int64)
    for t in range(n_trees):
        ss = np.random.SeedSequence([int(seed), t])
        rng = np.random.default_rng(ss)
        sample = rng.integers(0, n, n) if bootstrap else np.arange(n)
        in_bag[t] = np.bincount(sample, minlength=n)
        tree_seed = int(ss.generate_state(1)[0] & 0x7FFFFFFF)
        rows = np.flatnonzero(in_bag[t])
        arrays = _grow(Xt, y, rows, in_bag[t, rows].astype(float), mtry, int(min_node),
                       tree_seed)
        trees.append(RegressionTree(*arrays, min_node=int(min_node)))
    return RandomForest(tuple(trees), mtry, in_bag, p)


def predict_forest(forest, X_new):
    return forest.predict(X_new)
