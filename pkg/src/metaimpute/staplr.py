"""Two-level stacked penalized logistic regression (StaPLR) with missing views.

Each view gets a cross-validation-tuned ridge logistic base model trained on
the rows where that view is observed.  Out-of-fold predictions of those base
models form the n x V matrix Z; cells of unobserved views stay missing and
are left for a meta-level imputer.  A tuned nonnegative lasso on the
completed Z is the meta model, and its nonzero coefficients select views.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import glm
from .errors import (
    DimensionMismatch,
    FoldWithSingleClass,
    NonFiniteInput,
    TooFewPerClass,
    ViewTooSparse,
)
from .glm import Folds, GlmModel, Penalty


@dataclass(frozen=True)
class ViewLayout:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError("every view needs at least one feature")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_views(self):
        return len(self.sizes)

    @property
    def n_features(self):
        return sum(self.sizes)

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.sizes)))

    def columns(self, v):
        o = self.offsets
        return slice(int(o[v]), int(o[v + 1]))

    def view_of_column(self):
        return np.repeat(np.arange(self.n_views), self.sizes)


@dataclass(frozen=True)
class MultiViewDataset:
    """Feature matrix split into views, binary outcome, view-level mask.

    ``view_missing[i, v]`` marks view ``v`` as absent for row ``i``; the
    stored feature values of an absent view are ignored (conventionally NaN).
    """

    X: np.ndarray
    layout: ViewLayout
    y: np.ndarray
    view_missing: np.ndarray = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.layout.n_features:
            raise DimensionMismatch(
                f"X has shape {X.shape}, layout expects {self.layout.n_features} columns")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch("outcome length differs from row count")
        if not np.isfinite(y).all():
            raise NonFiniteInput("outcome must be fully observed")
        mask = self.view_missing
        if mask is None:
            mask = np.zeros((X.shape[0], self.layout.n_views), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (X.shape[0], self.layout.n_views):
            raise DimensionMismatch("view_missing must be n x V")
        if not np.isfinite(X[~self.expand(mask)]).all():
            raise NonFiniteInput("observed feature cells must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "view_missing", mask)

    @property
    def n(self):
        return self.X.shape[0]

    def expand(self, mask=None):
        """View-level mask -> cell-level n x m mask."""
        mask = self.view_missing if mask is None else mask
        return np.repeat(mask, self.layout.sizes, axis=1)

    def view(self, v):
        return self.X[:, self.layout.columns(v)]

    def observed_rows(self, v):
        return np.flatnonzero(~self.view_missing[:, v])

    def complete_rows(self):
        return np.flatnonzero(~self.view_missing.any(axis=1))

    def subset(self, rows):
        return MultiViewDataset(self.X[rows], self.layout, self.y[rows], self.view_missing[rows])


@dataclass(frozen=True)
class ZMatrix:
    """Out-of-fold base predictions; NaN where the view is missing."""

    z: np.ndarray
    missing: np.ndarray
    folds: Folds


@dataclass(frozen=True)
class StackedModel:
    base_models: tuple
    meta_model: GlmModel
    layout: ViewLayout

    def base_predictions(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.layout.n_features:
            raise DimensionMismatch(
                f"expected {self.layout.n_features} columns, got shape {X.shape}")
        return np.column_stack([m.predict_proba(X[:, self.layout.columns(v)])
                                for v, m in enumerate(self.base_models)])

    def predict_proba(self, X):
        return self.meta_model.predict_proba(self.base_predictions(X))

    def selected_views(self):
        return self.meta_model.coef > 0


@dataclass
class StaplrConfig:
    """Knobs shared by base and meta learning; defaults follow the build decisions."""

    tuning_folds: int = 10
    meta_folds: int = 10
    n_lambda: int = 100
    min_ratio: Optional[float] = None
    min_complete: int = 20


def make_folds(n, K, outcome, seed):
    """Stratified fold assignment.

    Rows of each class are shuffled, the classes are laid out one after the
    other and dealt round-robin, so fold sizes differ by at most one and each
    fold's class counts are within one of the overall proportion.
    """
    y = np.asarray(outcome)
    if y.shape != (n,):
        raise DimensionMismatch("outcome length must equal n")
    if not 2 <= K <= n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    order = []
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        if rows.size < K:
            raise TooFewPerClass(f"class {cls:g} has {rows.size} rows for {K} folds")
        order.append(rng.permutation(rows))
    if len(order) < 2:
        raise TooFewPerClass("outcome has a single class")
    assignment = np.empty(n, dtype=np.int64)
    assignment[np.concatenate(order)] = np.arange(n) % K
    return Folds(assignment, K)


def _tuned_fit(X, y, penalty, config, seed):
    folds = make_folds(X.shape[0], config.tuning_folds, y, seed)
    grid = glm.make_lambda_grid(X, y, penalty, config.n_lambda, config.min_ratio)
    return glm.cv_tune(X, y, penalty, folds, grid)


def _require_trainable(y, v, config):
    if y.size < config.min_complete:
        raise ViewTooSparse(f"view {v} has {y.size} usable rows (< {config.min_complete})")
    if y.min() == y.max():
        raise ViewTooSparse(f"view {v}: usable rows contain a single class")


def _view_seed(seed, *keys):
    return np.random.SeedSequence([int(seed), *keys])


def fit_base_learners(data, config=None, seed=0):
    """Tuned ridge model per view on that view's complete cases."""
    config = config or StaplrConfig()
    models = []
    for v in range(data.layout.n_views):
        rows = data.observed_rows(v)
        y = data.y[rows]
        _require_trainable(y, v, config)
        models.append(_tuned_fit(data.view(v)[rows], y, Penalty.RIDGE, config,
                                 _view_seed(seed, 0, v)).model)
    return tuple(models)


def build_z(data, meta_folds, config=None, seed=0,
            on_fit: Callable[[int, int, np.ndarray], None] | None = None):
    """Cross-validated prediction matrix with missing cells left as NaN.

    For view ``v`` and fold ``k`` the base learner is tuned and fit on rows
    outside ``k`` where ``v`` is observed and predicts the rows of ``k`` where
    ``v`` is observed.  ``on_fit(v, k, train_rows)`` is called before each fit.
    """
    config = config or StaplrConfig()
    if meta_folds.n != data.n:
        raise DimensionMismatch("meta folds do not cover the dataset")
    V = data.layout.n_views
    z = np.full((data.n, V), np.nan)
    for v in range(V):
        if data.view_missing[:, v].all():
            raise ViewTooSparse(f"view {v} is missing for every row")
        Xv = data.view(v)
        observed = ~data.view_missing[:, v]
        for k in range(meta_folds.n_folds):
            in_fold = meta_folds.assignment == k
            train = np.flatnonzero(observed & ~in_fold)
            test = np.flatnonzero(observed & in_fold)
            if test.size == 0:
                continue
            y = data.y[train]
            if y.size and y.min() == y.max():
                raise FoldWithSingleClass(f"view {v}, fold {k}: single-class training rows")
            _require_trainable(y, v, config)
            if on_fit is not None:
                on_fit(v, k, train)
            model = _tuned_fit(Xv[train], y, Penalty.RIDGE, config,
                               _view_seed(seed, 1, v, k)).model
            z[test, v] = model.predict_proba(Xv[test])
    return ZMatrix(z, data.view_missing.copy(), meta_folds)


def fit_meta(z_complete, y, config=None, seed=0):
    """Tuned nonnegative lasso on a completed Z."""
    config = config or StaplrConfig()
    z_complete = np.asarray(z_complete, dtype=float)
    if not np.isfinite(z_complete).all():
        raise NonFiniteInput("meta-level input still has missing cells")
    return _tuned_fit(z_complete, np.asarray(y, float), Penalty.NONNEG_LASSO, config,
                      _view_seed(seed, 2)).model


def predict_stacked(model, new_features):
    return model.predict_proba(new_features)


def selected_views(model):
    return model.selected_views()


def meta_folds_for(data, config=None, seed=0):
    config = config or StaplrConfig()
    return make_folds(data.n, config.meta_folds, data.y, _view_seed(seed, 3))


def fit_stacked(data, config=None, seed=0, z_complete=None):
    """Full pipeline for a dataset without missing views.

    With ``z_complete`` given (already imputed Z), only the base learners and
    the meta learner are fit.
    """
    config = config or StaplrConfig()
    if z_complete is None:
        if data.view_missing.any():
            raise ValueError("dataset has missing views; impute Z first")
        z_complete = build_z(data, meta_folds_for(data, config, seed), config, seed).z
    base = fit_base_learners(data, config, seed)
    meta = fit_meta(z_complete, data.y, config, seed)
    return StackedModel(base, meta, data.layout)
