"""Penalized logistic regression: ridge and nonnegative lasso.

Both penalties share one engine: an IRLS outer loop around cyclic coordinate
descent.  Predictors are standardized internally (weighted mean, population
standard deviation) and coefficients are reported on the original scale.
The ridge problem is solved in the right-singular basis of the standardized
design, which leaves the penalty unchanged (the basis is orthonormal) but
makes the coordinates nearly uncorrelated and caps their number at
``min(n, p)``.

The loss is the weighted mean negative log-likelihood (half the mean binomial
deviance), so the lasso path enters at ``max_j |<x_j, y - ybar>| / n``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import expit

from ._solver import irls_cd_path
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    FoldWithSingleClass,
    NonFiniteInput,
    SingleClassOutcome,
)

#: Probabilities that enter a logarithm are clamped into [P_CLAMP, 1 - P_CLAMP].
P_CLAMP = 1e-12

RIDGE_LAMBDA_MULTIPLE = 1000.0
MAX_OUTER = 250
TOL_OUTER = 1e-8
TOL_INNER = 1e-9
KKT_TOL = 1e-7
MAX_SWEEPS = 10_000

_P_LOW = np.finfo(float).tiny
_P_HIGH = np.nextafter(1.0, 0.0)


class Penalty(enum.Enum):
    RIDGE = "ridge"
    NONNEG_LASSO = "nonneg_lasso"


@dataclass(frozen=True)
class GlmModel:
    """A fitted logistic model; coefficients are on the original feature scale."""

    intercept: float
    coef: np.ndarray
    penalty: Penalty
    lam: float
    center: np.ndarray
    scale: np.ndarray
    kkt_residual: float = float("nan")

    @property
    def n_features(self):
        return self.coef.shape[0]

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} columns, got shape {X.shape}")
        return self.intercept + X @ self.coef

    def predict_proba(self, X):
        return np.clip(expit(self.decision_function(X)), _P_LOW, _P_HIGH)


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray
    min_ratio: float

    @property
    def n_values(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class Folds:
    """0-based fold label per row."""

    assignment: np.ndarray
    n_folds: int

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if self.n_folds < 2:
            raise ValueError("need at least two folds")
        if a.min() < 0 or a.max() >= self.n_folds:
            raise ValueError("fold label out of range")
        if np.bincount(a, minlength=self.n_folds).min() == 0:
            raise ValueError("empty fold")

    @property
    def n(self):
        return self.assignment.shape[0]

    def test_rows(self, k):
        return np.flatnonzero(self.assignment == k)

    def train_rows(self, k):
        return np.flatnonzero(self.assignment != k)


@dataclass(frozen=True)
class PathFit:
    lambdas: np.ndarray
    coef: np.ndarray  # (n_lambda, p)
    intercept: np.ndarray
    kkt: np.ndarray
    center: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    penalty: Penalty = Penalty.RIDGE

    def model(self, index):
        return GlmModel(float(self.intercept[index]), self.coef[index].copy(),
                        self.penalty, float(self.lambdas[index]),
                        self.center, self.scale, float(self.kkt[index]))

    def decision_function(self, X):
        return X @ self.coef.T + self.intercept


@dataclass(frozen=True)
class CvResult:
    best_lambda: float
    model: GlmModel
    cv_curve: np.ndarray

    def __iter__(self):
        return iter((self.best_lambda, self.model, self.cv_curve))


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} incompatible with y {y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("X and y must be finite")
    if X.shape[0] < 2:
        raise SingleClassOutcome("need at least two observations")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("y must be binary 0/1")
    if y.min() == y.max():
        raise SingleClassOutcome(f"outcome is constant ({y[0]:g})")
    return X, y


def _normalized_weights(weights, n):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,) or not np.isfinite(w).all() or (w < 0).any() or w.sum() <= 0:
        raise NonFiniteInput("observation weights must be finite, nonnegative, not all zero")
    return w / w.sum()


def standardize(X, w):
    """Weighted column means and population standard deviations.

    Columns that are constant (over rows with positive weight) get scale 0.
    """
    center = w @ X
    scale = np.sqrt(w @ (X - center) ** 2)
    live = w > 0
    constant = np.ptp(X[live], axis=0) == 0 if live.any() else np.ones(X.shape[1], bool)
    scale[constant] = 0.0
    return center, scale


class _Design:
    """Standardized (and for ridge, rotated) design fed to the kernel."""

    def __init__(self, X, w, penalty):
        self.center, self.scale = standardize(X, w)
        self.constant = self.scale == 0
        safe = np.where(self.constant, 1.0, self.scale)
        Xs = (X - self.center) / safe
        Xs[:, self.constant] = 0.0
        self.basis = None
        if penalty is Penalty.RIDGE and X.shape[1] > 1:
            n, p = Xs.shape
            if p > n:
                # eigendecomposition of the n x n Gram matrix is cheaper than an SVD
                evals, U = scipy.linalg.eigh(Xs @ Xs.T, check_finite=False)
                keep = evals > max(evals[-1], 1.0) * 1e-10
                U, S = U[:, keep], np.sqrt(evals[keep])
                F = U * S
                self.basis = (U.T @ Xs) / S[:, None]
            else:
                U, S, Vt = np.linalg.svd(Xs, full_matrices=False)
                keep = S > max(S[0], 1.0) * 1e-10 if S.size else np.zeros(0, bool)
                self.basis = Vt[keep]
                F = U[:, keep] * S[keep]
            self.skip = np.zeros(F.shape[1], dtype=np.bool_)
        else:
            F = Xs
            self.skip = self.constant.copy()
        self.Ft = np.ascontiguousarray(F.T)

    def to_original(self, betas, intercepts):
        std = betas if self.basis is None else betas @ self.basis
        std[:, self.constant] = 0.0
        coef = std / np.where(self.constant, 1.0, self.scale)
        coef[:, self.constant] = 0.0
        return coef, intercepts - coef @ self.center


def fit_path(X, y, penalty, lambdas, observation_weights=None, *, check=True):
    """Fit a decreasing sequence of lambdas with warm starts."""
    if check:
        X, y = _check_xy(X, y)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if (lambdas < 0).any() or not np.isfinite(lambdas).all():
        raise ValueError("lambda must be finite and >= 0")
    penalty = Penalty(penalty)
    w = _normalized_weights(observation_weights, X.shape[0])
    design = _Design(X, w, penalty)
    p_work = design.Ft.shape[0]
    ybar = float(w @ y)
    b0 = float(np.log(ybar / (1.0 - ybar)))
    betas, ints, kkts, _, ok = irls_cd_path(
        design.Ft, y, w, lambdas, penalty is Penalty.NONNEG_LASSO, design.skip,
        np.zeros(p_work), b0, MAX_OUTER, TOL_OUTER, TOL_INNER, KKT_TOL, MAX_SWEEPS)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise ConvergenceFailure(
            f"IRLS did not converge at lambda={lambdas[bad]:.4g} within {MAX_OUTER} iterations",
            float(kkts[bad]))
    coef, intercept = design.to_original(betas, ints)
    return PathFit(lambdas, coef, intercept, kkts, design.center, design.scale, penalty)


def fit_penalized_logistic(X, y, penalty, lam, observation_weights=None):
    """Single-lambda fit; returns a :class:`GlmModel`."""
    return fit_path(X, y, penalty, [lam], observation_weights).model(0)


def make_lambda_grid(X, y, penalty, n_values=100, min_ratio=None):
    """Log-spaced decreasing grid starting at the lasso entry point.

    For ridge the start is ``RIDGE_LAMBDA_MULTIPLE`` times the lasso entry
    point.  ``min_ratio`` defaults to 1e-4 when n > p and 1e-2 otherwise.
    """
    X, y = _check_xy(X, y)
    if n_values < 2:
        raise ValueError("n_values must be >= 2")
    n, p = X.shape
    if min_ratio is None:
        min_ratio = 1e-4 if n > p else 1e-2
    if not 0.0 < min_ratio < 1.0:
        raise ValueError("min_ratio must lie in (0, 1)")
    w = np.full(n, 1.0 / n)
    center, scale = standardize(X, w)
    safe = np.where(scale == 0, 1.0, scale)
    Xs = (X - center) / safe
    Xs[:, scale == 0] = 0.0
    lam_max = float(np.max(np.abs(Xs.T @ (y - y.mean())))) / n if p else 0.0
    if lam_max <= 0.0:
        lam_max = 1e-6
    if Penalty(penalty) is Penalty.RIDGE:
        lam_max *= RIDGE_LAMBDA_MULTIPLE
    values = np.geomspace(lam_max, lam_max * min_ratio, n_values)
    return LambdaGrid(values, float(min_ratio))


def binomial_deviance_terms(p, y):
    p = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    return -2.0 * (y * np.log(p) + (1.0 - y) * np.log1p(-p))


def cv_tune(X, y, penalty, folds, grid, observation_weights=None):
    """K-fold tuning of lambda by mean out-of-fold binomial deviance.

    Ties in the curve resolve to the larger lambda.  The returned model is
    the full-data fit at the selected lambda.
    """
    X, y = _check_xy(X, y)
    if folds.n != X.shape[0]:
        raise DimensionMismatch("fold assignment does not cover the rows of X")
    w = None if observation_weights is None else np.asarray(observation_weights, float)
    lambdas = grid.values
    total = np.zeros(lambdas.shape[0])
    for k in range(folds.n_folds):
        train, test = folds.train_rows(k), folds.test_rows(k)
        ytr = y[train]
        if ytr.min() == ytr.max():
            raise FoldWithSingleClass(f"training part of fold {k} has a single class")
        path = fit_path(X[train], ytr, penalty, lambdas,
                        None if w is None else w[train], check=False)
        eta = path.decision_function(X[test])
        dev = binomial_deviance_terms(expit(eta), y[test][:, None])
        if w is None:
            total += dev.sum(axis=0)
        else:
            total += w[test] @ dev
    cv_curve = total / (X.shape[0] if w is None else w.sum())
    best = int(np.argmin(cv_curve))
    full = fit_path(X, y, penalty, lambdas[: best + 1], w, check=False)
    return CvResult(float(lambdas[best]), full.model(best), cv_curve)


def predict_proba(model, X_new):
    return model.predict_proba(X_new)
