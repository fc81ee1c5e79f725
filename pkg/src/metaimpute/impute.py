"""Missing-data strategies at the feature level and at the meta (Z) level.

* unconditional mean imputation
* predictive mean matching (type-1 matching, Bayesian linear draw)
* missForest-style iterative random-forest imputation
* complete-case filtering

Meta-level PMM comes in two flavours: ``SINGLE_Z`` imputes one Z several
times and averages, ``MULTI_Z`` rebuilds Z with fresh folds for every
imputation and averages the completed matrices.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from . import staplr
from .errors import (
    DimensionMismatch,
    DonorPoolTooSmall,
    EmptyColumn,
    NoCompleteCases,
    NonFiniteInput,
    SingularDesign,
)
from .forest import fit_forest
from .staplr import MultiViewDataset, StaplrConfig


class Algorithm(enum.Enum):
    MEAN = "mean"
    PMM = "pmm"
    MISSFOREST = "missforest"


class Level(enum.Enum):
    FEATURE = "feature"
    META = "meta"


class PmmStrategy(enum.Enum):
    SINGLE_Z = "mPMM"
    MULTI_Z = "cvPMM"


@dataclass(frozen=True)
class ImputationSpec:
    algorithm: Algorithm = Algorithm.MEAN
    level: Level = Level.META
    n_imputations: int = 5
    donors: int = 5
    pmm_strategy: PmmStrategy = PmmStrategy.SINGLE_Z
    n_chain: int = 5
    ridge_eps: float = 1e-5
    n_trees: int = 100
    max_iter: int = 10
    mtry: Optional[int] = None
    min_node: int = 5
    seed: int = 0
    allow_feature_pmm: bool = False

    def __post_init__(self):
        if self.donors < 1 or self.n_imputations < 1:
            raise ValueError("donors and n_imputations must be >= 1")
        if (self.algorithm is Algorithm.PMM and self.level is Level.FEATURE
                and not self.allow_feature_pmm):
            raise ValueError("feature-level PMM is not supported outside the demo")


@dataclass(frozen=True)
class IncompleteMatrix:
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        missing = np.asarray(self.missing, dtype=bool)
        if values.ndim != 2 or missing.shape != values.shape:
            raise DimensionMismatch("values and missing must be matrices of equal shape")
        if not np.isfinite(values[~missing]).all():
            raise NonFiniteInput("observed cells must be finite")
        values[missing] = np.nan
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_nan(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values, np.isnan(values))

    def incomplete_columns(self):
        """Columns with missing cells, ordered by increasing missing count."""
        counts = self.missing.sum(axis=0)
        cols = np.flatnonzero(counts)
        return cols[np.argsort(counts[cols], kind="stable")]

    def _check_columns(self):
        empty = np.flatnonzero(self.missing.all(axis=0))
        if empty.size:
            raise EmptyColumn(f"columns {empty.tolist()} have no observed cells")


def mean_impute(M):
    M._check_columns()
    out = M.values.copy()
    for j in M.incomplete_columns():
        out[M.missing[:, j], j] = out[~M.missing[:, j], j].mean()
    return out


# --------------------------------------------------------------------------- PMM

def _bayes_linear_draw(X, y, ridge_eps, rng):
    """Posterior-mean and drawn coefficients for y ~ X (X, y centred).

    The normal equations are stabilized with ``ridge_eps * trace(X'X) / p``.
    """
    n, p = X.shape
    xtx = X.T @ X
    pen = ridge_eps * np.trace(xtx) / max(p, 1)
    A = xtx + pen * np.eye(p)
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign(f"normal equations not positive definite "
                             f"(ridge_eps={ridge_eps:g})") from exc
    beta_hat = scipy.linalg.cho_solve((L, True), X.T @ y, check_finite=False)
    resid = y - X @ beta_hat
    df = max(n - p, 1)
    sigma = np.sqrt(resid @ resid / rng.chisquare(df))
    # L^{-T} z has covariance (L L^T)^{-1}
    noise = scipy.linalg.solve_triangular(L, rng.standard_normal(p), lower=True,
                                          trans="T", check_finite=False)
    return beta_hat, beta_hat + sigma * noise


def _match_donors(yhat_obs, yhat_mis, y_obs, d, rng):
    if d > yhat_obs.shape[0]:
        raise DonorPoolTooSmall(f"{d} donors requested, {yhat_obs.shape[0]} observed rows")
    dist = np.abs(yhat_mis[:, None] - yhat_obs[None, :])
    # stable sort -> ties go to the lower row index
    donors = np.argsort(dist, axis=1, kind="stable")[:, :d]
    pick = rng.integers(0, d, size=yhat_mis.shape[0])
    return y_obs[donors[np.arange(donors.shape[0]), pick]]


def _pmm_once(M, spec, rng):
    cols = M.incomplete_columns()
    out = M.values.copy()
    for j in cols:
        obs = out[~M.missing[:, j], j]
        out[M.missing[:, j], j] = rng.choice(obs, size=int(M.missing[:, j].sum()))
    # with one incomplete column the predictors never change between sweeps
    sweeps = spec.n_chain if cols.size > 1 else 1
    for _ in range(sweeps):
        for t in cols:
            miss = M.missing[:, t]
            others = np.delete(out, t, axis=1)
            Xo, Xm = others[~miss], others[miss]
            yo = M.values[~miss, t]
            mu_x = Xo.mean(axis=0)
            mu_y = yo.mean()
            beta_hat, beta_star = _bayes_linear_draw(Xo - mu_x, yo - mu_y, spec.ridge_eps, rng)
            yhat_obs = (Xo - mu_x) @ beta_hat
            yhat_mis = (Xm - mu_x) @ beta_star
            out[miss, t] = _match_donors(yhat_obs, yhat_mis, yo, spec.donors, rng)
    return out


def pmm_impute(M, spec):
    """``spec.n_imputations`` completed matrices by predictive mean matching."""
    M._check_columns()
    if M.values.shape[1] < 2 and M.missing.any():
        raise SingularDesign("PMM needs at least one predictor column")
    seeds = np.random.SeedSequence([int(spec.seed), 11]).spawn(spec.n_imputations)
    return [_pmm_once(M, spec, np.random.default_rng(s)) for s in seeds]


# --------------------------------------------------------------------- missForest

def _relative_change(new, old, mask):
    num = float(((new[mask] - old[mask]) ** 2).sum())
    den = float((new[mask] ** 2).sum())
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def missforest_impute(M, spec=None, trace=None):
    """Iterative forest imputation with the missForest stopping rule.

    After each full pass the change in imputed cells (normalized by their
    squared size) is compared with the previous pass; the first increase
    stops the loop and the previous iterate is returned.  ``trace``, if a
    list, receives one ``(criterion, matrix)`` pair per completed pass.
    """
    spec = spec or ImputationSpec(algorithm=Algorithm.MISSFOREST)
    M._check_columns()
    cols = M.incomplete_columns()
    current = mean_impute(M)
    if cols.size == 0:
        return current
    p = M.values.shape[1]
    if p < 2:
        raise SingularDesign("missForest needs at least one predictor column")
    mtry = spec.mtry or max(1, int(np.floor(np.sqrt(p - 1))))
    previous_crit = np.inf
    for it in range(spec.max_iter):
        old = current.copy()
        for t in cols:
            miss = M.missing[:, t]
            others = np.delete(current, t, axis=1)
            forest = fit_forest(others[~miss], current[~miss, t], spec.n_trees,
                                min(mtry, p - 1), spec.min_node,
                                seed=int(np.random.SeedSequence([int(spec.seed), it, int(t)])
                                         .generate_state(1)[0]))
            current[miss, t] = forest.predict(others[miss])
        crit = _relative_change(current, old, M.missing)
        if trace is not None:
            trace.append((crit, current.copy()))
        if crit > previous_crit:
            return old
        previous_crit = crit
    return current


# ------------------------------------------------------------------ level wrappers

@dataclass
class MetaImputation:
    z: np.ndarray
    z_raw: list = field(default_factory=list)
    imputations: list = field(default_factory=list)


def _impute_matrix(M, spec):
    if spec.algorithm is Algorithm.MEAN:
        return [mean_impute(M)]
    if spec.algorithm is Algorithm.MISSFOREST:
        return [missforest_impute(M, spec)]
    return pmm_impute(M, spec)


def impute_meta(data, spec, config=None, seed=0):
    """Build Z from ``data`` and complete it at the meta level."""
    config = config or StaplrConfig()
    if spec.level is not Level.META:
        raise ValueError("impute_meta needs a meta-level spec")
    if spec.algorithm is Algorithm.PMM and spec.pmm_strategy is PmmStrategy.MULTI_Z:
        builds, imps = [], []
        for r in range(spec.n_imputations):
            fold_seed = int(np.random.SeedSequence([int(seed), 101, r]).generate_state(1)[0])
            zm = staplr.build_z(data, staplr.meta_folds_for(data, config, fold_seed),
                                config, seed)
            builds.append(zm)
            one = replace(spec, n_imputations=1, seed=int(
                np.random.SeedSequence([int(spec.seed), 102, r]).generate_state(1)[0]))
            imps.extend(pmm_impute(IncompleteMatrix(zm.z, zm.missing), one))
        return MetaImputation(np.mean(imps, axis=0), builds, imps)
    zm = staplr.build_z(data, staplr.meta_folds_for(data, config, seed), config, seed)
    imps = _impute_matrix(IncompleteMatrix(zm.z, zm.missing), spec)
    return MetaImputation(np.mean(imps, axis=0), [zm], imps)


def impute_features(data, spec):
    """Impute the concatenated feature matrix; returns a dataset without missing views."""
    if spec.level is not Level.FEATURE:
        raise ValueError("impute_features needs a feature-level spec")
    M = IncompleteMatrix(data.X, data.expand())
    imps = _impute_matrix(M, spec)
    X = imps[0] if len(imps) == 1 else np.mean(imps, axis=0)
    return MultiViewDataset(X, data.layout, data.y.copy())


def complete_cases(data):
    rows = data.complete_rows()
    if rows.size == 0:
        raise NoCompleteCases("no row has every view observed")
    y = data.y[rows]
    if y.min() == y.max():
        raise NoCompleteCases("complete cases contain a single class")
    return MultiViewDataset(data.X[rows], data.layout, y)
