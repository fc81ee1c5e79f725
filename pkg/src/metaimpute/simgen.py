"""Block-correlated multi-view Gaussian data with a logistic outcome.

Features follow a three-factor model

    x_ij = sqrt(rho_b) g_i + sqrt(rho_w - rho_b) h_i^(view j) + sqrt(1 - rho_w) e_ij

with independent standard normal g, h, e, so every feature has unit variance,
features in the same view correlate exactly rho_w and features in different
views correlate exactly rho_b.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import FractionOutOfRange, InvalidCorrelation
from .staplr import MultiViewDataset, ViewLayout

PAPER_VIEW_SIZES = (5, 50, 500, 5000)
DESK_VIEW_SIZES = (5, 25, 125, 625)


@dataclass(frozen=True)
class SimConfig:
    n_train: int = 1000
    n_test: int = 1000
    view_sizes: tuple = PAPER_VIEW_SIZES
    rho_within: float = 0.5
    rho_between: float = 0.2
    noise_view: int = 0
    coef_magnitude: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rho_between <= self.rho_within < 1.0:
            raise InvalidCorrelation(
                f"need 0 <= rho_between <= rho_within < 1, got "
                f"{self.rho_between}, {self.rho_within}")
        if not self.view_sizes or min(self.view_sizes) < 1:
            raise ValueError("view sizes must be positive")
        if not 0 <= self.noise_view < len(self.view_sizes):
            raise ValueError(f"noise view {self.noise_view} out of range")


PRESETS = {
    "paper": SimConfig(),
    "desk": SimConfig(n_train=400, n_test=400, view_sizes=DESK_VIEW_SIZES),
}


def preset(name, **overrides):
    return replace(PRESETS[name], **overrides)


@dataclass(frozen=True)
class GroundTruth:
    coefficients: np.ndarray
    p_train: np.ndarray
    p_test: np.ndarray
    signal_views: np.ndarray


@dataclass(frozen=True)
class MissingnessPlan:
    target_view: int
    fraction: float
    seed: int = 0

    def affected_rows(self, n):
        if not 0.0 < self.fraction < 1.0:
            raise FractionOutOfRange(f"fraction {self.fraction} not in (0, 1)")
        # round half away from zero
        count = int(np.floor(self.fraction * n + 0.5))
        rng = np.random.default_rng(self.seed)
        return np.sort(rng.choice(n, size=count, replace=False))


def sample_features(rng, n, view_sizes, rho_within, rho_between):
    sizes = np.asarray(view_sizes)
    g = rng.standard_normal((n, 1))
    h = rng.standard_normal((n, sizes.size))
    e = rng.standard_normal((n, int(sizes.sum())))
    return (np.sqrt(rho_between) * g
            + np.sqrt(rho_within - rho_between) * np.repeat(h, sizes, axis=1)
            + np.sqrt(1.0 - rho_within) * e)


def gen_dataset(config):
    """Draw (train, test, truth); train and test come from independent streams."""
    ss = np.random.SeedSequence(config.seed)
    coef_rng, train_rng, test_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    layout = ViewLayout(config.view_sizes)
    sizes = np.asarray(config.view_sizes)

    signs = coef_rng.choice((-1.0, 1.0), size=layout.n_features)
    magnitude = np.repeat(config.coef_magnitude / np.sqrt(sizes), sizes)
    signal = np.ones(layout.n_views, dtype=bool)
    signal[config.noise_view] = False
    beta = signs * magnitude * np.repeat(signal, sizes)

    def draw(rng, n):
        X = sample_features(rng, n, config.view_sizes, config.rho_within, config.rho_between)
        p = expit(X @ beta)
        y = (rng.random(n) < p).astype(float)
        return MultiViewDataset(X, layout, y), p

    train, p_train = draw(train_rng, config.n_train)
    test, p_test = draw(test_rng, config.n_test)
    return train, test, GroundTruth(beta, p_train, p_test, signal)


def inject_missingness(train, plan):
    """Blank out ``plan.target_view`` for a uniformly drawn set of rows."""
    if not 0 <= plan.target_view < train.layout.n_views:
        raise ValueError(f"view {plan.target_view} out of range")
    rows = plan.affected_rows(train.n)
    mask = train.view_missing.copy()
    mask[rows, plan.target_view] = True
    X = train.X.copy()
    X[np.ix_(rows, np.arange(train.layout.n_features)[train.layout.columns(plan.target_view)])] = np.nan
    return MultiViewDataset(X, train.layout, train.y.copy(), mask)


def column_names(layout):
    return [f"view{v + 1}_f{j + 1}" for v, m in enumerate(layout.sizes) for j in range(m)]


def write_dataset(data, path):
    """Write ``<path>`` (features + y) and ``<stem>_mask.csv`` (view mask)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(column_names(data.layout) + ["y"])
        for row, yi in zip(data.X, data.y):
            w.writerow([repr(float(x)) if np.isfinite(x) else "NA" for x in row] + [int(yi)])
    mask_path = path.with_name(path.stem + "_mask.csv")
    with mask_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"view{v + 1}" for v in range(data.layout.n_views)])
        w.writerows(data.view_missing.astype(int).tolist())
    return path, mask_path


def read_dataset(path, view_sizes):
    path = Path(path)
    raw = np.genfromtxt(path, delimiter=",", skip_header=1, missing_values="NA",
                        filling_values=np.nan)
    raw = np.atleast_2d(raw)
    mask = np.atleast_2d(np.loadtxt(path.with_name(path.stem + "_mask.csv"),
                                    delimiter=",", skiprows=1, dtype=int)).astype(bool)
    return MultiViewDataset(raw[:, :-1], ViewLayout(tuple(view_sizes)), raw[:, -1], mask)
