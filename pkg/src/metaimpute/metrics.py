"""Prediction and view-selection measures."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LengthMismatch, NonPositiveDuration

P_CLAMP = 1e-12


@dataclass(frozen=True)
class PredictionEval:
    accuracy: float
    msep: float
    deviance: float


@dataclass(frozen=True)
class SelectionEval:
    """Selection rates for one replication.

    ``tpr`` is None when there are no signal views and ``fpr`` is None when
    there are no noise views.
    """

    proportion_correct: float
    tpr: Optional[float]
    fpr: Optional[float]
    fdr: float


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    return a, b


def accuracy(p_hat, y, threshold=0.5):
    """Share of rows where ``p_hat >= threshold`` agrees with ``y``."""
    p_hat, y = _pair(p_hat, y)
    return float(np.mean((p_hat >= threshold) == (y == 1)))


def msep(p_hat, p_true):
    """Mean squared error of predicted against true probabilities."""
    p_hat, p_true = _pair(p_hat, p_true)
    return float(np.mean((p_hat - p_true) ** 2))


def deviance(p_hat, y):
    """Binomial deviance, probabilities clamped to ``[P_CLAMP, 1 - P_CLAMP]``."""
    p_hat, y = _pair(p_hat, y)
    p = np.clip(p_hat, P_CLAMP, 1.0 - P_CLAMP)
    return float(-2.0 * np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def evaluate_predictions(p_hat, y, p_true, threshold=0.5):
    return PredictionEval(accuracy(p_hat, y, threshold), msep(p_hat, p_true),
                          deviance(p_hat, y))


def selection_eval(selected, signal):
    selected = np.asarray(selected, dtype=bool).ravel()
    signal = np.asarray(signal, dtype=bool).ravel()
    if selected.shape != signal.shape:
        raise LengthMismatch(f"lengths differ: {selected.size} vs {signal.size}")
    hits = int(np.sum(selected & signal))
    false = int(np.sum(selected & ~signal))
    n_signal = int(signal.sum())
    n_noise = signal.size - n_signal
    n_selected = int(selected.sum())
    return SelectionEval(
        proportion_correct=float(np.mean(selected == signal)),
        tpr=hits / n_signal if n_signal else None,
        fpr=false / n_noise if n_noise else None,
        fdr=false / n_selected if n_selected else 0.0,
    )


def log_runtime(seconds):
    """Natural log of a wall-clock duration."""
    seconds = float(seconds)
    if not seconds > 0.0:
        raise NonPositiveDuration(f"duration must be positive, got {seconds}")
    return float(np.log(seconds))
