"""Smoothed predictions and per-sample confidence weights.

An exponential moving average of the per-epoch training predictions feeds a
min-max normalized CE score; high-loss samples get low confidence.  The
trainer splits gradients as ω to the model and (1-ω) to the noise vectors.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .model import PROB_FLOOR


@dataclass
class EmaState:
    """q rows are probability vectors over the K classes, one per sample."""

    q: np.ndarray
    beta_init: float
    T: int
    window: int

    def copy(self):
        return EmaState(self.q.copy(), self.beta_init, self.T, self.window)


@dataclass
class ConfidenceWeights:
    omega: np.ndarray


def init_ema(n_samples, n_classes, beta_init, T, window):
    """Uniform rows; every sample starts equally (un)trusted."""
    q = np.full((n_samples, n_classes), 1.0 / n_classes)
    return EmaState(q, beta_init, T, window)


def beta_schedule(t, T, beta_init):
    """Affine ramp from 1 at t=0 down to beta_init at t=T."""
    if T <= 0 or not 0 <= t <= T:
        raise ContractViolation(f"need 0 <= t <= T with T > 0, got t={t}, T={T}")
    return (beta_init - 1.0) * t / T + 1.0


def ema_update(state, q_new, t):
    """q ← β_t·q + (1-β_t)·q_new, rows renormalized; in place."""
    q_new = np.asarray(q_new, dtype=np.float64)
    if q_new.shape != state.q.shape:
        raise ContractViolation(
            f"q_new shape {q_new.shape} does not match state {state.q.shape}")
    beta = beta_schedule(t, state.T, state.beta_init)
    q = beta * state.q + (1.0 - beta) * q_new
    state.q = q / q.sum(axis=1, keepdims=True)
    return state


def confidence_weights(q, labels):
    """ω = 1 - minmax(CE(q_i, y_i)); all-equal losses give ω ≡ 1."""
    q = np.asarray(q, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if q.shape != labels.shape:
        raise ContractViolation(
            f"q shape {q.shape} does not match labels {labels.shape}")
    picked = np.sum(q * labels, axis=1)
    losses = -np.log(np.clip(picked, PROB_FLOOR, 1.0))
    lo, hi = losses.min(), losses.max()
    if hi == lo:
        omega = np.ones(q.shape[0])
    else:
        omega = 1.0 - (losses - lo) / (hi - lo)
    return ConfidenceWeights(omega)
