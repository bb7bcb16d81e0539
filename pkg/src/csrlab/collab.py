"""Learnable collaboration matrix M with scale gamma.

M starts at the identity; the trainer always works with the normalized
M̄ = (M - min(M)) / (gamma - min(M)), recomputed before each batch.  Both M
and gamma learn from the CE path only.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NormalizationDegenerate

MIN_DIVISOR = 1e-9
CLIP_MARGIN = 1e-6


@dataclass
class CollabState:
    M: np.ndarray
    gamma: float
    lr_m: float
    lr_gamma: float
    n_clip_warnings: int = 0

    def copy(self):
        return CollabState(self.M.copy(), self.gamma, self.lr_m,
                           self.lr_gamma, self.n_clip_warnings)


def init_collab(n_classes, lr_m=0.001, lr_gamma=None):
    """Identity M and gamma = 1, so M̄ starts exactly at the identity."""
    if lr_gamma is None:
        lr_gamma = lr_m
    return CollabState(np.eye(n_classes), 1.0, lr_m, lr_gamma)


def normalize_matrix(state):
    """M̄ = (M - min(M)) / (gamma - min(M)); min over all K^2 entries."""
    m = state.M.min()
    divisor = state.gamma - m
    if divisor <= MIN_DIVISOR:
        raise NormalizationDegenerate(
            f"gamma - min(M) = {divisor:.3e} at or below {MIN_DIVISOR:.0e}")
    return (state.M - m) / divisor


def normalization_backward(M, gamma, g_mbar):
    """Chain a gradient w.r.t. M̄ back to raw M and gamma.

    min(M) is treated as picking a fixed entry; on ties the first entry in
    row-major order carries the subgradient.
    """
    m = M.min()
    divisor = gamma - m
    g_M = g_mbar / divisor
    m_bar = (M - m) / divisor
    idx = np.unravel_index(np.argmin(M), M.shape)
    g_M[idx] += float(np.sum(g_mbar * (m_bar - 1.0)) / divisor)
    g_gamma = float(-np.sum(g_mbar * m_bar) / divisor)
    return g_M, g_gamma


def update_collab(state, grad_M, grad_gamma):
    """M ← M - lr_m·grad, gamma ← gamma - lr_gamma·grad; in place.

    If the step drives gamma to min(M) or below, gamma is clipped back to
    min(M) + 1e-6 and a warning is counted instead of aborting.
    """
    grad_M = np.asarray(grad_M, dtype=np.float64)
    if grad_M.shape != state.M.shape:
        raise ContractViolation(
            f"grad_M shape {grad_M.shape} does not match M {state.M.shape}")
    state.M -= state.lr_m * grad_M
    state.gamma -= state.lr_gamma * float(grad_gamma)
    floor = state.M.min() + CLIP_MARGIN
    if state.gamma < floor:
        state.gamma = floor
        state.n_clip_warnings += 1
    return state


def diag_mean(M):
    """Mean of the diagonal; the per-epoch trace starts at 1 (identity init)."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {M.shape}")
    return float(np.mean(np.diag(M)))
