"""Per-sample sparse noise vectors u, v and the corrected prediction.

The noise vector s_i = u_i^2 * y_i - v_i^2 * (1 - y_i) is added to the
(collaboration-adjusted) model output.  Two loss paths touch it: a CE path
that drives u (and the model), and an MSE path on the one-hot transform of
the model output that drives v only.  Cross-path gradients are zero by
construction, so each helper here takes the other path's values as constants.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegeneratePrediction, TrainingDiverged
from .model import PROB_FLOOR, ce_loss, mse_loss, _check_onehot


@dataclass
class NoiseParams:
    """u, v are (N, K); rows align with dataset indices."""

    u: np.ndarray
    v: np.ndarray
    init_scale: float = 1e-8

    @property
    def n_samples(self):
        return self.u.shape[0]

    @property
    def n_classes(self):
        return self.u.shape[1]

    def copy(self):
        return NoiseParams(self.u.copy(), self.v.copy(), self.init_scale)


@dataclass
class NoiseGrads:
    """Per-sample gradients, same (N, K) layout as NoiseParams."""

    g_u: np.ndarray
    g_v: np.ndarray


def init_noise(n_samples, n_classes, rng, init_scale=1e-8):
    u = rng.uniform(-init_scale, init_scale, size=(n_samples, n_classes))
    v = rng.uniform(-init_scale, init_scale, size=(n_samples, n_classes))
    return NoiseParams(u, v, init_scale)


def zero_noise(n_samples, n_classes):
    """Exact zeros; the plain-CE path uses this so s_i contributes nothing."""
    return NoiseParams(np.zeros((n_samples, n_classes)),
                       np.zeros((n_samples, n_classes)), 0.0)


def build_s(u_i, v_i, y_i):
    """s = u^2*y - v^2*(1-y); nonnegative at the label, nonpositive elsewhere."""
    u_i = np.asarray(u_i, dtype=np.float64)
    v_i = np.asarray(v_i, dtype=np.float64)
    y_i = np.asarray(y_i, dtype=np.float64)
    if y_i.ndim == 1:
        _check_onehot(y_i)
    else:
        for row in y_i:
            _check_onehot(row)
    return u_i * u_i * y_i - v_i * v_i * (1.0 - y_i)


def onehot_argmax(F):
    """One-hot at the argmax of each row; ties go to the lowest index."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        out = np.zeros_like(F)
        out[int(np.argmax(F))] = 1.0
        return out
    out = np.zeros_like(F)
    out[np.arange(F.shape[0]), np.argmax(F, axis=1)] = 1.0
    return out


def corrected_prediction(f_i, M_bar, s_i):
    """Normalized clamp(f·M̄ + s): the probability vector fed to the CE loss."""
    f_i = np.asarray(f_i, dtype=np.float64)
    t = f_i @ M_bar + s_i
    c = np.maximum(t, PROB_FLOOR)
    if np.all(t <= PROB_FLOOR):
        raise DegeneratePrediction("every corrected entry at or below the clamp floor")
    return c / c.sum()


def csr_sample_losses(f_i, M_bar, s_i, y_i):
    """(L_ce, L_mse) for one sample.

    L_ce scores the corrected prediction; L_mse scores onehot(f)·M̄ + s and is
    the only loss that reaches v.
    """
    y_i = _check_onehot(y_i)
    l_ce = ce_loss(corrected_prediction(f_i, M_bar, s_i), y_i)
    m = onehot_argmax(f_i) @ M_bar + s_i
    l_mse = mse_loss(m, y_i)
    return l_ce, l_mse


def mse_path(F, M_bar, S, Y):
    """Batch MSE-path values: per-sample losses and the targets m they score."""
    m = onehot_argmax(F) @ M_bar + S
    losses = np.sum((m - Y) ** 2, axis=1)
    return losses, m


def ce_grad_u(g_t, u, Y):
    """Chain dL/dt into dL/du through s; zero off-label by construction."""
    return g_t * 2.0 * u * Y


def mse_grad_v(m, Y, v):
    """dL_mse/dv = -4 v (1-y) (m-y); zero at the label by construction."""
    return -4.0 * v * (1.0 - Y) * (m - Y)


def update_noise_params(noise, grads, lr_u, lr_v, weights):
    """Per-sample step scaled by (1 - ω_i); in place, returns the same object."""
    if lr_u < 0.0 or lr_v < 0.0:
        raise ContractViolation("lr_u and lr_v must be nonnegative")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (noise.n_samples,):
        raise ContractViolation(
            f"expected {noise.n_samples} confidence weights, got shape {w.shape}")
    if not (np.isfinite(grads.g_u).all() and np.isfinite(grads.g_v).all()):
        raise TrainingDiverged("non-finite noise-parameter gradient")
    scale = (1.0 - w)[:, None]
    noise.u -= lr_u * scale * grads.g_u
    noise.v -= lr_v * scale * grads.g_v
    return noise
