"""Collaboration matrix: normalization arithmetic, its exact backward pass,
the clipped update rule, and the diagonal-mean trace."""

import numpy as np
import pytest

from csrlab import _kernels
from csrlab.collab import (CollabState, diag_mean, init_collab,
                           normalization_backward, normalize_matrix,
                           update_collab)
from csrlab.errors import NormalizationDegenerate

from conftest import random_onehot


def _state(M, gamma, lr_m=0.001):
    return CollabState(np.array(M, dtype=np.float64), float(gamma), lr_m, lr_m)


# --- normalize ---------------------------------------------------------------

def test_normalize_identity_fixed_point():
    np.testing.assert_array_equal(normalize_matrix(_state(np.eye(2), 1.0)),
                                  np.eye(2))


def test_normalize_constant_matrix_to_zero():
    out = normalize_matrix(_state(np.full((3, 3), 3.0), 5.0))
    np.testing.assert_array_equal(out, np.zeros((3, 3)))


def test_normalize_property_sweep(rng):
    for _ in range(200):
        M = rng.normal(size=(4, 4))
        state = _state(M, M.max() + 1.0)
        m_bar = normalize_matrix(state)
        assert m_bar.min() == 0.0
        assert np.all(m_bar <= 1.0)


def test_normalize_degenerate_gamma():
    with pytest.raises(NormalizationDegenerate):
        normalize_matrix(_state(np.eye(2), 0.0))     # gamma == min(M)


# --- update ------------------------------------------------------------------

def test_update_zero_grads_identity():
    state = _state(np.eye(3), 1.0)
    update_collab(state, np.zeros((3, 3)), 0.0)
    np.testing.assert_array_equal(state.M, np.eye(3))
    assert state.gamma == 1.0


def test_update_scalar_case():
    state = _state([[1.0]], 2.0)
    update_collab(state, np.array([[0.5]]), 0.0)
    assert state.M[0, 0] == pytest.approx(0.9995)


def test_update_clips_gamma_and_counts():
    state = _state(np.eye(2), 1.0, lr_m=1.0)
    update_collab(state, np.zeros((2, 2)), 5.0)      # would send gamma to -4
    assert state.gamma == pytest.approx(0.0 + 1e-6)  # min(M) + margin
    assert state.n_clip_warnings == 1


# --- normalization backward vs finite differences ----------------------------

def _batch_loss(M, gamma, f, s, labels):
    m_bar = normalize_matrix(_state(M, gamma))
    losses, g_t, _ = _kernels.collab_ce(f, m_bar, s, labels, 1e-12)
    return losses.sum() / f.shape[0], g_t


def test_collab_gradients_finite_difference(rng):
    k, n = 4, 8
    labels, onehot = random_onehot(rng, n, k)
    f = rng.dirichlet(np.ones(k) * 2.0, size=n)
    s = rng.normal(size=(n, k)) * 0.05
    M = np.eye(k) + rng.normal(size=(k, k)) * 0.05
    gamma = 1.1
    assert np.sum(M == M.min()) == 1                 # unique min for the FD

    _, g_t = _batch_loss(M, gamma, f, s, labels)
    g_mbar = f.T @ (g_t / n)
    g_m, g_gamma = normalization_backward(M, gamma, g_mbar)

    eps = 1e-6
    for i in range(k):
        for j in range(k):
            up, down = M.copy(), M.copy()
            up[i, j] += eps
            down[i, j] -= eps
            hi, _ = _batch_loss(up, gamma, f, s, labels)
            lo, _ = _batch_loss(down, gamma, f, s, labels)
            numeric = (hi - lo) / (2.0 * eps)
            assert abs(g_m[i, j] - numeric) / max(
                1.0, abs(g_m[i, j]), abs(numeric)) < 1e-5
    hi, _ = _batch_loss(M, gamma + eps, f, s, labels)
    lo, _ = _batch_loss(M, gamma - eps, f, s, labels)
    numeric = (hi - lo) / (2.0 * eps)
    assert abs(g_gamma - numeric) / max(1.0, abs(g_gamma), abs(numeric)) < 1e-5


def test_frozen_collab_stays_identity():
    # lr 0 keeps M = I and gamma = 1, so M-bar is exactly the identity
    state = init_collab(3, lr_m=0.0, lr_gamma=0.0)
    update_collab(state, np.ones((3, 3)), 1.0)
    np.testing.assert_array_equal(state.M, np.eye(3))
    np.testing.assert_array_equal(normalize_matrix(state), np.eye(3))


# --- diag_mean ---------------------------------------------------------------

def test_diag_mean_values():
    assert diag_mean(np.eye(4)) == 1.0
    assert diag_mean(np.diag([0.5, 1.5])) == 1.0


def test_init_collab_starts_at_identity():
    state = init_collab(5, 0.001)
    assert diag_mean(state.M) == 1.0
    assert state.gamma == 1.0
