"""Clean-sample selection: the 1-D two-component EM fit, posterior readings,
both selectors, and the clean/hard/noisy partition algebra."""

import numpy as np
import pytest

from csrlab.errors import ContractViolation
from csrlab.selection import (Gmm1D, gmm_fit, joint_partition, posterior_clean,
                              small_loss_select, small_u_select)
from csrlab.sparse_noise import NoiseParams


# --- gmm_fit -----------------------------------------------------------------

def _two_cluster_sample(seed=11, mu=(0.0, 5.0), std=0.1, n=500):
    r = np.random.default_rng(seed)
    values = np.concatenate([r.normal(mu[0], std, size=n),
                             r.normal(mu[1], std, size=n)])
    return r.permutation(values)


def test_gmm_recovers_seeded_mixture():
    fit = gmm_fit(_two_cluster_sample())
    assert abs(fit.means[0] - 0.0) < 0.1
    assert abs(fit.means[1] - 5.0) < 0.1
    assert abs(fit.weights[0] - 0.5) < 0.05
    assert abs(fit.weights[1] - 0.5) < 0.05
    assert not fit.degenerate


def test_gmm_loglik_monotone_on_mixture():
    fit = gmm_fit(_two_cluster_sample(seed=3))
    ll = np.asarray(fit.log_likelihoods)
    assert np.all(np.diff(ll) >= -1e-10)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_gmm_loglik_monotone_random_data(seed):
    r = np.random.default_rng(seed)
    values = r.normal(size=200) * (1.0 + seed)
    fit = gmm_fit(values)
    ll = np.asarray(fit.log_likelihoods)
    assert np.all(np.diff(ll) >= -1e-10)


def test_gmm_component_order():
    fit = gmm_fit(_two_cluster_sample(seed=8, mu=(2.0, -1.0)))
    assert fit.means[0] < fit.means[1]


def test_gmm_degenerate_all_equal():
    fit = gmm_fit(np.full(50, 3.25))
    assert fit.degenerate
    assert posterior_clean(fit, 3.25) == 0.5


def test_gmm_variance_floor():
    fit = gmm_fit(np.concatenate([np.zeros(40), np.ones(40)]))
    assert np.all(np.asarray(fit.variances) >= 1e-8)


def test_gmm_requires_enough_points():
    with pytest.raises(ContractViolation):
        gmm_fit(np.array([1.0, 2.0]))
    with pytest.raises(ContractViolation):
        gmm_fit(np.array([1.0, np.nan, 2.0, 3.0]))


# --- posterior ---------------------------------------------------------------

def _symmetric_model():
    return Gmm1D(means=np.array([0.0, 5.0]), variances=np.array([0.04, 0.04]),
                 weights=np.array([0.5, 0.5]), degenerate=False,
                 log_likelihoods=[0.0])


def test_posterior_at_modes():
    fit = gmm_fit(_two_cluster_sample())
    assert posterior_clean(fit, 0.0) > 0.99
    assert posterior_clean(fit, 5.0) < 0.01


def test_posterior_midpoint_symmetric():
    assert posterior_clean(_symmetric_model(), 2.5) == pytest.approx(0.5)


def test_posterior_vectorized():
    out = posterior_clean(_symmetric_model(), np.array([0.0, 2.5, 5.0]))
    assert out.shape == (3,)
    assert out[0] > 0.99 and out[2] < 0.01


def test_posterior_monotone_on_sorted_sweep():
    # equal variances and weights: posterior is a falling logistic in x
    xs = np.linspace(-1.0, 6.0, 300)
    post = posterior_clean(_symmetric_model(), xs)
    assert np.all(np.diff(post) <= 1e-12)


# --- selectors ---------------------------------------------------------------

def test_small_loss_select_bimodal():
    values = _two_cluster_sample()
    low = set(np.nonzero(values < 2.5)[0].tolist())
    assert small_loss_select(values, 0.5) == low


def test_small_loss_select_flat_range_selects_all():
    values = np.full(20, 0.3)
    assert small_loss_select(values, 0.5) == set(range(20))


def test_small_u_select_bimodal():
    n, k = 60, 3
    r = np.random.default_rng(4)
    labels = r.integers(0, k, size=n)
    u = np.zeros((n, k))
    noisy = set(range(0, n, 3))
    root = np.sqrt(0.8)
    for i in noisy:
        u[i, labels[i]] = root if i % 2 else -root
    noise = NoiseParams(u, np.zeros((n, k)), 1.0)
    selected = small_u_select(noise, labels, 0.5)
    assert selected == set(range(n)) - noisy


def test_small_u_select_all_zero_selects_all():
    noise = NoiseParams(np.zeros((30, 4)), np.zeros((30, 4)), 0.0)
    labels = np.zeros(30, dtype=np.int64)
    assert small_u_select(noise, labels, 0.5) == set(range(30))


# --- joint partition ---------------------------------------------------------

def test_partition_worked_example():
    part = joint_partition({1, 2, 3}, {2, 3, 4}, {1, 2, 3, 4, 5})
    assert part.clean == {2, 3}
    assert part.hard == {1, 4}
    assert part.noisy == {5}


def test_partition_everything_selected():
    omega = set(range(10))
    part = joint_partition(omega, omega, omega)
    assert part.clean == omega and not part.hard and not part.noisy


def test_partition_disjoint_selectors():
    part = joint_partition({0, 1}, {2, 3}, set(range(6)))
    assert part.clean == set()
    assert part.hard == {0, 1, 2, 3}
    assert part.noisy == {4, 5}


def test_partition_rejects_non_subset():
    with pytest.raises(ContractViolation):
        joint_partition({0, 9}, {1}, {0, 1, 2})


def test_partition_property_random(rng):
    omega = set(range(100))
    for _ in range(50):
        a = set(int(i) for i in rng.choice(100, size=rng.integers(0, 80),
                                           replace=False))
        b = set(int(i) for i in rng.choice(100, size=rng.integers(0, 80),
                                           replace=False))
        part = joint_partition(a, b, omega)
        assert part.clean | part.hard | part.noisy == omega
        assert not (part.clean & part.hard)
        assert not (part.clean & part.noisy)
        assert not (part.hard & part.noisy)
