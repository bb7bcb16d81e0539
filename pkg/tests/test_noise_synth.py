"""Label corruption: symmetric flips and the feature-dependent recipe, with
rate concentration, determinism, and record bookkeeping."""

import numpy as np
import pytest

from csrlab.errors import ContractViolation
from csrlab.noise_synth import _idn_parts, idn_noise, symmetric_noise


def _labels(n=10000, k=10, seed=0):
    return np.random.default_rng(seed).integers(0, k, size=n).astype(np.int64)


def _features(labels, d=6, seed=1):
    r = np.random.default_rng(seed)
    centers = r.normal(size=(labels.max() + 1, d)) * 3.0
    return centers[labels] + r.normal(size=(labels.size, d))


# --- symmetric ---------------------------------------------------------------

def test_symmetric_rate_zero_identity():
    y = _labels(200)
    rec = symmetric_noise(y, 0.0, 10, seed=5)
    np.testing.assert_array_equal(rec.noisy, y)
    assert rec.mislabeled == set()
    assert rec.rate_achieved == 0.0


def test_symmetric_rate_concentration():
    y = _labels(10000)
    rec = symmetric_noise(y, 0.4, 10, seed=5)
    assert abs(rec.rate_achieved - 0.4) < 0.02


def test_symmetric_never_flips_to_clean():
    y = _labels(5000, k=4)
    rec = symmetric_noise(y, 0.6, 4, seed=2)
    flipped = np.fromiter(rec.mislabeled, dtype=np.int64)
    assert np.all(rec.noisy[flipped] != y[flipped])


def test_symmetric_deterministic():
    y = _labels(2000)
    a = symmetric_noise(y, 0.3, 10, seed=9)
    b = symmetric_noise(y, 0.3, 10, seed=9)
    np.testing.assert_array_equal(a.noisy, b.noisy)
    assert a.mislabeled == b.mislabeled


def test_symmetric_rejects_bad_rate():
    y = _labels(100)
    with pytest.raises(ContractViolation):
        symmetric_noise(y, 1.0, 10, seed=0)
    with pytest.raises(ContractViolation):
        symmetric_noise(y, -0.1, 10, seed=0)


def test_record_consistency_invariants():
    y = _labels(3000, k=5)
    rec = symmetric_noise(y, 0.25, 5, seed=3)
    rebuilt = set(np.nonzero(rec.noisy != rec.clean)[0].tolist())
    assert rec.mislabeled == rebuilt
    assert rec.rate_achieved == pytest.approx(len(rebuilt) / 3000)


# --- instance-dependent ------------------------------------------------------

def test_idn_rate_zero_identity():
    y = _labels(500, k=4)
    rec = idn_noise(_features(y), y, 0.0, 4, seed=7)
    np.testing.assert_array_equal(rec.noisy, y)
    assert rec.mislabeled == set()


@pytest.mark.parametrize("tau", [0.2, 0.4, 0.6])
def test_idn_rate_concentration(tau):
    y = _labels(10000, k=10)
    rec = idn_noise(_features(y), y, tau, 10, seed=11)
    assert abs(rec.rate_achieved - tau) < 0.03


def test_idn_deterministic_byte_exact():
    y = _labels(3000, k=6)
    X = _features(y)
    a = idn_noise(X, y, 0.4, 6, seed=13)
    b = idn_noise(X, y, 0.4, 6, seed=13)
    assert a.noisy.tobytes() == b.noisy.tobytes()
    assert a.mislabeled == b.mislabeled


def test_idn_flips_follow_projection_scores():
    # flipped targets should score higher under the instance projection than
    # the average wrong class does
    y = _labels(8000, k=8)
    X = _features(y, d=10)
    rec = idn_noise(X, y, 0.4, 8, seed=17)
    q, W, P, _ = _idn_parts(X, y, 0.4, 8, seed=17)
    scores = X @ W
    flipped = np.fromiter(sorted(rec.mislabeled), dtype=np.int64)
    chosen = scores[flipped, rec.noisy[flipped]]
    wrong_mask = np.ones((flipped.size, 8), dtype=bool)
    wrong_mask[np.arange(flipped.size), y[flipped]] = False
    mean_wrong = scores[flipped][wrong_mask].reshape(flipped.size, 7).mean(axis=1)
    assert chosen.mean() > mean_wrong.mean()


def test_idn_distribution_rows_valid():
    y = _labels(400, k=5)
    X = _features(y)
    q, W, P, _ = _idn_parts(X, y, 0.3, 5, seed=19)
    assert np.all((q >= 0.0) & (q <= 1.0))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(P[np.arange(400), y], 1.0 - q, atol=1e-12)


def test_idn_rejects_bad_rate():
    y = _labels(100, k=3)
    with pytest.raises(ContractViolation):
        idn_noise(_features(y), y, 1.0, 3, seed=0)
