"""Label corruption with ground-truth bookkeeping.

Symmetric noise flips to a uniformly random different class.  The
instance-dependent variant scores the wrong classes through a shared random
projection of the features, so flip targets correlate with where the sample
actually sits in feature space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import truncnorm

from .errors import ContractViolation

IDN_STD = 0.1


@dataclass
class CorruptionRecord:
    clean: np.ndarray
    noisy: np.ndarray
    mislabeled: set
    rate_target: float
    rate_achieved: float
    seed: int


def _finish(clean, noisy, rate, seed):
    mislabeled = set(np.nonzero(noisy != clean)[0].tolist())
    return CorruptionRecord(clean, noisy, mislabeled, float(rate),
                            len(mislabeled) / clean.size, seed)


def symmetric_noise(labels, rate, n_classes, seed):
    """Flip each label w.p. rate to a uniformly random different class."""
    if not 0.0 <= rate < 1.0:
        raise ContractViolation(f"rate {rate} outside [0, 1)")
    clean = np.asarray(labels, dtype=np.int64).copy()
    rng = np.random.default_rng(seed)
    flip = rng.random(clean.size) < rate
    draw = rng.integers(0, n_classes - 1, size=clean.size)
    # skip over the clean class so flips always land elsewhere
    alt = draw + (draw >= clean)
    noisy = np.where(flip, alt, clean)
    return _finish(clean, noisy, rate, seed)


def _idn_parts(features, labels, rate, n_classes, seed):
    """Deterministic ingredients of the instance-dependent recipe.

    Returns (q, W, P): per-instance flip probabilities, the shared projection,
    and the full per-sample label distribution with mass 1 - q_i on the clean
    class.  Split out so the flip-target alignment is checkable from outside.
    """
    X = np.asarray(features, dtype=np.float64)
    clean = np.asarray(labels, dtype=np.int64)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    if rate == 0.0:
        q = np.zeros(n)
    else:
        a = (0.0 - rate) / IDN_STD
        b = (1.0 - rate) / IDN_STD
        q = truncnorm.rvs(a, b, loc=rate, scale=IDN_STD, size=n, random_state=rng)
    W = rng.normal(size=(d, n_classes))
    scores = X @ W
    rows = np.arange(n)
    scores[rows, clean] = -np.inf
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    P = e / e.sum(axis=1, keepdims=True) * q[:, None]
    P[rows, clean] = 1.0 - q
    return q, W, P, rng


def idn_noise(features, labels, rate, n_classes, seed):
    """Instance-dependent noise: flip probability from a truncated normal
    around the target rate, flip target from a feature-projection softmax."""
    if not 0.0 <= rate < 1.0:
        raise ContractViolation(f"rate {rate} outside [0, 1)")
    clean = np.asarray(labels, dtype=np.int64).copy()
    _, _, P, rng = _idn_parts(features, clean, rate, n_classes, seed)
    cdf = np.cumsum(P, axis=1)
    draws = rng.random(clean.size)
    noisy = (draws[:, None] >= cdf).sum(axis=1).astype(np.int64)
    noisy = np.minimum(noisy, n_classes - 1)
    return _finish(clean, noisy, rate, seed)
