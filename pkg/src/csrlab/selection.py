"""Clean-sample selection: 1-D two-component GMM, two strategies, partition.

Per-sample CE losses (small-loss) or squared labeled-class noise entries
(small-u) are fit with a two-Gaussian mixture; samples whose posterior under
the low-mean component exceeds a threshold count as clean.  The two
selections combine into a clean / hard / noisy partition of the dataset.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolation

VAR_FLOOR = 1e-8
# below this spread the fit carries no usable signal; treat everything as clean
FLAT_RANGE = 1e-10
_RESTART_SEED = 12345


@dataclass
class Gmm1D:
    """Component 0 always has the smaller mean."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    degenerate: bool = False
    log_likelihoods: list = field(default_factory=list)


@dataclass
class SamplePartition:
    clean: set
    hard: set
    noisy: set


def _em_run(x, means, variances, weights, max_iters, tol):
    n = x.size
    lls = []
    params = (means, variances, weights)
    prev_params = params
    for _ in range(max_iters):
        means, variances, weights = params
        log_comp = (np.log(weights)[None, :]
                    - 0.5 * np.log(2.0 * np.pi * variances)[None, :]
                    - (x[:, None] - means[None, :]) ** 2 / (2.0 * variances)[None, :])
        log_norm = logsumexp(log_comp, axis=1)
        ll = float(log_norm.sum())
        if lls and ll < lls[-1] - 1e-10:
            # variance floor can break EM monotonicity; keep the better params
            params = prev_params
            break
        lls.append(ll)
        if len(lls) > 1 and lls[-1] - lls[-2] < tol:
            break
        resp = np.exp(log_comp - log_norm[:, None])
        nk = np.maximum(resp.sum(axis=0), 1e-300)
        new_means = (resp * x[:, None]).sum(axis=0) / nk
        new_vars = np.maximum(
            (resp * (x[:, None] - new_means[None, :]) ** 2).sum(axis=0) / nk,
            VAR_FLOOR)
        new_weights = nk / n
        prev_params = params
        params = (new_means, new_vars, new_weights)
    return params, lls


def gmm_fit(values, max_iters=200, tol=1e-8):
    """EM fit; log-likelihood is nondecreasing across recorded iterations."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 4:
        raise ContractViolation(f"need at least 4 values, got {x.size}")
    if not np.isfinite(x).all():
        raise ContractViolation("values must be finite")
    if np.all(x == x[0]):
        val = float(x[0])
        return Gmm1D(np.array([val, val]), np.array([VAR_FLOOR, VAR_FLOOR]),
                     np.array([0.5, 0.5]), degenerate=True)

    rng = np.random.default_rng(_RESTART_SEED)
    best = None
    for restart in range(2):
        q = 0.5 if restart == 0 else float(rng.uniform(0.25, 0.75))
        cut = np.quantile(x, q)
        lo, hi = x[x <= cut], x[x > cut]
        if lo.size == 0 or hi.size == 0:
            # quantile cut left one side empty (heavily tied data)
            lo, hi = x[: x.size // 2], x[x.size // 2:]
        means = np.array([lo.mean(), hi.mean()])
        variances = np.maximum(np.array([lo.var(), hi.var()]), VAR_FLOOR)
        weights = np.array([lo.size / x.size, hi.size / x.size])
        (m, v, w), lls = _em_run(x, means, variances, weights, max_iters, tol)
        if best is None or lls[-1] > best[1][-1]:
            best = ((m, v, w), lls)
    (m, v, w), lls = best
    order = np.argsort(m, kind="stable")
    return Gmm1D(m[order], v[order], w[order], degenerate=False,
                 log_likelihoods=lls)


def posterior_clean(model, value):
    """Posterior probability of the low-mean component at the given value(s)."""
    value = np.asarray(value, dtype=np.float64)
    if model.degenerate:
        return np.full(value.shape, 0.5) if value.ndim else 0.5
    x = np.atleast_1d(value)
    log_comp = (np.log(np.maximum(model.weights, 1e-300))[None, :]
                - 0.5 * np.log(2.0 * np.pi * model.variances)[None, :]
                - (x[:, None] - model.means[None, :]) ** 2
                / (2.0 * model.variances)[None, :])
    post = np.exp(log_comp[:, 0] - logsumexp(log_comp, axis=1))
    return post if value.ndim else float(post[0])


def _select(scores, sigma):
    x = np.asarray(scores, dtype=np.float64)
    if x.max() - x.min() <= FLAT_RANGE:
        return set(range(x.size))
    fit = gmm_fit(x)
    if fit.degenerate:
        return set(range(x.size))
    post = posterior_clean(fit, x)
    return set(np.nonzero(post > sigma)[0].tolist())


def small_loss_select(losses, sigma=0.5):
    """Clean candidates by GMM posterior over per-sample CE losses."""
    return _select(losses, sigma)


def small_u_select(noise, labels, sigma=0.5):
    """Clean candidates by GMM posterior over (u at the labeled class)^2."""
    labels = np.asarray(labels)
    u_hat = noise.u[np.arange(noise.n_samples), labels] ** 2
    return _select(u_hat, sigma)


def joint_partition(s_loss, s_u, omega_all):
    """clean = both agree; hard = exactly one; noisy = neither."""
    s_loss, s_u, omega_all = set(s_loss), set(s_u), set(omega_all)
    if not s_loss <= omega_all or not s_u <= omega_all:
        raise ContractViolation("selections must be subsets of the full index set")
    clean = s_loss & s_u
    hard = (s_loss | s_u) - clean
    noisy = omega_all - (s_loss | s_u)
    return SamplePartition(clean, hard, noisy)
