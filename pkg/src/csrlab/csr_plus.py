"""Sample-selection training on top of the coordinated loop.

Each post-warm-up epoch: run the coordinated pass over everything, partition
the samples into clean / hard / noisy from the two selectors, then give the
trusted subsets extra supervision (consistency on strong views for clean,
Mixup on weak views for clean and hard) weighted by a linear ramp.  Noisy
samples get no supervision but can earn a pseudo-label once their combined
weak/strong confidence beats a per-sample smoothed threshold; corrected
samples join the clean set from the next epoch on.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractViolation
from .model import GradientSet, PROB_FLOOR, ce_loss, forward, sgd_step
from .trainer import (RunLog, build_record, diag_mean, epoch_nfr,
                      init_train_state, record_gradients, run_base_epoch,
                      selection_summary, set_labels, accuracy)


@dataclass
class AugmentPolicy:
    """Vector-data augmentation: jitter scaled by per-feature std; strong
    views also reset a random feature subset to the feature mean."""

    sigma_w: float
    sigma_s: float
    rho: float
    feature_std: np.ndarray
    feature_mean: np.ndarray


@dataclass
class CorrectionState:
    phi_ws: np.ndarray          # per-sample smoothed max combined confidence
    epsilon: float = 0.5
    offset: float = 0.5
    cap: float = 0.99
    momentum: float = 0.9
    rule: str = "cap"
    gate: str = "max"


def fit_augment(X, sigma_w=0.05, sigma_s=0.2, rho=0.2):
    if not sigma_w < sigma_s:
        raise ContractViolation("weak jitter must be smaller than strong")
    if not 0.0 <= rho < 1.0:
        raise ContractViolation(f"mask probability {rho} outside [0, 1)")
    X = np.asarray(X, dtype=np.float64)
    return AugmentPolicy(sigma_w, sigma_s, rho,
                         X.std(axis=0), X.mean(axis=0))


def weak_view(policy, X, rng):
    return X + rng.normal(size=X.shape) * (policy.sigma_w * policy.feature_std)


def strong_view(policy, X, rng):
    out = X + rng.normal(size=X.shape) * (policy.sigma_s * policy.feature_std)
    if policy.rho > 0.0:
        mask = rng.random(X.shape) < policy.rho
        out = np.where(mask, policy.feature_mean, out)
    return out


def consistency_loss(model_state, x_strong, y):
    """CE of the prediction on the strongly augmented view against the label."""
    return ce_loss(forward(x_strong, model_state), y)


def mixup(x_i, y_i, x_j, y_j, delta):
    """Convex combination of two (weakly augmented) samples and their labels."""
    if not 0.0 <= delta <= 1.0:
        raise ContractViolation(f"delta {delta} outside [0, 1]")
    x_i, y_i = np.asarray(x_i, dtype=np.float64), np.asarray(y_i, dtype=np.float64)
    x_j, y_j = np.asarray(x_j, dtype=np.float64), np.asarray(y_j, dtype=np.float64)
    return delta * x_i + (1.0 - delta) * x_j, delta * y_i + (1.0 - delta) * y_j


def overall_loss(l_csr, l_cr, l_mix, alpha_t):
    if not 0.0 <= alpha_t <= 1.0:
        raise ContractViolation(f"alpha_t {alpha_t} outside [0, 1]")
    return l_csr + alpha_t * (l_cr + l_mix)


def alpha_ramp(epoch, warmup, total_epochs):
    """Extra-loss weight: 0 through warm-up, then linear up to 1 at the end."""
    if epoch < warmup:
        return 0.0
    span = total_epochs - 1 - warmup
    if span <= 0:
        return 1.0
    return min(1.0, (epoch - warmup) / span)


def combine_predictions(p_w, p_s, epsilon=0.5):
    return epsilon * np.asarray(p_w, dtype=np.float64) \
        + (1.0 - epsilon) * np.asarray(p_s, dtype=np.float64)


def dynamic_threshold(phi_ws_i, offset=0.5, cap=0.99, rule="cap"):
    """Per-sample correction threshold.  The default caps at 0.99; the
    literal-max rule keeps the other reading of the same formula."""
    shifted = np.asarray(phi_ws_i, dtype=np.float64) + offset
    if rule == "cap":
        out = np.minimum(shifted, cap)
    elif rule == "literal-max":
        out = np.maximum(shifted, cap)
    else:
        raise ContractViolation(f"unknown threshold rule {rule!r}")
    return float(out) if out.ndim == 0 else out


def correct_labels(noisy_idx, p_ws, state):
    """Update the smoothed confidences for the noisy subset, then pseudo-label
    every sample whose gated confidence clears its threshold.

    noisy_idx are absolute sample indices aligned with the rows of p_ws.
    Returns a set of (index, pseudo_label) pairs.
    """
    noisy_idx = np.asarray(noisy_idx, dtype=np.int64)
    p_ws = np.asarray(p_ws, dtype=np.float64)
    if p_ws.shape[0] != noisy_idx.size:
        raise ContractViolation("one row of p_ws per noisy index required")
    conf = p_ws.max(axis=1)
    state.phi_ws[noisy_idx] = (state.momentum * state.phi_ws[noisy_idx]
                               + (1.0 - state.momentum) * conf)
    threshold = dynamic_threshold(state.phi_ws[noisy_idx], state.offset,
                                  state.cap, state.rule)
    gated = p_ws.min(axis=1) if state.gate == "literal-min" else conf
    chosen = np.nonzero(gated > threshold)[0]
    labels = np.argmax(p_ws[chosen], axis=1)
    return {(int(noisy_idx[k]), int(lab)) for k, lab in zip(chosen, labels)}


def _soft_ce_step(st, x_views, targets, alpha_t, batch_size):
    """One supervised pass over augmented views with (possibly soft) targets;
    returns (summed loss, summed applied-gradient L1)."""
    cfg = st.cfg
    loss_sum = 0.0
    l1_sum = 0.0
    for start in range(0, x_views.shape[0], batch_size):
        xb = x_views[start:start + batch_size]
        tb = targets[start:start + batch_size]
        hiddens, p = _kernels.forward(xb, st.model.weights, st.model.biases)
        loss_sum += float(-np.sum(tb * np.log(np.clip(p, PROB_FLOOR, 1.0))))
        g_z = (p - tb) * (alpha_t / xb.shape[0])
        grads = GradientSet(*_kernels.backward(xb, hiddens, st.model.weights, g_z))
        l1_sum += grads.l1()
        sgd_step(st.model, grads, cfg.lr_model, cfg.weight_decay)
    return loss_sum, l1_sum


def _extras_pass(st, part, policy, alpha_t):
    """Consistency on clean strong views, Mixup within clean and hard.
    Returns (mean extra loss over contributions, applied theta-grad L1)."""
    cfg = st.cfg
    rng = st.rng_aug
    loss_sum = 0.0
    l1_sum = 0.0
    n_terms = 0
    clean_idx = np.fromiter(sorted(part.clean), dtype=np.int64)
    hard_idx = np.fromiter(sorted(part.hard), dtype=np.int64)

    if cfg.use_consistency and clean_idx.size:
        order = clean_idx[rng.permutation(clean_idx.size)]
        x_s = strong_view(policy, st.X[order], rng)
        loss, l1 = _soft_ce_step(st, x_s, st.onehot[order], alpha_t,
                                 cfg.batch_size)
        loss_sum += loss
        l1_sum += l1
        n_terms += order.size

    if cfg.use_mixup:
        for subset in (clean_idx, hard_idx):
            if subset.size < 2:
                continue
            order = subset[rng.permutation(subset.size)]
            x_w = weak_view(policy, st.X[order], rng)
            partner = rng.permutation(order.size)
            d = rng.beta(cfg.alpha_mix, cfg.alpha_mix, size=order.size)[:, None]
            x_m = d * x_w + (1.0 - d) * x_w[partner]
            y_m = d * st.onehot[order] + (1.0 - d) * st.onehot[order[partner]]
            loss, l1 = _soft_ce_step(st, x_m, y_m, alpha_t, cfg.batch_size)
            loss_sum += loss
            l1_sum += l1
            n_terms += order.size

    mean_loss = alpha_t * loss_sum / n_terms if n_terms else 0.0
    return mean_loss, l1_sum


def train_plus(dataset, config, test_data=None):
    """Selection-and-correction training; returns (model, run_log)."""
    dataset.validate()
    cfg = config.resolved(dataset.n_classes)
    if cfg.method != "csr-plus":
        raise ContractViolation(f"train_plus expects method csr-plus, got {cfg.method!r}")
    st = init_train_state(dataset, cfg)
    policy = fit_augment(dataset.X, cfg.aug_weak, cfg.aug_strong, cfg.aug_mask)
    correction = CorrectionState(
        np.zeros(dataset.n_samples), cfg.epsilon_combine, cfg.threshold_offset,
        cfg.threshold_cap, cfg.threshold_momentum, cfg.threshold_rule,
        cfg.gate_rule)
    corrected = set()
    log = RunLog(traces={"v_start": []} if cfg.save_traces else None)
    started = time.perf_counter()

    for e in range(cfg.epochs):
        log.collab_snapshots.append((st.collab.M.copy(), st.collab.gamma))
        if log.traces is not None:
            log.traces["v_start"].append(st.noise.v.copy())
        stats = run_base_epoch(st, e)
        stats["nfr"] = epoch_nfr(stats["f_epoch"], dataset)
        alpha_t = alpha_ramp(e, cfg.warmup, cfg.epochs)
        extra_loss = 0.0
        n_corrected_now = 0
        fallback = 0
        part, sel = selection_summary(st, stats["raw_losses"], dataset,
                                      corrected=corrected)
        if not stats["in_warmup"]:
            if not part.clean:
                fallback = 1
            else:
                extra_loss, extra_l1 = _extras_pass(st, part, policy, alpha_t)
                stats["grad_l1"]["theta"] += extra_l1
                if cfg.use_correction and part.noisy:
                    noisy_idx = np.fromiter(sorted(part.noisy), dtype=np.int64)
                    p_w = forward(weak_view(policy, st.X[noisy_idx], st.rng_aug),
                                  st.model)
                    p_s = forward(strong_view(policy, st.X[noisy_idx], st.rng_aug),
                                  st.model)
                    p_ws = combine_predictions(p_w, p_s, correction.epsilon)
                    pairs = correct_labels(noisy_idx, p_ws, correction)
                    if pairs:
                        idx = np.array([i for i, _ in sorted(pairs)], dtype=np.int64)
                        labs = np.array([lab for _, lab in sorted(pairs)],
                                        dtype=np.int64)
                        set_labels(st, idx, labs)
                        corrected |= set(idx.tolist())
                        n_corrected_now = idx.size
        test_acc = accuracy(st.model, test_data) if test_data is not None else float("nan")
        record_gradients(log, e, stats["grad_l1"])
        log.partitions.append(part)
        log.records.append(build_record(
            st, e, stats, test_acc, sel, part,
            diag_mean(log.collab_snapshots[-1][0]),
            extra_loss=extra_loss, alpha_t=alpha_t,
            n_corrected=n_corrected_now, fallback=fallback))
        st.last_good = (st.model.copy(), st.noise.copy(), st.collab.copy())

    log.per_sample = {
        "losses": stats["raw_losses"],
        "omega": stats["omega"],
        "labels_final": st.labels.copy(),
        "corrected_idx": np.fromiter(sorted(corrected), dtype=np.int64),
    }
    log.summary = {
        "method": cfg.method,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "final_train_loss": log.records[-1].train_loss,
        "final_test_acc": log.records[-1].test_acc,
        "final_nfr": log.records[-1].nfr,
        "n_corrected_total": len(corrected),
        "n_fallback_epochs": int(sum(r.fallback for r in log.records)),
        "wall_time_s": time.perf_counter() - started,
        "backend": _kernels.backend_name,
    }
    return st.model, log
