"""Training loops: plain CE, noise-augmented (sop), and coordinated (csr).

One unified epoch body serves every method so that reductions are exact: the
plain path runs with zero noise vectors and an identity collaboration matrix
through the very same operations, which keeps its losses bit-identical to a
coordinated run with everything frozen.

Update cadence: model and collaboration parameters step per batch; the
per-sample noise vectors accumulate their gradients as each batch is visited
and step once at the epoch boundary.  Warm-up epochs run plain CE with the
noise vectors and collaboration matrix held out of the loss entirely.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .collab import (diag_mean, init_collab, normalization_backward,
                     normalize_matrix, update_collab)
from .confidence import confidence_weights, ema_update, init_ema
from .errors import ContractViolation, DegeneratePrediction, TrainingDiverged
from .model import PROB_FLOOR, GradientSet, init_model, sgd_step
from .selection import joint_partition, small_loss_select, small_u_select
from .sparse_noise import (NoiseGrads, build_s, ce_grad_u, init_noise,
                           mse_grad_v, mse_path, update_noise_params, zero_noise)

METHODS = ("plain-ce", "sop", "csr", "csr-plus")
GRAD_GROUPS = ("theta", "u", "v", "m")


@dataclass
class TrainConfig:
    method: str = "csr"
    epochs: int = 60
    batch_size: int = 128
    lr_model: float = 0.02
    weight_decay: float = 0.0
    lr_u: Optional[float] = None          # default 10 * lr_model
    lr_v: Optional[float] = None          # default 100 * lr_model
    lr_m: float = 0.001
    lr_gamma: Optional[float] = None      # default lr_m
    beta_init: float = 0.7
    warmup: Optional[int] = None          # default 10 (K <= 10) else 20
    window: Optional[int] = None          # default = warmup
    hidden: tuple = (32, 32)
    noise_init_scale: float = 1e-8
    sigma_select: float = 0.5
    seed: int = 0
    select_each_epoch: bool = True
    save_traces: bool = False
    force_omega_one: bool = False
    freeze_noise: bool = False
    # extras used only by the plus method
    use_consistency: bool = True
    use_mixup: bool = True
    use_correction: bool = True
    aug_weak: float = 0.05
    aug_strong: float = 0.2
    aug_mask: float = 0.2
    alpha_mix: float = 4.0
    epsilon_combine: float = 0.5
    threshold_offset: float = 0.5
    threshold_cap: float = 0.99
    threshold_momentum: float = 0.9
    threshold_rule: str = "cap"           # cap | literal-max
    gate_rule: str = "max"                # max | literal-min

    def resolved(self, n_classes):
        """Copy with data-dependent defaults filled in and values checked."""
        cfg = replace(self)
        if cfg.lr_u is None:
            cfg.lr_u = 10.0 * cfg.lr_model
        if cfg.lr_v is None:
            cfg.lr_v = 100.0 * cfg.lr_model
        if cfg.lr_gamma is None:
            cfg.lr_gamma = cfg.lr_m
        if cfg.warmup is None:
            cfg.warmup = 10 if n_classes <= 10 else 20
        if cfg.window is None:
            cfg.window = cfg.warmup
        if cfg.method not in METHODS:
            raise ContractViolation(f"unknown method {cfg.method!r}")
        if cfg.epochs <= 0 or cfg.batch_size <= 0:
            raise ContractViolation("epochs and batch_size must be positive")
        for name in ("lr_model", "weight_decay", "lr_u", "lr_v", "lr_m",
                     "lr_gamma"):
            if getattr(cfg, name) < 0:
                raise ContractViolation(f"{name} must be nonnegative")
        if not 0 <= cfg.warmup < cfg.epochs:
            raise ContractViolation("need 0 <= warmup < epochs")
        if cfg.threshold_rule not in ("cap", "literal-max"):
            raise ContractViolation(f"unknown threshold_rule {cfg.threshold_rule!r}")
        if cfg.gate_rule not in ("max", "literal-min"):
            raise ContractViolation(f"unknown gate_rule {cfg.gate_rule!r}")
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_acc: float
    grad_theta: float
    grad_u: float
    grad_v: float
    grad_m: float
    nfr: float
    diag_mean_m: float
    omega_mean: float
    omega_min: float
    omega_max: float
    omega_hist: tuple
    sel_loss_prec: float
    sel_loss_rec: float
    sel_u_prec: float
    sel_u_rec: float
    sel_joint_prec: float
    sel_joint_rec: float
    n_clean: int
    n_hard: int
    n_noisy: int
    n_corrected: int
    extra_loss: float
    alpha_t: float
    n_gamma_clips: int
    fallback: int


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    partitions: list = field(default_factory=list)
    grad_l1: dict = field(default_factory=lambda: {g: [] for g in GRAD_GROUPS})
    collab_snapshots: list = field(default_factory=list)   # (M, gamma) per epoch start
    per_sample: Optional[dict] = None      # final-epoch arrays: losses, omega
    traces: Optional[dict] = None


@dataclass
class ReplaySpec:
    """Frozen v trajectory for the lag experiment.

    Epoch e runs with v pinned to v_by_epoch[max(0, e - shift)]; v receives no
    updates.  When collab_by_epoch is given (coordinated base runs), M and
    gamma are pinned to their unshifted saved trajectory as well.
    """

    v_by_epoch: list
    shift: int = 0
    collab_by_epoch: Optional[list] = None


@dataclass
class TrainState:
    """Everything a training run mutates, bundled for the epoch helpers."""

    cfg: TrainConfig
    X: np.ndarray
    model: object
    noise: object
    collab: object
    ema: object
    labels: np.ndarray        # working labels (the plus method may correct them)
    onehot: np.ndarray
    rng_shuffle: np.random.Generator
    rng_aug: np.random.Generator
    last_good: Optional[tuple] = None


def init_train_state(dataset, cfg):
    n, k = dataset.n_samples, dataset.n_classes
    streams = [np.random.default_rng(s)
               for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    rng_model, rng_noise, rng_shuffle, rng_aug = streams
    model = init_model((dataset.n_features, *cfg.hidden, k), rng_model)
    if cfg.method in ("sop", "csr", "csr-plus") and not cfg.freeze_noise:
        noise = init_noise(n, k, rng_noise, cfg.noise_init_scale)
    else:
        noise = zero_noise(n, k)
    collab = init_collab(k, cfg.lr_m, cfg.lr_gamma)
    ema = init_ema(n, k, cfg.beta_init, cfg.epochs, cfg.window)
    labels = dataset.y.astype(np.int64).copy()
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    return TrainState(cfg, dataset.X, model, noise, collab, ema, labels,
                      onehot, rng_shuffle, rng_aug)


def set_labels(st, idx, new_labels):
    """Swap working labels (plus-method correction); keeps one-hot in sync."""
    st.labels[idx] = new_labels
    st.onehot[idx] = 0.0
    st.onehot[idx, new_labels] = 1.0


def run_base_epoch(st, e, replay=None):
    """One full pass: batched CE path, per-batch model/collab steps, per-epoch
    noise step.  Returns the epoch aggregates all methods share."""
    cfg = st.cfg
    n, k = st.onehot.shape
    X = st.X
    in_warmup = e < cfg.warmup
    if replay is not None:
        if not 0 <= replay.shift < cfg.epochs:
            raise ContractViolation(f"shift {replay.shift} outside [0, epochs)")
        st.noise.v[...] = replay.v_by_epoch[max(0, e - replay.shift)]
        if replay.collab_by_epoch is not None:
            m_saved, gamma_saved = replay.collab_by_epoch[e]
            st.collab.M[...] = m_saved
            st.collab.gamma = gamma_saved

    use_omega = cfg.method in ("csr", "csr-plus") and not cfg.force_omega_one
    if in_warmup or not use_omega or e == 0:
        omega = np.ones(n)
    else:
        omega = confidence_weights(st.ema.q, st.onehot).omega

    update_u = (cfg.method in ("sop", "csr", "csr-plus")
                and not cfg.freeze_noise and not in_warmup)
    update_v = update_u and replay is None
    update_m = (cfg.method in ("csr", "csr-plus") and not in_warmup
                and (replay is None or replay.collab_by_epoch is None))

    g_u_acc = np.zeros((n, k))
    g_v_acc = np.zeros((n, k))
    f_epoch = np.zeros((n, k))
    losses_epoch = np.zeros(n)
    g_theta_l1 = 0.0
    g_m_l1 = 0.0
    clips_before = st.collab.n_clip_warnings
    eye = np.eye(k)

    perm = st.rng_shuffle.permutation(n)
    for start in range(0, n, cfg.batch_size):
        idx = perm[start:start + cfg.batch_size]
        xb = X[idx]
        yb = st.labels[idx]
        y_onehot_b = st.onehot[idx]
        hiddens, f = _kernels.forward(xb, st.model.weights, st.model.biases)
        f_epoch[idx] = f
        if in_warmup:
            m_bar = eye
            s_b = np.zeros_like(f)
        else:
            m_bar = normalize_matrix(st.collab)
            s_b = build_s(st.noise.u[idx], st.noise.v[idx], y_onehot_b)
        losses_b, g_t, n_degenerate = _kernels.collab_ce(
            f, m_bar, s_b, yb, PROB_FLOOR)
        # NaN predictions also look "fully clamped" to the kernel, so rule
        # out divergence before blaming the clamp
        if not (np.isfinite(f).all() and np.isfinite(losses_b).all()):
            raise TrainingDiverged("non-finite training loss", epoch=e,
                                   snapshot=st.last_good)
        if n_degenerate:
            raise DegeneratePrediction(
                f"{n_degenerate} fully clamped corrected predictions at epoch {e}")
        losses_epoch[idx] = losses_b

        scale = omega[idx] / idx.size
        g_f = (g_t * scale[:, None]) @ m_bar.T
        g_z = _kernels.softmax_backward(f, g_f)
        grads = GradientSet(*_kernels.backward(xb, hiddens, st.model.weights, g_z))
        g_theta_l1 += grads.l1()
        try:
            sgd_step(st.model, grads, cfg.lr_model, cfg.weight_decay)
        except TrainingDiverged as exc:
            raise TrainingDiverged(str(exc), epoch=e, snapshot=st.last_good) from None

        if update_m:
            g_mbar = f.T @ (g_t / idx.size)
            g_m, g_gamma = normalization_backward(st.collab.M, st.collab.gamma,
                                                  g_mbar)
            g_m_l1 += float(np.abs(g_m).sum()) + abs(g_gamma)
            update_collab(st.collab, g_m, g_gamma)

        if update_u:
            g_u_acc[idx] = ce_grad_u(g_t, st.noise.u[idx], y_onehot_b)
        if update_v:
            _, m_targets = mse_path(f, m_bar, s_b, y_onehot_b)
            g_v_acc[idx] = mse_grad_v(m_targets, y_onehot_b, st.noise.v[idx])

    if update_u:
        noise_w = omega if use_omega else np.zeros(n)
        update_noise_params(st.noise, NoiseGrads(g_u_acc, g_v_acc),
                            cfg.lr_u, cfg.lr_v, noise_w)
        applied = (1.0 - noise_w)[:, None]
        g_u_l1 = float(np.abs(applied * g_u_acc).sum())
        g_v_l1 = float(np.abs(applied * g_v_acc).sum())
    else:
        g_u_l1 = 0.0
        g_v_l1 = 0.0

    ema_update(st.ema, f_epoch, e + 1)
    # selection statistic: CE of the model's own prediction, not the
    # corrected-path loss -- absorption drives the latter down for noisy
    # samples and would erase the very separation the selector needs
    picked = f_epoch[np.arange(n), st.labels]
    raw_losses = -np.log(np.clip(picked, PROB_FLOOR, 1.0))
    return {
        "in_warmup": in_warmup,
        "train_loss": float(losses_epoch.sum() / n),
        "losses": losses_epoch,
        "raw_losses": raw_losses,
        "f_epoch": f_epoch,
        "omega": omega,
        "grad_l1": {"theta": g_theta_l1, "u": g_u_l1, "v": g_v_l1, "m": g_m_l1},
        "n_gamma_clips": st.collab.n_clip_warnings - clips_before,
    }


def accuracy(model, dataset):
    _, probs = _kernels.forward(dataset.X, model.weights, model.biases)
    return float(np.mean(np.argmax(probs, axis=1) == dataset.y))


def record_gradients(run_log, epoch, grad_l1):
    """Append one epoch's per-group L1 gradient magnitudes to the log."""
    for group in GRAD_GROUPS:
        series = run_log.grad_l1[group]
        if len(series) != epoch:
            raise ContractViolation(
                f"gradient record for epoch {epoch} appended out of order")
        series.append(float(grad_l1[group]))


def selection_summary(st, losses, dataset, corrected=None):
    """Fit both selectors on this epoch's statistics and score them when the
    dataset knows its clean labels.  Returns (partition, metric dict)."""
    from .diagnostics import selection_metrics

    n = dataset.n_samples
    every = set(range(n))
    s_loss = small_loss_select(losses, st.cfg.sigma_select)
    s_u = small_u_select(st.noise, st.labels, st.cfg.sigma_select)
    part = joint_partition(s_loss, s_u, every)
    if corrected:
        part.clean |= corrected
        part.hard -= corrected
        part.noisy -= corrected
    out = {name: float("nan")
           for name in ("sel_loss_prec", "sel_loss_rec", "sel_u_prec",
                        "sel_u_rec", "sel_joint_prec", "sel_joint_rec")}
    if dataset.y_clean is not None:
        true_clean = set(np.nonzero(st.labels == dataset.y_clean)[0].tolist())
        for name, sel in (("loss", s_loss), ("u", s_u), ("joint", part.clean)):
            prec, rec, _ = selection_metrics(sel, true_clean)
            out[f"sel_{name}_prec"] = prec
            out[f"sel_{name}_rec"] = rec
    return part, out


def epoch_nfr(f_epoch, dataset):
    from .diagnostics import noise_fitting_rate

    if dataset.y_clean is None:
        return float("nan")
    mislabeled = set(np.nonzero(dataset.y != dataset.y_clean)[0].tolist())
    if not mislabeled:
        return float("nan")
    preds = np.argmax(f_epoch, axis=1)
    return noise_fitting_rate(preds, dataset.y, mislabeled)


def build_record(st, e, stats, test_acc, sel, part, diag_m, extra_loss=0.0,
                 alpha_t=0.0, n_corrected=0, fallback=0):
    omega = stats["omega"]
    hist = np.histogram(omega, bins=16, range=(0.0, 1.0))[0]
    return EpochRecord(
        epoch=e,
        train_loss=stats["train_loss"],
        test_acc=test_acc,
        grad_theta=stats["grad_l1"]["theta"],
        grad_u=stats["grad_l1"]["u"],
        grad_v=stats["grad_l1"]["v"],
        grad_m=stats["grad_l1"]["m"],
        nfr=stats["nfr"],
        diag_mean_m=diag_m,
        omega_mean=float(omega.mean()),
        omega_min=float(omega.min()),
        omega_max=float(omega.max()),
        omega_hist=tuple(int(c) for c in hist),
        sel_loss_prec=sel["sel_loss_prec"],
        sel_loss_rec=sel["sel_loss_rec"],
        sel_u_prec=sel["sel_u_prec"],
        sel_u_rec=sel["sel_u_rec"],
        sel_joint_prec=sel["sel_joint_prec"],
        sel_joint_rec=sel["sel_joint_rec"],
        n_clean=len(part.clean) if part is not None else 0,
        n_hard=len(part.hard) if part is not None else 0,
        n_noisy=len(part.noisy) if part is not None else 0,
        n_corrected=n_corrected,
        extra_loss=extra_loss,
        alpha_t=alpha_t,
        n_gamma_clips=stats["n_gamma_clips"],
        fallback=fallback,
    )


def train(dataset, config, test_data=None, replay=None):
    """Run plain-ce, sop, or csr training; deterministic per seed.

    Returns (model, noise, collab, run_log).  Raises TrainingDiverged with the
    last finished epoch's snapshot if a loss or gradient goes non-finite.
    """
    dataset.validate()
    cfg = config.resolved(dataset.n_classes)
    if cfg.method not in ("plain-ce", "sop", "csr"):
        raise ContractViolation(
            f"train handles plain-ce/sop/csr; use train_plus for {cfg.method!r}")
    st = init_train_state(dataset, cfg)
    log = RunLog(traces={"v_start": []} if cfg.save_traces else None)
    started = time.perf_counter()
    for e in range(cfg.epochs):
        log.collab_snapshots.append((st.collab.M.copy(), st.collab.gamma))
        if log.traces is not None:
            log.traces["v_start"].append(st.noise.v.copy())
        stats = run_base_epoch(st, e, replay=replay)
        stats["nfr"] = epoch_nfr(stats["f_epoch"], dataset)
        test_acc = accuracy(st.model, test_data) if test_data is not None else float("nan")
        if cfg.select_each_epoch:
            part, sel = selection_summary(st, stats["raw_losses"], dataset)
        else:
            part, sel = None, {name: float("nan") for name in (
                "sel_loss_prec", "sel_loss_rec", "sel_u_prec", "sel_u_rec",
                "sel_joint_prec", "sel_joint_rec")}
        log.partitions.append(part)
        record_gradients(log, e, stats["grad_l1"])
        log.records.append(build_record(
            st, e, stats, test_acc, sel, part,
            diag_mean(log.collab_snapshots[-1][0])))
        st.last_good = (st.model.copy(), st.noise.copy(), st.collab.copy())
    log.per_sample = {"losses": stats["raw_losses"], "omega": stats["omega"]}
    log.summary = {
        "method": cfg.method,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "final_train_loss": log.records[-1].train_loss,
        "final_test_acc": log.records[-1].test_acc,
        "final_nfr": log.records[-1].nfr,
        "wall_time_s": time.perf_counter() - started,
        "backend": _kernels.backend_name,
    }
    return st.model, st.noise, st.collab, log
