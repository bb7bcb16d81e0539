"""Analysis instruments: gradient-proportion series, the incoordination
ratio between two parameter groups, the v-lag replay experiment, the noise
fitting rate, and selection precision/recall."""

import os
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation


def grad_proportion(series):
    """Normalize a nonnegative per-epoch magnitude series to sum 1."""
    z = np.asarray(series, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ContractViolation("series must be a nonempty 1-D array")
    if (z < 0).any():
        raise ContractViolation("gradient magnitudes must be nonnegative")
    total = z.sum()
    if total <= 0:
        raise ContractViolation("all-zero series has no defined proportions")
    return z / total


def incoordination(g_a, g_b):
    """Sum|a-b| / Sum(a+b) over two proportion vectors: 0 when identical,
    1 when their supports are disjoint (half the L1 distance)."""
    g_a = np.asarray(g_a, dtype=np.float64)
    g_b = np.asarray(g_b, dtype=np.float64)
    if g_a.shape != g_b.shape:
        raise ContractViolation(
            f"length mismatch: {g_a.shape} vs {g_b.shape}")
    return float(np.abs(g_a - g_b).sum() / (g_a + g_b).sum())


def noise_fitting_rate(predictions, noisy_labels, mislabeled_set):
    """Fraction of mislabeled samples predicted as their (wrong) given label."""
    if not mislabeled_set:
        raise ContractViolation("mislabeled set is empty; NFR undefined")
    predictions = np.asarray(predictions)
    noisy_labels = np.asarray(noisy_labels)
    idx = np.fromiter(mislabeled_set, dtype=np.int64)
    return float(np.mean(predictions[idx] == noisy_labels[idx]))


class SelectionScore(NamedTuple):
    precision: float
    recall: float
    precision_defined: bool


def selection_metrics(selected, true_clean):
    """Precision/recall of a selected index set against the true clean set.

    An empty selection has no precision; it comes back as NaN with the
    precision_defined flag cleared.
    """
    selected = set(selected)
    true_clean = set(true_clean)
    hits = len(selected & true_clean)
    recall = hits / len(true_clean) if true_clean else float("nan")
    if not selected:
        return SelectionScore(float("nan"), recall, False)
    return SelectionScore(hits / len(selected), recall, True)


@dataclass
class LagPoint:
    shift: int
    incoordination: float
    test_error: float


def shifted_series(base, shift):
    """Delay a magnitude series by `shift` epochs, zero-filling the front."""
    base = np.asarray(base, dtype=np.float64)
    if shift == 0:
        return base.copy()
    out = np.zeros_like(base)
    out[shift:] = base[:-shift]
    return out


def lag_experiment(run_dir, shifts, config=None, train_data=None,
                   test_data=None):
    """Replay a saved run with the v trajectory delayed by each shift.

    For every shift k the model (and u) retrain from the run's seed while v is
    pinned to its saved value from k epochs earlier (clamped at the start, no
    updates).  Coordinated runs also pin M and gamma to their unshifted saved
    trajectory.  Returns one LagPoint per shift: the incoordination between
    the replay's model-gradient proportions and the shifted v series, and the
    replay's final test error.
    """
    from . import runio
    from .data import load_csv
    from .trainer import ReplaySpec, train

    snap = runio.read_config(os.path.join(run_dir, "config.snapshot"))
    cfg = runio.config_from_items(snap) if config is None else config
    if cfg.method not in ("sop", "csr"):
        raise ContractViolation(
            f"lag replay needs a sop or csr base run, found {cfg.method!r}")
    v_path = os.path.join(run_dir, "grads", "v_start.npy")
    if not os.path.exists(v_path):
        raise ContractViolation(
            f"no v trajectory at {v_path}; rerun training with traces enabled")
    v_by_epoch = np.load(v_path)
    if train_data is None:
        train_data = load_csv(snap["data"], n_classes=int(snap["n_classes"]))
    if test_data is None and snap.get("test_data"):
        test_data = load_csv(snap["test_data"], n_classes=int(snap["n_classes"]))
    metrics = runio.read_metrics(os.path.join(run_dir, "metrics.csv"))
    base_v_series = metrics["grad_v"]

    collab_by_epoch = None
    if cfg.method == "csr":
        m_traj = np.load(os.path.join(run_dir, "grads", "collab_M.npy"))
        g_traj = np.load(os.path.join(run_dir, "grads", "collab_gamma.npy"))
        collab_by_epoch = [(m_traj[e], float(g_traj[e]))
                           for e in range(m_traj.shape[0])]

    replay_cfg = replace(cfg, save_traces=False, select_each_epoch=False)
    points = []
    for shift in shifts:
        if not 0 <= shift < cfg.epochs:
            raise ContractViolation(
                f"shift {shift} outside [0, {cfg.epochs})")
        spec = ReplaySpec(list(v_by_epoch), shift, collab_by_epoch)
        _, _, _, log = train(train_data, replay_cfg, test_data=test_data,
                             replay=spec)
        theta_prop = grad_proportion(log.grad_l1["theta"])
        v_prop = grad_proportion(shifted_series(base_v_series, shift))
        points.append(LagPoint(
            shift,
            incoordination(theta_prop, v_prop),
            1.0 - log.records[-1].test_acc,
        ))
    return points
