"""Run-directory persistence.

Layout: config.snapshot (flat key=value), metrics.csv (one row per epoch),
summary.json, collab_m.csv (per-epoch M snapshot), per_sample.csv, noise_u.npy
and noise_v.npy, and grads/ trace arrays when the run saved them.  Floats are
serialized with repr so every file round-trips bit-exact.
"""

import dataclasses
import json
import os

import numpy as np

from .errors import ContractViolation, CsvFormatError
from .trainer import EpochRecord, TrainConfig

N_HIST_BINS = 16


def _parse_hidden(text):
    return tuple(int(tok) for tok in text.split(",") if tok)


def _parse_bool(text):
    if text not in ("true", "false"):
        raise ContractViolation(f"expected true/false, got {text!r}")
    return text == "true"


_CONFIG_PARSERS = {
    "method": str,
    "epochs": int,
    "batch_size": int,
    "lr_model": float,
    "weight_decay": float,
    "lr_u": float,
    "lr_v": float,
    "lr_m": float,
    "lr_gamma": float,
    "beta_init": float,
    "warmup": int,
    "window": int,
    "hidden": _parse_hidden,
    "noise_init_scale": float,
    "sigma_select": float,
    "seed": int,
    "select_each_epoch": _parse_bool,
    "save_traces": _parse_bool,
    "force_omega_one": _parse_bool,
    "freeze_noise": _parse_bool,
    "use_consistency": _parse_bool,
    "use_mixup": _parse_bool,
    "use_correction": _parse_bool,
    "aug_weak": float,
    "aug_strong": float,
    "aug_mask": float,
    "alpha_mix": float,
    "epsilon_combine": float,
    "threshold_offset": float,
    "threshold_cap": float,
    "threshold_momentum": float,
    "threshold_rule": str,
    "gate_rule": str,
}


def _value_to_str(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


# knobs a config file or --set override may touch
CONFIG_KEYS = frozenset(_CONFIG_PARSERS)


def config_to_items(cfg, extra=None):
    items = {f.name: _value_to_str(getattr(cfg, f.name))
             for f in dataclasses.fields(TrainConfig)}
    for key, value in (extra or {}).items():
        if key in items:
            raise ContractViolation(f"extra config key {key!r} shadows a field")
        items[key] = _value_to_str(value)
    return items


def config_from_items(items):
    kwargs = {}
    for name, parser in _CONFIG_PARSERS.items():
        if name in items:
            text = items[name]
            kwargs[name] = None if text == "none" else parser(text)
    return TrainConfig(**kwargs)


def write_config(path, cfg, extra=None):
    items = config_to_items(cfg, extra)
    with open(path, "w") as fh:
        for key in sorted(items):
            fh.write(f"{key}={items[key]}\n")


def read_config(path):
    items = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise CsvFormatError(f"missing '=' in {line!r}", line=lineno)
            key, _, value = line.partition("=")
            items[key] = value
    return items


def metrics_columns():
    cols = []
    for f in dataclasses.fields(EpochRecord):
        if f.name == "omega_hist":
            cols.extend(f"omega_h{i:02d}" for i in range(N_HIST_BINS))
        else:
            cols.append(f.name)
    return cols


def _record_row(rec):
    row = []
    for f in dataclasses.fields(EpochRecord):
        value = getattr(rec, f.name)
        if f.name == "omega_hist":
            row.extend(str(int(c)) for c in value)
        elif isinstance(value, float):
            row.append(repr(value))
        else:
            row.append(str(value))
    return row


def write_metrics(path, records):
    with open(path, "w") as fh:
        fh.write(",".join(metrics_columns()) + "\n")
        for rec in records:
            fh.write(",".join(_record_row(rec)) + "\n")


def read_metrics(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError("empty metrics file", line=1)
    header = lines[0].split(",")
    columns = {name: [] for name in header}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise CsvFormatError(
                f"expected {len(header)} fields, got {len(parts)}", line=lineno)
        for name, value in zip(header, parts):
            columns[name].append(float(value))
    return {name: np.asarray(vals) for name, vals in columns.items()}


def write_summary(path, summary):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path):
    with open(path) as fh:
        return json.load(fh)


def write_collab_csv(path, snapshots):
    if not snapshots:
        return
    k = snapshots[0][0].shape[0]
    cols = ["epoch", "gamma", "diag_mean"]
    cols += [f"m_{i}_{j}" for i in range(k) for j in range(k)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for e, (m, gamma) in enumerate(snapshots):
            row = [str(e), repr(float(gamma)), repr(float(np.mean(np.diag(m))))]
            row += [repr(float(v)) for v in m.ravel()]
            fh.write(",".join(row) + "\n")


def write_per_sample(path, dataset, log, noise):
    losses = log.per_sample["losses"]
    omega = log.per_sample["omega"]
    u_sq = noise.u[np.arange(dataset.n_samples), dataset.y] ** 2
    has_clean = dataset.y_clean is not None
    cols = ["index", "label"] + (["clean_label"] if has_clean else [])
    cols += ["loss", "u_sq", "omega"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(dataset.n_samples):
            row = [str(i), str(int(dataset.y[i]))]
            if has_clean:
                row.append(str(int(dataset.y_clean[i])))
            row += [repr(float(losses[i])), repr(float(u_sq[i])),
                    repr(float(omega[i]))]
            fh.write(",".join(row) + "\n")


def write_series_csv(path, header, columns):
    """Small plot-ready CSV: parallel columns, floats via repr."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(
                repr(float(v)) if isinstance(v, float) else str(v)
                for v in row) + "\n")


def write_run(run_dir, cfg, log, dataset=None, noise=None, extra_config=None):
    """Persist a finished run; everything needed to diagnose or replay it."""
    os.makedirs(run_dir, exist_ok=True)
    write_config(os.path.join(run_dir, "config.snapshot"), cfg, extra_config)
    write_metrics(os.path.join(run_dir, "metrics.csv"), log.records)
    write_summary(os.path.join(run_dir, "summary.json"), log.summary)
    write_collab_csv(os.path.join(run_dir, "collab_m.csv"), log.collab_snapshots)
    if log.collab_snapshots:
        grads_dir = os.path.join(run_dir, "grads")
        os.makedirs(grads_dir, exist_ok=True)
        np.save(os.path.join(grads_dir, "collab_M.npy"),
                np.stack([m for m, _ in log.collab_snapshots]))
        np.save(os.path.join(grads_dir, "collab_gamma.npy"),
                np.array([g for _, g in log.collab_snapshots]))
    if log.traces is not None and log.traces.get("v_start"):
        grads_dir = os.path.join(run_dir, "grads")
        os.makedirs(grads_dir, exist_ok=True)
        np.save(os.path.join(grads_dir, "v_start.npy"),
                np.stack(log.traces["v_start"]))
    if noise is not None:
        np.save(os.path.join(run_dir, "noise_u.npy"), noise.u)
        np.save(os.path.join(run_dir, "noise_v.npy"), noise.v)
    if dataset is not None and log.per_sample is not None and noise is not None:
        write_per_sample(os.path.join(run_dir, "per_sample.csv"),
                         dataset, log, noise)
