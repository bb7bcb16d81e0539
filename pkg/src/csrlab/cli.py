"""Command-line harness: data synthesis, corruption, training, diagnostics.

Subcommands: gen-data, corrupt, train, diagnose, select, lag-exp, report.
Run failures exit 1 with a diagnostic; bad usage exits 2 via argparse.
"""

import argparse
import os
import sys
from collections import defaultdict

import numpy as np

from . import runio
from .csr_plus import train_plus
from .data import Dataset, load_csv, make_gaussian_clusters, save_csv
from .diagnostics import (grad_proportion, incoordination, lag_experiment,
                          noise_fitting_rate)
from .errors import ContractViolation, CsvFormatError, TrainingDiverged
from .noise_synth import idn_noise, symmetric_noise
from .selection import gmm_fit, joint_partition, posterior_clean
from .trainer import GRAD_GROUPS, TrainConfig, train


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="synthesize a Gaussian-cluster dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--features", type=int, default=20)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--within-std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def _add_corrupt(sub):
    p = sub.add_parser("corrupt", help="inject label noise into a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", choices=("symmetric", "idn"), default="idn")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record", default=None,
                   help="sidecar CSV path (default <out>.record.csv)")


def _add_train(sub):
    p = sub.add_parser("train", help="train one method on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--test-data", default=None)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--method", choices=("plain-ce", "sop", "csr", "csr-plus"),
                   default="csr")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config entry (repeatable)")
    p.add_argument("--classes", type=int, default=None,
                   help="class count when the CSV does not show every class")
    p.add_argument("--save-traces", action="store_true",
                   help="dump per-epoch v snapshots for lag-exp")


def _add_diagnose(sub):
    p = sub.add_parser("diagnose", help="derive analysis CSVs from a run")
    p.add_argument("--run-dir", required=True)


def _add_select(sub):
    p = sub.add_parser("select", help="partition a finished run's samples")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--out", default=None,
                   help="output CSV (default <run-dir>/selection.csv)")


def _add_lag(sub):
    p = sub.add_parser("lag-exp", help="replay a run with delayed v")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--shifts", default="0,5,10,20")
    p.add_argument("--out", default=None,
                   help="output CSV (default <run-dir>/lag.csv)")


def _add_report(sub):
    p = sub.add_parser("report", help="aggregate runs into a method table")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run directories to aggregate")
    p.add_argument("--out", default=None, help="optional CSV output path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="csrlab",
        description="noisy-label training with sparse per-sample noise "
                    "recovery, on synthetic vector data")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_gen_data, _add_corrupt, _add_train, _add_diagnose,
                _add_select, _add_lag, _add_report):
        add(sub)
    return parser


def _cmd_gen_data(args):
    train_ds, test_ds = make_gaussian_clusters(
        args.samples, args.classes, args.features, args.separation,
        args.within_std, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.csv")
    test_path = os.path.join(args.out_dir, "test.csv")
    save_csv(train_ds, train_path)
    save_csv(test_ds, test_path)
    print(f"wrote {train_ds.n_samples} train rows to {train_path}")
    print(f"wrote {test_ds.n_samples} test rows to {test_path}")
    return 0


def _cmd_corrupt(args):
    ds = load_csv(args.data)
    if args.noise == "symmetric":
        record = symmetric_noise(ds.y, args.rate, ds.n_classes, args.seed)
    else:
        record = idn_noise(ds.X, ds.y, args.rate, ds.n_classes, args.seed)
    out_ds = Dataset(ds.X, record.noisy, ds.n_classes, record.clean, ds.split)
    save_csv(out_ds, args.out)
    record_path = args.record or args.out + ".record.csv"
    with open(record_path, "w") as fh:
        fh.write("index,clean,noisy,flipped\n")
        for i in range(ds.n_samples):
            fh.write(f"{i},{record.clean[i]},{record.noisy[i]},"
                     f"{int(i in record.mislabeled)}\n")
    print(f"corrupted {len(record.mislabeled)}/{ds.n_samples} labels "
          f"(achieved rate {record.rate_achieved:.4f}, target {args.rate})")
    return 0


def _build_config(args):
    items = {}
    if args.config:
        items.update(runio.read_config(args.config))
    for entry in args.set:
        if "=" not in entry:
            raise ContractViolation(f"--set expects KEY=VALUE, got {entry!r}")
        key, _, value = entry.partition("=")
        if key not in runio.CONFIG_KEYS:
            raise ContractViolation(f"unknown config key {key!r}")
        items[key] = value
    cfg = runio.config_from_items(items)
    if args.method is not None:
        cfg.method = args.method
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.save_traces:
        cfg.save_traces = True
    return cfg


def _cmd_train(args):
    train_ds = load_csv(args.data, n_classes=args.classes)
    test_ds = (load_csv(args.test_data, n_classes=train_ds.n_classes)
               if args.test_data else None)
    cfg = _build_config(args)
    resolved = cfg.resolved(train_ds.n_classes)
    if resolved.method == "csr-plus":
        model, log = train_plus(train_ds, resolved, test_data=test_ds)
        from .sparse_noise import zero_noise
        noise = zero_noise(train_ds.n_samples, train_ds.n_classes)
    else:
        model, noise, collab, log = train(train_ds, resolved, test_data=test_ds)
    extra = {
        "data": os.path.abspath(args.data),
        "test_data": os.path.abspath(args.test_data) if args.test_data else "",
        "n_classes": train_ds.n_classes,
    }
    runio.write_run(args.run_dir, resolved, log, dataset=train_ds,
                    noise=noise, extra_config=extra)
    print(f"{resolved.method}: final test acc "
          f"{log.summary['final_test_acc']:.4f}, "
          f"train loss {log.summary['final_train_loss']:.4f} "
          f"-> {args.run_dir}")
    return 0


def _cmd_diagnose(args):
    metrics = runio.read_metrics(os.path.join(args.run_dir, "metrics.csv"))
    epochs = metrics["epoch"]
    series = {}
    for group in GRAD_GROUPS:
        z = metrics[f"grad_{group}"]
        series[group] = grad_proportion(z) if z.sum() > 0 else None
    pairs = []
    for a, b in (("theta", "u"), ("theta", "v"), ("theta", "m"), ("u", "v")):
        if series[a] is not None and series[b] is not None:
            pairs.append((f"{a}-{b}", incoordination(series[a], series[b])))
    with open(os.path.join(args.run_dir, "incoordination.csv"), "w") as fh:
        fh.write("pair,incoordination\n")
        for name, value in pairs:
            fh.write(f"{name},{value!r}\n")
    runio.write_series_csv(os.path.join(args.run_dir, "nfr.csv"),
                           ["epoch", "nfr"],
                           [[int(e) for e in epochs], list(metrics["nfr"])])
    runio.write_series_csv(
        os.path.join(args.run_dir, "selection_pr.csv"),
        ["epoch", "loss_precision", "loss_recall", "u_precision", "u_recall",
         "joint_precision", "joint_recall"],
        [[int(e) for e in epochs],
         list(metrics["sel_loss_prec"]), list(metrics["sel_loss_rec"]),
         list(metrics["sel_u_prec"]), list(metrics["sel_u_rec"]),
         list(metrics["sel_joint_prec"]), list(metrics["sel_joint_rec"])])
    for name, value in pairs:
        print(f"incoordination {name}: {value:.4f}")
    print(f"wrote incoordination.csv, nfr.csv, selection_pr.csv in {args.run_dir}")
    return 0


def _cmd_select(args):
    path = os.path.join(args.run_dir, "per_sample.csv")
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    col = {name: k for k, name in enumerate(header)}
    rows = [line.split(",") for line in lines[1:]]
    losses = np.array([float(r[col["loss"]]) for r in rows])
    u_sq = np.array([float(r[col["u_sq"]]) for r in rows])
    n = losses.size
    loss_fit = gmm_fit(losses) if np.ptp(losses) > 0 else None
    u_fit = gmm_fit(u_sq) if np.ptp(u_sq) > 0 else None
    loss_post = (posterior_clean(loss_fit, losses) if loss_fit is not None
                 else np.ones(n))
    u_post = posterior_clean(u_fit, u_sq) if u_fit is not None else np.ones(n)
    s_loss = set(np.nonzero(loss_post > args.sigma)[0].tolist())
    s_u = set(np.nonzero(u_post > args.sigma)[0].tolist())
    part = joint_partition(s_loss, s_u, set(range(n)))
    subset = np.empty(n, dtype=object)
    for name, members in (("clean", part.clean), ("hard", part.hard),
                          ("noisy", part.noisy)):
        for i in members:
            subset[i] = name
    out = args.out or os.path.join(args.run_dir, "selection.csv")
    with open(out, "w") as fh:
        fh.write("index,loss_posterior,u_posterior,subset\n")
        for i in range(n):
            fh.write(f"{i},{float(loss_post[i])!r},{float(u_post[i])!r},"
                     f"{subset[i]}\n")
    print(f"clean {len(part.clean)}, hard {len(part.hard)}, "
          f"noisy {len(part.noisy)} -> {out}")
    return 0


def _cmd_lag(args):
    shifts = [int(tok) for tok in args.shifts.split(",") if tok]
    points = lag_experiment(args.run_dir, shifts)
    out = args.out or os.path.join(args.run_dir, "lag.csv")
    runio.write_series_csv(out, ["shift", "incoordination", "test_error"],
                           [[p.shift for p in points],
                            [p.incoordination for p in points],
                            [p.test_error for p in points]])
    for p in points:
        print(f"shift {p.shift}: incoordination {p.incoordination:.4f}, "
              f"test error {p.test_error:.4f}")
    if len(points) > 1:
        from scipy.stats import spearmanr
        rho = spearmanr([p.incoordination for p in points],
                        [p.test_error for p in points]).statistic
        print(f"spearman(incoordination, test_error) = {rho:.3f}")
    print(f"wrote {out}")
    return 0


def _cmd_report(args):
    by_method = defaultdict(list)
    for run_dir in args.runs:
        summary = runio.read_summary(os.path.join(run_dir, "summary.json"))
        by_method[summary["method"]].append(summary)
    lines = []
    for method in sorted(by_method):
        accs = np.array([s["final_test_acc"] for s in by_method[method]])
        nfrs = np.array([s.get("final_nfr", float("nan"))
                         for s in by_method[method]])
        lines.append((method, accs.size, accs.mean(), accs.std(),
                      float(np.nanmean(nfrs))))
    width = max(len(m) for m, *_ in lines)
    print(f"{'method':<{width}}  runs  test_acc (mean +/- std)   nfr")
    for method, count, mean, std, nfr in lines:
        print(f"{method:<{width}}  {count:>4}  {mean:.4f} +/- {std:.4f}      "
              f"{nfr:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("method,runs,test_acc_mean,test_acc_std,nfr_mean\n")
            for method, count, mean, std, nfr in lines:
                fh.write(f"{method},{count},{mean!r},{std!r},{nfr!r}\n")
        print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "corrupt": _cmd_corrupt,
    "train": _cmd_train,
    "diagnose": _cmd_diagnose,
    "select": _cmd_select,
    "lag-exp": _cmd_lag,
    "report": _cmd_report,
}


def cli_main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ContractViolation, CsvFormatError, TrainingDiverged, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
