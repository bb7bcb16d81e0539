"""Compare the compiled kernel backend against the numpy fallback.

Times the four hot kernels on training-shaped inputs, checks that both
backends agree numerically, then races a full training run end to end.
The two backends are not bit-identical (BLAS vs. explicit loops reorder
float accumulation), so agreement is reported as a max elementwise gap
rather than asserted as zero.

Usage: python benchmarks/bench_backends.py [--batch 128] [--repeats 200]
"""

import argparse
import time

import numpy as np

from csrlab import _kernels
from csrlab._kernels import get_backend
from csrlab.data import make_gaussian_clusters
from csrlab.model import init_model
from csrlab.noise_synth import idn_noise
from csrlab.trainer import PROB_FLOOR, TrainConfig, train

_BOUND = ("forward", "backward", "collab_ce", "softmax_backward")


def _use(impl):
    # trainer/model resolve _kernels attributes at call time, so rebinding
    # here switches every downstream consumer at once
    for fn in _BOUND:
        setattr(_kernels, fn, getattr(impl, fn))
    _kernels.backend_name = impl.name


def _kernel_inputs(batch, features, hidden, classes, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(batch, features))
    model = init_model((features, *hidden, classes), rng)
    hiddens, f = get_backend("numpy").forward(X, model.weights, model.biases)
    m_bar = np.eye(classes) + 0.05 * rng.normal(size=(classes, classes))
    s = 0.01 * rng.normal(size=(batch, classes))
    y_idx = rng.integers(0, classes, size=batch)
    g_t = rng.normal(size=(batch, classes)) / batch
    return model, X, hiddens, f, m_bar, s, y_idx, g_t


def _flat_arrays(out):
    """Kernel outputs mix arrays, scalars and lists of arrays; flatten to a
    stream of float arrays in a stable order."""
    for item in out:
        if isinstance(item, (list, tuple)):
            yield from _flat_arrays(item)
        else:
            yield np.asarray(item, dtype=np.float64).ravel()


def _time_call(fn, repeats):
    fn()  # warm once so lazy allocations land outside the clock
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(args):
    model, X, hiddens, f, m_bar, s, y_idx, g_t = _kernel_inputs(
        args.batch, args.features, tuple(args.hidden), args.classes,
        args.seed)
    impls = {name: get_backend(name) for name in ("numpy", "cython")}

    calls = {
        "forward": lambda k: k.forward(X, model.weights, model.biases),
        "collab_ce": lambda k: k.collab_ce(f, m_bar, s, y_idx, PROB_FLOOR),
        "softmax_backward": lambda k: k.softmax_backward(f, g_t),
        "backward": lambda k: k.backward(X, hiddens, model.weights, g_t),
    }
    print(f"kernel timings, batch={args.batch} features={args.features} "
          f"hidden={tuple(args.hidden)} classes={args.classes} "
          f"({args.repeats} repeats)")
    print(f"{'kernel':<18}{'numpy':>12}{'cython':>12}{'speedup':>10}"
          f"{'max |gap|':>12}")
    for name, call in calls.items():
        per = {}
        outs = {}
        for bname, impl in impls.items():
            per[bname] = _time_call(lambda: call(impl), args.repeats)
            out = call(impl)
            outs[bname] = out if isinstance(out, tuple) else (out,)
        gap = max(abs(a - b).max() if a.size else 0.0
                  for a, b in zip(_flat_arrays(outs["numpy"]),
                                  _flat_arrays(outs["cython"])))
        print(f"{name:<18}{per['numpy'] * 1e6:>10.1f}us"
              f"{per['cython'] * 1e6:>10.1f}us"
              f"{per['numpy'] / per['cython']:>9.2f}x{gap:>12.2e}")


def bench_training(args):
    train_ds, test_ds = make_gaussian_clusters(
        2000, args.classes, args.features, 4.0, 1.2, seed=args.seed)
    rec = idn_noise(train_ds.X, train_ds.y, 0.4, args.classes,
                    seed=args.seed + 1)
    noisy = train_ds.with_labels(rec.noisy)
    cfg = TrainConfig(method="csr", epochs=args.epochs, batch_size=args.batch,
                      lr_model=0.02, warmup=min(5, args.epochs // 2),
                      hidden=tuple(args.hidden), lr_u=0.2, lr_v=0.02,
                      lr_m=0.05, seed=args.seed)

    print(f"\nfull csr run, n={noisy.X.shape[0]} epochs={cfg.epochs}")
    print(f"{'backend':<10}{'wall':>10}{'epochs/s':>12}{'test acc':>12}")
    results = {}
    for bname in ("numpy", "cython"):
        _use(get_backend(bname))
        t0 = time.perf_counter()
        _, _, _, log = train(noisy, cfg, test_data=test_ds)
        wall = time.perf_counter() - t0
        acc = log.records[-1].test_acc
        results[bname] = wall
        print(f"{bname:<10}{wall:>9.2f}s{cfg.epochs / wall:>12.1f}"
              f"{acc:>12.4f}")
    print(f"end-to-end speedup: {results['numpy'] / results['cython']:.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-training", action="store_true",
                    help="only run the kernel microbenchmarks")
    args = ap.parse_args()

    prior = {fn: getattr(_kernels, fn) for fn in _BOUND}
    prior_name = _kernels.backend_name
    try:
        bench_kernels(args)
        if not args.skip_training:
            bench_training(args)
    finally:
        for fn, impl_fn in prior.items():
            setattr(_kernels, fn, impl_fn)
        _kernels.backend_name = prior_name


if __name__ == "__main__":
    main()
