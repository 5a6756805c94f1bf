"""Time the numba and numpy loss kernels, plus one training run per backend.

    python3 benchmarks/bench_kernels.py [--rows 80] [--bins 101] [--repeat 200]

The numba timings exclude compilation (one warm-up call per kernel).
"""

import argparse
import time

import numpy as np

from dcloss import experiments
from dcloss.kernels import NUMBA_KERNELS, NUMPY_KERNELS
from dcloss.losses import LossSpec
from dcloss.model import train


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_calls(kernels, Z, Q, labels):
    P = kernels["softmax"](Z)
    return {
        "softmax": lambda: kernels["softmax"](Z),
        "dc": lambda: kernels["dc"](P, Q, 0.01),
        "kl": lambda: kernels["kl"](P, Q),
        "ce": lambda: kernels["ce"](Z, P, labels),
        "ce_mv": lambda: kernels["ce_mv"](Z, P, labels, 0.2, 0.05),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=80)
    ap.add_argument("--bins", type=int, default=101)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    Z = rng.normal(size=(args.rows, args.bins))
    Q = rng.dirichlet(np.ones(args.bins), size=args.rows)
    labels = rng.integers(1, args.bins + 1, size=args.rows)

    nb = kernel_calls(NUMBA_KERNELS, Z, Q, labels)
    npy = kernel_calls(NUMPY_KERNELS, Z, Q, labels)
    print(f"kernels on ({args.rows}, {args.bins}), best of {args.repeat}")
    print(f"{'kernel':<8} {'numpy us':>10} {'numba us':>10} {'speedup':>8}")
    for name in nb:
        a = best_of(npy[name], args.repeat) * 1e6
        b = best_of(nb[name], args.repeat) * 1e6
        print(f"{name:<8} {a:10.1f} {b:10.1f} {a / b:8.2f}")

    if args.skip_train:
        return
    task = experiments.default_task(0)
    cfg = experiments.task_config(LossSpec("dc"), 0)
    print("\ndefault task, DC loss, one full training run")
    for backend in ("numpy", "numba"):
        train(task.train, cfg, backend=backend)
        t0 = time.perf_counter()
        train(task.train, cfg, backend=backend)
        print(f"{backend:<8} {time.perf_counter() - t0:8.3f} s")


if __name__ == "__main__":
    main()
