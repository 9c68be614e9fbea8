"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 50 100 200] [--repeat 3]

Both backends solve the same problems; the script checks that their
objective values agree before reporting timings.
"""
import argparse
import time

import numpy as np

from emergelab import _kernels


def _transport_case(rng, n):
    a = rng.random(n) + 0.01
    b = rng.random(n) + 0.01
    X, Y = rng.random((n, 2)), rng.random((n, 2))
    C = np.minimum(np.linalg.norm(X[:, None] - Y[None], axis=-1), 2.0)
    return a / a.sum(), b / b.sum(), C


def _swap_case(rng, n, k=8):
    X = rng.random((n, 2))
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    w = np.full(n, 1.0 / n)
    centers = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
    return D, w, centers


def _best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = _kernels.BACKENDS
    if "cython" not in backends:
        print("compiled extension not built; only the Python fallback is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<10} {'size':>6} " + " ".join(f"{name:>12}" for name in sorted(backends)) + "   speedup")
    for n in args.sizes:
        a, b, C = _transport_case(rng, n)
        D, w, centers = _swap_case(rng, n)
        for kernel, call in (
            ("transport", lambda impl: impl.transport(a, b, C)[0]),
            ("best_swap", lambda impl: impl.best_swap(D, w, centers)[0]),
        ):
            times, values = {}, {}
            for name in sorted(backends):
                times[name], values[name] = _best_time(lambda: call(backends[name]), args.repeat)
            vals = list(values.values())
            if not all(abs(v - vals[0]) <= 1e-9 for v in vals):
                raise SystemExit(f"backends disagree on {kernel} n={n}: {values}")
            speed = (f"{times['python'] / times['cython']:8.1f}x"
                     if "cython" in times and times["cython"] > 0 else "       -")
            print(f"{kernel:<10} {n:>6} " + " ".join(f"{times[k]:>11.4f}s" for k in sorted(times)) + "  " + speed)


if __name__ == "__main__":
    main()
