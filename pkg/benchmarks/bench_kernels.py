"""Compare the compiled and pure-Python kernels on the two hot loops.

    python benchmarks/bench_kernels.py [--k 5000] [--experiments 2000] [--repeat 3]

Both backends are run on identical inputs; outputs are checked for bitwise
equality before timings are reported.
"""
import argparse
import time

import numpy as np

from seqlab import BetaBernoulli, DiscoveryCriterion, NormalKnownVariance, acceptance_series, heuristic_series
from seqlab import _fallback

try:
    from seqlab import _kernels
except ImportError:
    _kernels = None


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(x, y):
    if isinstance(x, tuple):
        return all(_same(a, b) for a, b in zip(x, y))
    if x is None or np.isscalar(x):
        return x == y
    return np.array_equal(x, y, equal_nan=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--k", type=int, default=5000)
    ap.add_argument("--experiments", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    model, crit = BetaBernoulli(45.0, 130.0), DiscoveryCriterion(0.27, 0.05)
    acc = acceptance_series(model, crit, args.k)
    rej = heuristic_series(model, crit, args.k)
    effects = np.random.default_rng(0).beta(45.0, 130.0, args.experiments)
    nm, ncrit = NormalKnownVariance(0.0, 1.0, 1.0), DiscoveryCriterion(0.5, 0.05)
    nacc = acceptance_series(nm, ncrit, 1000)
    nrej = np.concatenate(([-np.inf], np.arange(1, 1001) * 0.3 - 3.0))
    neff = np.random.default_rng(1).normal(0.0, 1.0, args.experiments)

    cases = {
        f"bb_induction k={args.k}": lambda m: m.bb_induction(model.a, model.b, args.k, acc, 900.0, False),
        f"simulate bernoulli x{args.experiments}": lambda m: m.run_experiments(
            effects, acc, rej, args.k, True, 0.0, m.make_source(np.random.PCG64(7)), 10**9),
        f"simulate normal x{args.experiments}": lambda m: m.run_experiments(
            neff, nacc, nrej, 1000, False, 1.0, m.make_source(np.random.PCG64(7)), 10**9),
    }
    backends = [("python", _fallback)] + ([("cython", _kernels)] if _kernels is not None else [])
    print(f"{'kernel':36s}" + "".join(f"{name:>12s}" for name, _ in backends) + ("     speedup" if len(backends) == 2 else ""))
    for label, fn in cases.items():
        times, outs = [], []
        for _, mod in backends:
            t, out = _best(lambda: fn(mod), args.repeat)
            times.append(t)
            outs.append(out)
        if len(outs) == 2 and not _same(outs[0], outs[1]):
            raise SystemExit(f"backends disagree on {label}")
        row = f"{label:36s}" + "".join(f"{t:11.4f}s" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)
    if _kernels is None:
        print("compiled extension not built; only the Python backend was timed")


if __name__ == "__main__":
    main()
