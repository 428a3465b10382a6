"""Compare the compiled and pure-Python edit-distance backends.

    python3 benchmarks/bench_levenshtein.py [--pairs 2000] [--length 12]

Prints per-call timings for each operation and the speed-up.  Both
backends are also checked to give identical answers on the same inputs.
"""
import argparse
import time

import numpy as np

from inflex.kernels import compiled_backend, python_backend


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--length", type=int, default=12)
    ap.add_argument("--alphabet", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if compiled_backend is None:
        raise SystemExit("compiled backend not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(args.seed)
    lens_a = rng.integers(1, args.length + 1, size=args.pairs)
    lens_b = rng.integers(1, args.length + 1, size=args.pairs)
    A = rng.integers(args.alphabet, size=(args.pairs, args.length)).astype(np.intc)
    B = rng.integers(args.alphabet, size=(args.pairs, args.length)).astype(np.intc)
    pairs = [(A[i, :lens_a[i]].tolist(), B[i, :lens_b[i]].tolist()) for i in range(args.pairs)]
    n_cross = min(200, args.pairs)

    cases = {
        "distance": lambda be: [be.distance(a, b) for a, b in pairs],
        "alignment": lambda be: [be.alignment(a, b) for a, b in pairs],
        f"cross_distance {n_cross}x{n_cross}": lambda be: be.cross_distance(
            A[:n_cross], lens_a[:n_cross], B[:n_cross], lens_b[:n_cross]).tolist(),
    }
    print(f"{'operation':<26}{'python':>12}{'compiled':>12}{'speed-up':>10}")
    for name, fn in cases.items():
        t_py, r_py = _time(lambda: fn(python_backend), repeat=1)
        t_c, r_c = _time(lambda: fn(compiled_backend))
        if r_py != r_c:
            raise SystemExit(f"{name}: backends disagree")
        calls = n_cross * n_cross if name.startswith("cross") else args.pairs
        print(f"{name:<26}{t_py / calls * 1e6:>10.1f}us{t_c / calls * 1e6:>10.2f}us{t_py / t_c:>9.0f}x")


if __name__ == "__main__":
    main()
