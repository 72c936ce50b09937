"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 64 256 1024] [--repeat 5]

Prints the best-of-N wall time per kernel and backend, plus the speedup of the
compiled backend. Results are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from aai import _backend


def cases(L, rng):
    S = rng.normal(size=(L, L))
    M = np.triu(np.full((L, L), -np.inf), 1)
    A = np.tril(rng.random((L, L)))
    A /= A.sum(axis=1, keepdims=True)
    H = np.tril(A > 0.04)
    return {
        "masked_softmax": lambda k: k.masked_softmax(S, M),
        "causal_median": lambda k: k.causal_median(S),
        "full_median": lambda k: k.full_median(S),
        "pattern_counts": lambda k: k.pattern_counts(H),
        "weight_pattern_counts": lambda k: k.weight_pattern_counts(A, 0.04),
    }


def agree(a, b):
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=0, atol=1e-12)
    return a == b


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[64, 256, 1024])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = _backend.available()
    if len(backends) < 2:
        print("compiled extension not built; only the fallback is available")
    names = [b.NAME for b in backends]
    print(f"{'kernel':<22}{'L':>6}" + "".join(f"{n:>14}" for n in names) + ("     speedup" if len(backends) > 1 else ""))
    rng = np.random.default_rng(0)
    for L in args.sizes:
        for kernel, call in cases(L, rng).items():
            results = [call(b) for b in backends]
            if not all(agree(results[0], r) for r in results[1:]):
                raise SystemExit(f"backends disagree on {kernel} at L={L}")
            times = []
            for b in backends:
                number = max(1, int(0.05 / max(timeit.timeit(lambda: call(b), number=1), 1e-7)))
                best = min(timeit.repeat(lambda: call(b), number=number, repeat=args.repeat)) / number
                times.append(best)
            row = f"{kernel:<22}{L:>6}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times)
            if len(times) > 1:
                row += f"{times[1] / times[0]:>11.1f}x"
            print(row)


if __name__ == "__main__":
    main()
