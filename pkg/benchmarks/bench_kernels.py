"""Compare the compiled and pure-numpy kernel paths on realistic shapes.

Run directly:  python benchmarks/bench_kernels.py [--repeat 5]

The compiled path is exercised only when numba is importable; a warmup call
per kernel excludes JIT compilation from the timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from denseval import kernels


def _time(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lcs(repeat: int, rng: np.random.Generator) -> list[tuple[str, float]]:
    pairs = [
        (
            rng.integers(0, 4000, size=180).astype(np.int32),
            rng.integers(0, 4000, size=40).astype(np.int32),
        )
        for _ in range(200)
    ]

    def run(fn):
        return lambda: [fn(a, b) for a, b in pairs]

    rows = [("numpy", _time(run(kernels.lcs_length_numpy), repeat=repeat))]
    if kernels.HAVE_NUMBA:
        kernels.lcs_length_numba(pairs[0][0], pairs[0][1])  # warmup
        rows.append(("numba", _time(run(kernels.lcs_length_numba), repeat=repeat)))
    return rows


def bench_dot(repeat: int, rng: np.random.Generator) -> list[tuple[str, float]]:
    matrix = rng.standard_normal((3000, 768)).astype(np.float32)
    queries = rng.standard_normal((400, 768)).astype(np.float32)

    def run(fn):
        return lambda: [fn(matrix, q) for q in queries]

    rows = [("numpy", _time(run(kernels.dot_scores_numpy), repeat=repeat))]
    if kernels.HAVE_NUMBA:
        kernels.dot_scores_numba(matrix, queries[0])  # warmup
        rows.append(("numba", _time(run(kernels.dot_scores_numba), repeat=repeat)))
    return rows


def bench_bm25(repeat: int, rng: np.random.Generator) -> list[tuple[str, float]]:
    n_docs, n_entries, n_queries = 3000, 20000, 400
    norm = (1.5 * (0.25 + 0.75 * rng.uniform(0.3, 3.0, size=n_docs))).astype(np.float64)
    batches = []
    for _ in range(n_queries):
        doc_idx = rng.integers(0, n_docs, size=n_entries).astype(np.int32)
        tf = rng.integers(1, 6, size=n_entries).astype(np.float64)
        idf = rng.uniform(0.1, 8.0, size=n_entries).astype(np.float64)
        batches.append((doc_idx, tf, idf))

    def run(fn):
        return lambda: [fn(d, t, i, norm, n_docs, 1.5) for d, t, i in batches]

    rows = [("numpy", _time(run(kernels.bm25_accumulate_numpy), repeat=repeat))]
    if kernels.HAVE_NUMBA:
        d, t, i = batches[0]
        kernels.bm25_accumulate_numba(d, t, i, norm, n_docs, 1.5)  # warmup
        rows.append(("numba", _time(run(kernels.bm25_accumulate_numba), repeat=repeat)))
    return rows


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5, help="best-of-N timing")
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"active backend: {kernels.backend_name()} (numba available: {kernels.HAVE_NUMBA})")
    print(f"{'kernel':<18}{'path':<8}{'best of ' + str(args.repeat):>14}")
    for name, bench in (
        ("lcs_length", bench_lcs),
        ("dot_scores", bench_dot),
        ("bm25_accumulate", bench_bm25),
    ):
        for path, seconds in bench(args.repeat, rng):
            print(f"{name:<18}{path:<8}{seconds * 1000:>11.1f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
