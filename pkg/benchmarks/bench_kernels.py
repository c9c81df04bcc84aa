"""Kernel micro-benchmarks: numba backend vs the numpy fallback.

Times each hot kernel on a few shapes with both implementations and
prints a speedup table. The numba run includes a warm-up call so compile
time (cached on disk) never lands in a measurement.

    python benchmarks/bench_kernels.py [--repeats 7] [--scale 1.0]
"""
import argparse
import time

import numpy as np

from mbrec import backend


def random_csr(rng, rows, cols, nnz_per_row):
    """Symmetric-free random CSR with sorted, unique columns per row."""
    indptr = np.zeros(rows + 1, dtype=np.int64)
    chunks = []
    for r in range(rows):
        k = int(rng.integers(1, nnz_per_row + 1))
        chunks.append(np.unique(rng.integers(0, cols, size=k)))
        indptr[r + 1] = indptr[r] + len(chunks[-1])
    indices = np.concatenate(chunks)
    data = rng.random(len(indices))
    return indptr, indices, data


def bench(fn, repeats):
    """Median wall time in milliseconds over `repeats` runs."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def case_spmm(rng, scale):
    rows = int(20000 * scale)
    indptr, indices, data = random_csr(rng, rows, rows, 24)
    x = rng.random((rows, 64))
    label = f"spmm {rows}x{rows} nnz={len(indices)} d=64"
    return label, lambda: backend.spmm(indptr, indices, data, x)


def case_scatter_add(rng, scale):
    rows_n = int(200000 * scale)
    out_rows = int(20000 * scale)
    rows = rng.integers(0, out_rows, size=rows_n)
    vals = rng.random((rows_n, 64))
    out = np.zeros((out_rows, 64))
    label = f"scatter_add_rows {rows_n} rows d=64"

    def run():
        out[...] = 0.0
        backend.scatter_add_rows(out, rows, vals)

    return label, run


def case_row_members(rng, scale):
    users = int(5000 * scale)
    indptr, indices, _ = random_csr(rng, users, int(40000 * scale), 60)
    n = int(400000 * scale)
    rows = rng.integers(0, users, size=n)
    queries = rng.integers(0, int(40000 * scale), size=n)
    label = f"row_members {n} lookups"
    return label, lambda: backend.row_members(indptr, indices, rows, queries)


def case_adam(rng, scale):
    rows_total = int(50000 * scale)
    touched = int(20000 * scale)
    param = rng.random((rows_total, 64))
    m = np.zeros_like(param)
    v = np.zeros_like(param)
    rows = np.unique(rng.integers(0, rows_total, size=touched))
    grad = rng.random((len(rows), 64))  # compacted: grad[k] belongs to rows[k]
    label = f"adam_update_rows {len(rows)}/{rows_total} rows d=64"
    return label, lambda: backend.adam_update_rows(
        param, m, v, rows, grad, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)


def case_rank(rng, scale):
    n = int(2000000 * scale)
    scores = rng.random(n)
    excluded = np.unique(rng.integers(0, n, size=200))
    target = int(rng.integers(0, n))
    label = f"rank_of_target over {n} scores"
    return label, lambda: backend.rank_of_target(scores, excluded, target)


CASES = (case_spmm, case_scatter_add, case_row_members, case_adam, case_rank)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--scale", type=float, default=1.0,
                        help="shrink or grow every problem size")
    args = parser.parse_args()

    header = f"{'kernel / shape':48s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for case in CASES:
        results = {}
        label = None
        for name in ("numpy", "numba"):
            rng = np.random.default_rng(0)  # identical inputs per backend
            try:
                with backend.use_backend(name):
                    label, fn = case(rng, args.scale)
                    fn()  # warm-up: numba compile/cache load
                    results[name] = bench(fn, args.repeats)
            except RuntimeError as exc:
                print(f"{label or case.__name__:48s} {name} unavailable: {exc}")
                results[name] = None
        if results["numpy"] and results["numba"]:
            ratio = results["numpy"] / results["numba"]
            print(f"{label:48s} {results['numpy']:10.2f} "
                  f"{results['numba']:10.2f} {ratio:7.1f}x")


if __name__ == "__main__":
    main()
