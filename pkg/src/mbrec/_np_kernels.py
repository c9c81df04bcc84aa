"""Pure-numpy implementations of the hot kernels.

Reference backend: every function here must produce the same results as its
numba twin in ``_nb_kernels`` (exactly for integer kernels, to float roundoff
for the floating-point ones, since summation order differs).
"""

import numpy as np


def spmm(indptr, indices, data, x):
    """CSR matrix times dense matrix: rows are summed segments of nnz terms."""
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, x.shape[1]), dtype=x.dtype)
    if data.shape[0] == 0:
        return out
    contrib = data[:, None] * x[indices]
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    # reduceat segments run from each listed start to the next one; empty
    # rows are skipped so their zero rows are left untouched.
    out[nonempty] = np.add.reduceat(contrib, starts[nonempty], axis=0)
    return out


def scatter_add_rows(out, rows, vals):
    """out[rows[k]] += vals[k], applied in index order (duplicates allowed)."""
    np.add.at(out, rows, vals)


def row_members(indptr, indices, rows, queries):
    """For each k, whether queries[k] occurs in the sorted CSR row rows[k]."""
    lo = indptr[rows].astype(np.int64, copy=True)
    hi = indptr[rows + 1].astype(np.int64, copy=True)
    found = np.zeros(rows.shape[0], dtype=np.bool_)
    active = lo < hi
    while np.any(active):
        mid = (lo + hi) // 2
        vals = np.zeros_like(mid)
        vals[active] = indices[mid[active]]
        hit = active & (vals == queries)
        found |= hit
        go_right = active & (vals < queries)
        go_left = active & (vals > queries)
        lo[go_right] = mid[go_right] + 1
        hi[go_left] = mid[go_left]
        active = ~found & (lo < hi)
    return found


def adam_update_rows(param, m, v, rows, grad, lr, beta1, beta2, eps, bc1, bc2):
    """One Adam update restricted to the given (unique) rows.

    bc1/bc2 are the bias-correction denominators 1 - beta^t for the shared
    step counter.
    """
    m[rows] = beta1 * m[rows] + (1.0 - beta1) * grad
    v[rows] = beta2 * v[rows] + (1.0 - beta2) * grad * grad
    m_hat = m[rows] / bc1
    v_hat = v[rows] / bc2
    param[rows] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def rank_of_target(scores, excluded_sorted, target):
    """1-based rank of scores[target] among non-excluded items.

    Ties with the target count as ranked above it. ``excluded_sorted`` must
    be sorted, unique and must not contain ``target``.
    """
    keep = np.ones(scores.shape[0], dtype=np.bool_)
    keep[excluded_sorted] = False
    keep[target] = False
    others = scores[keep]
    t = scores[target]
    return int(1 + np.count_nonzero(others > t) + np.count_nonzero(others == t))
