"""Numba-compiled twins of the kernels in ``_np_kernels``.

Each kernel keeps a fixed per-row accumulation order, so results do not
depend on thread count and match the numpy backend to float roundoff.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def spmm(indptr, indices, data, x):
    n_rows = indptr.shape[0] - 1
    d = x.shape[1]
    out = np.zeros((n_rows, d), dtype=x.dtype)
    for r in range(n_rows):
        for p in range(indptr[r], indptr[r + 1]):
            c = indices[p]
            w = data[p]
            for k in range(d):
                out[r, k] += w * x[c, k]
    return out


@njit(cache=True)
def scatter_add_rows(out, rows, vals):
    d = out.shape[1]
    for k in range(rows.shape[0]):
        r = rows[k]
        for j in range(d):
            out[r, j] += vals[k, j]


@njit(cache=True)
def row_members(indptr, indices, rows, queries):
    n = rows.shape[0]
    found = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        lo = indptr[rows[k]]
        hi = indptr[rows[k] + 1]
        q = queries[k]
        while lo < hi:
            mid = (lo + hi) // 2
            v = indices[mid]
            if v == q:
                found[k] = True
                break
            elif v < q:
                lo = mid + 1
            else:
                hi = mid
    return found


@njit(cache=True)
def adam_update_rows(param, m, v, rows, grad, lr, beta1, beta2, eps, bc1, bc2):
    d = param.shape[1]
    for k in range(rows.shape[0]):
        r = rows[k]
        for j in range(d):
            g = grad[k, j]
            m[r, j] = beta1 * m[r, j] + (1.0 - beta1) * g
            v[r, j] = beta2 * v[r, j] + (1.0 - beta2) * g * g
            m_hat = m[r, j] / bc1
            v_hat = v[r, j] / bc2
            param[r, j] -= lr * m_hat / (np.sqrt(v_hat) + eps)


@njit(cache=True)
def rank_of_target(scores, excluded_sorted, target):
    t = scores[target]
    higher = 0
    ties = 0
    p = 0
    n_excl = excluded_sorted.shape[0]
    for j in range(scores.shape[0]):
        if p < n_excl and excluded_sorted[p] == j:
            p += 1
            continue
        if j == target:
            continue
        if scores[j] > t:
            higher += 1
        elif scores[j] == t:
            ties += 1
    return 1 + higher + ties
