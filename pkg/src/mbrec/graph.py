"""Symmetric-normalized bipartite adjacency and multi-layer propagation.

The adjacency stacks users on top of items: node u is row u, item i is row
M + i. Edge weights are 1/sqrt(deg(u) * deg(i)); nodes without edges have
empty rows. Layer outputs are combined with weights 1/(l + 1).
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DataError


@dataclass
class NormalizedAdjacency:
    num_rows: int
    indptr: np.ndarray  # int64, num_rows + 1
    indices: np.ndarray  # int64, sorted within each row
    data: np.ndarray  # float64 edge weights

    @property
    def nnz(self):
        return int(self.data.shape[0])

    def to_dense(self):
        out = np.zeros((self.num_rows, self.num_rows))
        for r in range(self.num_rows):
            for p in range(self.indptr[r], self.indptr[r + 1]):
                out[r, self.indices[p]] = self.data[p]
        return out


@dataclass
class PropagationTrace:
    """Per-layer embeddings E^(0..L) with their combination weights."""

    adj: NormalizedAdjacency
    layers: list
    alphas: np.ndarray


def build_adjacency(train, behaviors):
    """Adjacency over the union of edges from the given behavior subset.

    An edge is present once no matter how many selected behaviors contain
    it; degrees are computed over the unioned edge set.
    """
    behaviors = list(behaviors)
    if not behaviors:
        raise DataError("behavior subset must be non-empty")
    m, n = train.num_users, train.num_items
    indptr_ui, items_ui = train.user_item_csr(behaviors)
    users_ui = np.repeat(np.arange(m, dtype=np.int64), np.diff(indptr_ui))

    deg_u = np.diff(indptr_ui).astype(np.float64)
    deg_i = np.zeros(n, dtype=np.float64)
    np.add.at(deg_i, items_ui, 1.0)

    rows = np.concatenate([users_ui, m + items_ui])
    cols = np.concatenate([m + items_ui, users_ui])
    vals = 1.0 / np.sqrt(deg_u[users_ui] * deg_i[items_ui])
    vals = np.concatenate([vals, vals])

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(m + n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return NormalizedAdjacency(num_rows=m + n, indptr=indptr, indices=cols, data=vals)


def propagate(adj, e0, layers):
    """Repeatedly smooth embeddings over the graph and combine the layers.

    Returns the combined embedding sum_l E^(l) / (l + 1) together with a
    trace of the per-layer embeddings for the backward pass.
    """
    if layers < 0:
        raise DataError("layer count must be >= 0")
    if e0.shape[0] != adj.num_rows:
        raise DataError(f"embedding rows {e0.shape[0]} != adjacency rows {adj.num_rows}")
    alphas = 1.0 / (1.0 + np.arange(layers + 1))
    stored = [e0]
    out = e0.copy()
    cur = e0
    for l in range(1, layers + 1):
        cur = backend.spmm(adj.indptr, adj.indices, adj.data, cur)
        stored.append(cur)
        out += cur * alphas[l]
    return out, PropagationTrace(adj=adj, layers=stored, alphas=alphas)


def propagate_backward(adj, trace, grad_out):
    """Gradient of ``propagate``'s output with respect to its input.

    The adjacency is symmetric, so the adjoint applies the same layer
    combination to the incoming gradient.
    """
    if trace.adj is not adj:
        raise DataError("trace does not belong to this adjacency")
    if grad_out.shape != trace.layers[0].shape:
        raise DataError("gradient shape does not match the forward pass")
    layers = len(trace.layers) - 1
    out = grad_out.copy()
    cur = grad_out
    for l in range(1, layers + 1):
        cur = backend.spmm(adj.indptr, adj.indices, adj.data, cur)
        out += cur * trace.alphas[l]
    return out
