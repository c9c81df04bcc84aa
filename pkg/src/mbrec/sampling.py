"""Deterministic positive streams and uniform negative sampling.

All randomness flows through the caller-supplied generator, so a fixed
seed fixes every batch exactly. Negatives are drawn uniformly from the
items a user has NOT interacted with under the relevant behavior, via
rejection sampling with a bounded number of retry rounds and an exact
complement fallback for very dense users.
"""

import logging

import numpy as np

from . import backend

log = logging.getLogger(__name__)


class NegativeSampler:
    """Uniform negatives against one user->item CSR membership structure."""

    def __init__(self, indptr, indices, num_items, resample_cap=100):
        self.indptr = indptr
        self.indices = indices
        self.num_items = num_items
        self.resample_cap = resample_cap
        self._warned = False

    def sample(self, rng, users, k):
        """k negatives per user. Returns ((n, k) items, (n,) valid mask).

        Rows for users who have interacted with every item cannot be
        filled and come back invalid (once-per-sampler warning).
        """
        n = len(users) * k
        rows = np.repeat(users, k)
        cand = rng.integers(0, self.num_items, size=n)
        bad = backend.row_members(self.indptr, self.indices, rows, cand)
        rounds = 0
        while bad.any() and rounds < self.resample_cap:
            rounds += 1
            idx = np.nonzero(bad)[0]
            cand[idx] = rng.integers(0, self.num_items, size=len(idx))
            bad[idx] = backend.row_members(self.indptr, self.indices, rows[idx], cand[idx])
        valid = np.ones(len(users), dtype=bool)
        if bad.any():
            for pos in np.nonzero(bad)[0]:
                u = rows[pos]
                have = self.indices[self.indptr[u]:self.indptr[u + 1]]
                pool = np.setdiff1d(np.arange(self.num_items, dtype=np.int64), have)
                if len(pool) == 0:
                    valid[pos // k] = False
                    if not self._warned:
                        log.warning("user %d has no negative items; dropping examples", u)
                        self._warned = True
                else:
                    cand[pos] = pool[rng.integers(0, len(pool))]
        return cand.reshape(len(users), k), valid


def bce_positives(data, include_aux=True):
    """(users, items, behaviors) for every training positive, behavior-major.

    With include_aux False only the target behavior contributes.
    """
    ks = range(data.registry.count) if include_aux else [data.registry.target]
    users = np.concatenate([data.users[b] for b in ks])
    items = np.concatenate([data.items[b] for b in ks])
    behaviors = np.concatenate(
        [np.full(len(data.users[b]), b, dtype=np.int64) for b in ks]
    )
    return users, items, behaviors


def target_positives(data):
    b = data.registry.target
    return data.users[b].copy(), data.items[b].copy()


class CyclingPairStream:
    """Per-epoch shuffled (user, item) pairs, cycling inside the epoch.

    take(n) may wrap around the epoch's permutation when the underlying
    pair list is shorter than the demand; the permutation and cursor reset
    at every start_epoch, so epoch boundaries carry no sampler state.
    """

    def __init__(self, users, items):
        if len(users) == 0:
            raise ValueError("pair stream needs at least one pair")
        self.users = users
        self.items = items
        self._perm = None
        self._cursor = 0

    def start_epoch(self, rng):
        self._perm = rng.permutation(len(self.users))
        self._cursor = 0

    def take(self, n):
        if self._perm is None:
            raise RuntimeError("start_epoch must be called first")
        picks = np.empty(n, dtype=np.int64)
        got = 0
        while got < n:
            run = min(n - got, len(self._perm) - self._cursor)
            picks[got:got + run] = self._perm[self._cursor:self._cursor + run]
            got += run
            self._cursor += run
            if self._cursor == len(self._perm):
                self._cursor = 0
        return self.users[picks], self.items[picks]


def epoch_batches(rng, count, batch_size):
    """Yield shuffled index chunks covering range(count) once."""
    perm = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield perm[start:start + batch_size]
