"""Leave-one-out ranking metrics.

Each test user has one held-out target-behavior item. The model scores
candidate items (all items minus the user's target-behavior training
positives, or a sampled candidate set), the held-out item's rank is
taken pessimistically among ties, and hit rate / NDCG are averaged over
users at each cutoff. NDCG for a single relevant item at rank r is
1 / log2(r + 1).
"""

import json
from dataclasses import dataclass

import numpy as np

from . import backend, fusion, prefnet
from .errors import DataError


@dataclass
class EvalReport:
    cutoffs: list
    hr: dict  # cutoff -> hit rate
    ndcg: dict
    users_evaluated: int
    per_user_rank: dict = None  # user -> rank, present when requested

    def to_json(self):
        payload = {
            "cutoffs": list(self.cutoffs),
            "hr": {str(c): self.hr[c] for c in self.cutoffs},
            "ndcg": {str(c): self.ndcg[c] for c in self.cutoffs},
            "users_evaluated": self.users_evaluated,
        }
        if self.per_user_rank is not None:
            payload["per_user_rank"] = {
                str(u): int(r) for u, r in sorted(self.per_user_rank.items())}
        return json.dumps(payload, sort_keys=True, indent=2)


def hr_at_k(rank, k):
    return 1.0 if rank <= k else 0.0


def ndcg_at_k(rank, k):
    return float(1.0 / np.log2(rank + 1.0)) if rank <= k else 0.0


def _candidate_items(rng, num_items, own, target, count):
    """Distinct random non-interacted items (never the target itself)."""
    blocked = np.union1d(own, [target])
    pool = np.setdiff1d(np.arange(num_items, dtype=np.int64), blocked)
    if len(pool) <= count:
        return pool
    return pool[rng.permutation(len(pool))[:count]]


def evaluate(e, eh, net, train, test, cfg, cutoffs, with_ranks=False,
             num_candidates=0):
    """Rank every held-out pair under the blended scorer.

    e / eh are the propagated and enhanced tables (eh may be None when
    enhancement is off); net scores the aggregation route. test maps
    user -> held-out item.
    """
    if not test:
        raise DataError("no users to evaluate")
    cutoffs = sorted(int(c) for c in cutoffs)
    m, n = train.num_users, train.num_items
    tb = train.registry.target
    policy = fusion.LambdaPolicy.parse(cfg.blend)
    counts = train.user_target_count
    indptr, titems = train.user_item_csr([tb])
    e_items = e[m:]
    eh_items = eh[m:] if eh is not None else None
    use_net = not cfg.no_prefnet
    flt = not cfg.no_prefilter, not cfg.no_postfilter

    users = sorted(test)
    hits = {c: 0.0 for c in cutoffs}
    gains = {c: 0.0 for c in cutoffs}
    ranks = {}
    for u in users:
        if not 0 <= u < m:
            raise DataError(f"test user {u} out of range")
        target = int(test[u])
        if not 0 <= target < n:
            raise DataError(f"held-out item {target} out of range for user {u}")
        own = titems[indptr[u]:indptr[u + 1]]
        lam = float(fusion.effective_lambdas(
            policy, np.array([u]), counts,
            no_enhancement=cfg.no_enhancement, no_prefnet=cfg.no_prefnet)[0])

        agg = None
        if use_net:
            eu = np.broadcast_to(e[u], (len(own), e.shape[1]))
            codes = np.full(len(own), tb, dtype=np.int64)
            pref, _ = prefnet.forward_batch(
                net, np.ascontiguousarray(eu), e_items[own], codes,
                use_prefilter=flt[0], use_postfilter=flt[1])
            agg = pref.sum(axis=0)

        if num_candidates > 0:
            rng = np.random.default_rng((cfg.seed, u))
            cand = np.concatenate(
                [[target], _candidate_items(rng, n, own, target, num_candidates)])
            scores = _score_items(agg, e_items, eh, eh_items, u, cand, lam)
            rank = int(backend.rank_of_target(
                scores, np.empty(0, dtype=np.int64), 0))
        else:
            scores = _score_items(agg, e_items, eh, eh_items, u, None, lam)
            rank = int(backend.rank_of_target(scores, own, target))
        ranks[u] = rank
        for c in cutoffs:
            hits[c] += hr_at_k(rank, c)
            gains[c] += ndcg_at_k(rank, c)

    total = float(len(users))
    return EvalReport(
        cutoffs=cutoffs,
        hr={c: hits[c] / total for c in cutoffs},
        ndcg={c: gains[c] / total for c in cutoffs},
        users_evaluated=len(users),
        per_user_rank=ranks if with_ranks else None,
    )


def _score_items(agg, e_items, eh, eh_items, u, items, lam):
    """Blended scores for one user over `items` (None = all items)."""
    parts = 0.0
    if agg is not None and lam < 1.0:
        sel = e_items if items is None else e_items[items]
        parts = (1.0 - lam) * (sel @ agg)
    if eh is not None and lam > 0.0:
        sel = eh_items if items is None else eh_items[items]
        parts = parts + lam * (sel @ eh[u])
    if np.isscalar(parts):
        count = e_items.shape[0] if items is None else len(items)
        parts = np.zeros(count)
    return parts