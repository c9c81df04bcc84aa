"""Gated per-behavior item preference network.

Three dense layers over the concatenation [e_u || e_i || code_b]:

    gate1 = sigmoid(W1 c + b1)         user pre-filter
    f_u   = gate1 * e_u
    item  = tanh(W2 [f_u || e_i || code_b] + b2)
    gate2 = sigmoid(W3 c + b3)         post-filter (reads the raw c)
    pref  = gate2 * item

Behavior codes are one-hot rows by default. Either gate can be bypassed
(replaced with all-ones) for ablations. Pair scores are dot products
pref . e_i, trained with a sum-form binary cross entropy.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class PrefNetParams:
    w1: np.ndarray  # (d, 2d + c)
    b1: np.ndarray  # (d,)
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    codes: np.ndarray  # (K, c)

    @property
    def dim(self):
        return self.w1.shape[0]

    def tensors(self):
        return {
            "w1": self.w1, "b1": self.b1,
            "w2": self.w2, "b2": self.b2,
            "w3": self.w3, "b3": self.b3,
            "codes": self.codes,
        }


@dataclass
class PrefNetGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    codes: np.ndarray


def init_params(dim, num_behaviors, rng, code_dim=None):
    """Glorot-uniform weights, zero biases, one-hot behavior codes."""
    c = num_behaviors if code_dim is None else code_dim
    cols = 2 * dim + c

    def glorot(rows):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols))

    return PrefNetParams(
        w1=glorot(dim), b1=np.zeros(dim),
        w2=glorot(dim), b2=np.zeros(dim),
        w3=glorot(dim), b3=np.zeros(dim),
        codes=np.eye(num_behaviors, c),
    )


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def forward_batch(params, e_u, e_i, b_idx, use_prefilter=True, use_postfilter=True):
    """Preference vectors for a batch of (user, item, behavior) triples.

    Returns (pref, cache); the cache feeds backward_batch.
    """
    if e_u.shape != e_i.shape:
        raise DataError("user/item embedding batches must have equal shapes")
    eb = params.codes[b_idx]
    c = np.concatenate([e_u, e_i, eb], axis=1)
    if use_prefilter:
        gate1 = sigmoid(c @ params.w1.T + params.b1)
    else:
        gate1 = np.ones_like(e_u)
    f_u = gate1 * e_u
    c2 = np.concatenate([f_u, e_i, eb], axis=1)
    item_pref = np.tanh(c2 @ params.w2.T + params.b2)
    if use_postfilter:
        gate2 = sigmoid(c @ params.w3.T + params.b3)
    else:
        gate2 = np.ones_like(e_u)
    pref = gate2 * item_pref
    cache = {
        "e_u": e_u, "e_i": e_i, "b_idx": b_idx, "c": c, "c2": c2,
        "gate1": gate1, "item_pref": item_pref, "gate2": gate2,
        "use_prefilter": use_prefilter, "use_postfilter": use_postfilter,
    }
    return pref, cache


def backward_batch(params, cache, g_pref):
    """Gradients of sum(g_pref * pref) w.r.t. params and both embeddings.

    Returns (PrefNetGrads, g_e_u, g_e_i). Code gradients are accumulated
    per behavior row even when codes are frozen; callers decide whether to
    apply them.
    """
    d = params.dim
    e_u, c, c2 = cache["e_u"], cache["c"], cache["c2"]
    gate1, item_pref, gate2 = cache["gate1"], cache["item_pref"], cache["gate2"]
    zeros_w = np.zeros_like(params.w1)
    zeros_b = np.zeros_like(params.b1)

    g_c = np.zeros_like(c)
    if cache["use_postfilter"]:
        g_gate2 = g_pref * item_pref
        g_z3 = g_gate2 * gate2 * (1.0 - gate2)
        gw3, gb3 = g_z3.T @ c, g_z3.sum(axis=0)
        g_c += g_z3 @ params.w3
    else:
        gw3, gb3 = zeros_w.copy(), zeros_b.copy()

    g_item = g_pref * gate2
    g_z2 = g_item * (1.0 - item_pref * item_pref)
    gw2, gb2 = g_z2.T @ c2, g_z2.sum(axis=0)
    g_c2 = g_z2 @ params.w2
    g_fu = g_c2[:, :d]
    g_ei = g_c2[:, d:2 * d].copy()
    g_eb = g_c2[:, 2 * d:].copy()

    g_eu = g_fu * gate1
    if cache["use_prefilter"]:
        g_gate1 = g_fu * e_u
        g_z1 = g_gate1 * gate1 * (1.0 - gate1)
        gw1, gb1 = g_z1.T @ c, g_z1.sum(axis=0)
        g_c += g_z1 @ params.w1
    else:
        gw1, gb1 = zeros_w.copy(), zeros_b.copy()

    g_eu += g_c[:, :d]
    g_ei += g_c[:, d:2 * d]
    g_eb += g_c[:, 2 * d:]

    g_codes = np.zeros_like(params.codes)
    np.add.at(g_codes, cache["b_idx"], g_eb)
    grads = PrefNetGrads(w1=gw1, b1=gb1, w2=gw2, b2=gb2, w3=gw3, b3=gb3, codes=g_codes)
    return grads, g_eu, g_ei


def pair_logits(pref, e_i):
    return np.einsum("nd,nd->n", pref, e_i)


def bce_loss(logits, labels):
    """Sum over examples of softplus(y') - y * y' (numerically stable)."""
    return float(np.sum(softplus(logits) - labels * logits))


def bce_grad(logits, labels):
    return sigmoid(logits) - labels


def aggregate_preferences(pref, pair_user_pos, num_user_pos):
    """Sum preference vectors per user position.

    pair_user_pos maps each pair to a compact user slot in [0, num_user_pos);
    pairs must already be grouped so each slot's pairs are contiguous and
    slots appear in ascending order (the sampler guarantees item-ascending
    order inside a slot, which fixes the accumulation order).
    """
    agg = np.zeros((num_user_pos, pref.shape[1]))
    np.add.at(agg, pair_user_pos, pref)
    return agg
