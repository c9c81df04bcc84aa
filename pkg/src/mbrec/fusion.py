"""Blending of aggregated preference scores with enhanced-embedding scores.

The final score for (u, i) is

    y = (1 - lam) * (agg_u . e_i) + lam * (eh_u . eh_i)

where e_i comes from the pretrained table E, eh is E enhanced by an extra
propagation pass over the target-behavior graph, and lam is either fixed
or 1 / N_u with N_u the user's target-behavior training count (users with
no history fall back to lam = 1).
"""

from dataclasses import dataclass

import numpy as np

from . import graph
from .errors import DataError


@dataclass
class LambdaPolicy:
    mode: str  # "inverse-count" or "fixed"
    fixed_value: float = 0.0

    def __post_init__(self):
        if self.mode not in ("inverse-count", "fixed"):
            raise DataError(f"unknown blend mode {self.mode!r}")
        if self.mode == "fixed" and not 0.0 <= self.fixed_value <= 1.0:
            raise DataError("fixed blend weight must lie in [0, 1]")

    @classmethod
    def parse(cls, text):
        """Accepts "inverse-count" or "fixed:<float>"."""
        if text == "inverse-count":
            return cls("inverse-count")
        if text.startswith("fixed:"):
            try:
                return cls("fixed", float(text.split(":", 1)[1]))
            except ValueError:
                raise DataError(f"bad blend weight in {text!r}") from None
        raise DataError(f"unknown blend policy {text!r}")

    def weights(self, users, target_counts):
        """Per-user lam values for an int array of user ids."""
        if self.mode == "fixed":
            return np.full(len(users), self.fixed_value)
        counts = target_counts[users].astype(np.float64)
        out = np.ones(len(users))
        seen = counts > 0
        out[seen] = 1.0 / counts[seen]
        return out


def effective_lambdas(policy, users, target_counts, no_enhancement=False,
                      no_prefnet=False):
    """Per-user blend weights with the ablation endpoints forced.

    Disabling enhancement pins the blend to the preference route (0);
    disabling the preference net pins it to the embedding route (1).
    """
    if no_enhancement:
        return np.zeros(len(users))
    if no_prefnet:
        return np.ones(len(users))
    return policy.weights(users, target_counts)


def enhance(adj_target, e, layers):
    """E + propagate(E) over the target-behavior graph.

    Returns (enhanced, trace); the trace drives the backward pass.
    """
    prop, trace = graph.propagate(adj_target, e, layers)
    return e + prop, trace


def enhance_backward(adj_target, trace, grad_out):
    return grad_out + graph.propagate_backward(adj_target, trace, grad_out)


def fused_scores(agg_u, e_items, eh_u, eh_items, lam):
    """Blend both score routes for one user against a batch of items.

    agg_u and eh_u are single vectors; e_items/eh_items are (n, d).
    """
    base = e_items @ agg_u
    enh = eh_items @ eh_u
    return (1.0 - lam) * base + lam * enh
