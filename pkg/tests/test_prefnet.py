"""Gated preference network: forward oracles and closed-form gradients."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from fdutil import max_rel_err, numerical_grad
from mbrec import prefnet
from mbrec.prefnet import (PrefNetParams, aggregate_preferences, backward_batch,
                           bce_grad, bce_loss, forward_batch, init_params,
                           pair_logits)

LN2 = 0.6931471805599453
TANH_HALF = 0.46211715726000974


def reference_forward(p, e_u, e_i, b_idx, pre=True, post=True):
    """Straight-line recomputation of the three-layer gate chain."""
    sig = lambda x: 1.0 / (1.0 + np.exp(-x))
    eb = p.codes[b_idx]
    c = np.concatenate([e_u, e_i, eb], axis=1)
    gate1 = sig(c @ p.w1.T + p.b1) if pre else np.ones_like(e_u)
    c2 = np.concatenate([gate1 * e_u, e_i, eb], axis=1)
    item = np.tanh(c2 @ p.w2.T + p.b2)
    gate2 = sig(c @ p.w3.T + p.b3) if post else np.ones_like(e_u)
    return gate2 * item


def tiny_params(rng, d, k):
    p = init_params(d, k, rng)
    for w in (p.w1, p.w2, p.w3):
        w[...] = rng.normal(scale=0.5, size=w.shape)
    for b in (p.b1, p.b2, p.b3):
        b[...] = rng.normal(scale=0.2, size=b.shape)
    return p


class TestInit:
    def test_shapes_and_codes(self):
        p = init_params(4, 3, np.random.default_rng(0))
        assert p.w1.shape == (4, 11)
        assert p.b2.shape == (4,)
        assert_array_equal(p.codes, np.eye(3))
        assert p.dim == 4

    def test_glorot_bound_and_zero_bias(self):
        p = init_params(8, 2, np.random.default_rng(1))
        bound = np.sqrt(6.0 / (8 + 18))
        for w in (p.w1, p.w2, p.w3):
            assert np.all(np.abs(w) <= bound)
        for b in (p.b1, p.b2, p.b3):
            assert_array_equal(b, 0.0)


class TestForward:
    def test_zero_params_give_zero_preference(self):
        d, k = 3, 2
        p = PrefNetParams(
            w1=np.zeros((d, 2 * d + k)), b1=np.zeros(d),
            w2=np.zeros((d, 2 * d + k)), b2=np.zeros(d),
            w3=np.zeros((d, 2 * d + k)), b3=np.zeros(d),
            codes=np.eye(k))
        rng = np.random.default_rng(2)
        pref, cache = forward_batch(p, rng.normal(size=(4, d)),
                                    rng.normal(size=(4, d)),
                                    np.array([0, 1, 0, 1]))
        assert_array_equal(pref, 0.0)  # tanh(0) kills the product
        assert_array_equal(cache["gate1"], 0.5)
        assert_array_equal(cache["gate2"], 0.5)

    def test_hand_computed_scalar_case(self):
        # d=1, K=1: gate1 = 0.5, f_u = 1, item = tanh(0.5), gate2 = 0.75
        p = PrefNetParams(
            w1=np.zeros((1, 3)), b1=np.zeros(1),
            w2=np.array([[0.5, 0.0, 0.0]]), b2=np.zeros(1),
            w3=np.zeros((1, 3)), b3=np.array([np.log(3.0)]),
            codes=np.eye(1))
        pref, cache = forward_batch(p, np.array([[2.0]]), np.array([[7.0]]),
                                    np.array([0]))
        assert cache["gate1"][0, 0] == pytest.approx(0.5)
        assert cache["item_pref"][0, 0] == pytest.approx(TANH_HALF, abs=1e-15)
        assert cache["gate2"][0, 0] == pytest.approx(0.75)
        assert pref[0, 0] == pytest.approx(0.75 * TANH_HALF, abs=1e-15)
        assert pair_logits(pref, np.array([[7.0]]))[0] == pytest.approx(
            7.0 * 0.75 * TANH_HALF)

    def test_matches_reference_chain(self):
        rng = np.random.default_rng(3)
        for pre in (True, False):
            for post in (True, False):
                d, k, n = 4, 3, 9
                p = tiny_params(rng, d, k)
                eu = rng.normal(size=(n, d))
                ei = rng.normal(size=(n, d))
                b = rng.integers(0, k, size=n)
                got, _ = forward_batch(p, eu, ei, b, use_prefilter=pre,
                                       use_postfilter=post)
                assert_allclose(got, reference_forward(p, eu, ei, b, pre, post),
                                rtol=1e-12, atol=1e-12)

    def test_bypassed_gates_are_ones(self):
        rng = np.random.default_rng(4)
        p = tiny_params(rng, 2, 2)
        eu = rng.normal(size=(3, 2))
        _, cache = forward_batch(p, eu, rng.normal(size=(3, 2)),
                                 np.zeros(3, dtype=np.int64),
                                 use_prefilter=False, use_postfilter=False)
        assert_array_equal(cache["gate1"], 1.0)
        assert_array_equal(cache["gate2"], 1.0)

    def test_both_gates_read_original_user_embedding(self):
        # the post-filter keys off e_u, not the filtered f_u: with w3 reading
        # only the user slot, scaling e_u must change gate2 even when the
        # pre-filter output is forced to zero by w1 = -inf-ish biases
        rng = np.random.default_rng(5)
        d, k = 2, 1
        p = tiny_params(rng, d, k)
        p.w3[...] = 0.0
        p.w3[:, :d] = 1.0
        p.b3[...] = 0.0
        eu = np.array([[1.0, 2.0]])
        ei = np.array([[0.5, -0.5]])
        _, cache = forward_batch(p, eu, ei, np.array([0]))
        z3 = eu.sum()
        assert_allclose(cache["gate2"], 1.0 / (1.0 + np.exp(-z3)), rtol=1e-12)

    def test_shape_mismatch(self):
        p = init_params(2, 1, np.random.default_rng(0))
        with pytest.raises(Exception):
            forward_batch(p, np.zeros((2, 2)), np.zeros((3, 2)), np.zeros(2, np.int64))


class TestBackward:
    def scalar_loss(self, p, eu, ei, b, g, pre=True, post=True):
        pref, _ = forward_batch(p, eu, ei, b, use_prefilter=pre, use_postfilter=post)
        return float(np.sum(g * pref))

    @pytest.mark.parametrize("pre,post", [(True, True), (False, True),
                                          (True, False), (False, False)])
    def test_finite_difference_all_tensors(self, pre, post):
        rng = np.random.default_rng(6)
        d, k, n = 3, 2, 6
        p = tiny_params(rng, d, k)
        eu = rng.normal(size=(n, d))
        ei = rng.normal(size=(n, d))
        b = rng.integers(0, k, size=n)
        g = rng.normal(size=(n, d))
        pref, cache = forward_batch(p, eu, ei, b, use_prefilter=pre,
                                    use_postfilter=post)
        grads, g_eu, g_ei = backward_batch(p, cache, g)
        f = lambda: self.scalar_loss(p, eu, ei, b, g, pre, post)
        for name, got in (("w1", grads.w1), ("b1", grads.b1),
                          ("w2", grads.w2), ("b2", grads.b2),
                          ("w3", grads.w3), ("b3", grads.b3),
                          ("codes", grads.codes)):
            want = numerical_grad(f, getattr(p, name))
            assert max_rel_err(got, want) < 1e-6, name
        assert max_rel_err(g_eu, numerical_grad(f, eu)) < 1e-6
        assert max_rel_err(g_ei, numerical_grad(f, ei)) < 1e-6

    def test_disabled_gates_have_zero_weight_grads(self):
        rng = np.random.default_rng(7)
        p = tiny_params(rng, 2, 2)
        eu, ei = rng.normal(size=(2, 4, 2))
        b = np.array([0, 1, 1, 0])
        _, cache = forward_batch(p, eu, ei, b, use_prefilter=False)
        grads, _, _ = backward_batch(p, cache, np.ones((4, 2)))
        assert_array_equal(grads.w1, 0.0)
        assert_array_equal(grads.b1, 0.0)
        assert np.any(grads.w3 != 0.0)


class TestBce:
    def test_zero_logit_loss_is_ln2(self):
        logits = np.zeros(3)
        labels = np.array([1.0, 0.0, 1.0])
        assert bce_loss(logits, labels) == pytest.approx(3 * LN2, abs=1e-15)

    def test_matches_naive_formula_in_safe_range(self):
        rng = np.random.default_rng(8)
        logits = rng.uniform(-5, 5, size=50)
        labels = rng.integers(0, 2, size=50).astype(np.float64)
        p = 1.0 / (1.0 + np.exp(-logits))
        naive = -np.sum(labels * np.log(p) + (1 - labels) * np.log(1 - p))
        assert bce_loss(logits, labels) == pytest.approx(naive, rel=1e-10)

    def test_stable_at_extreme_logits(self):
        loss = bce_loss(np.array([800.0, -800.0]), np.array([1.0, 0.0]))
        assert loss == pytest.approx(0.0, abs=1e-12)
        loss = bce_loss(np.array([800.0]), np.array([0.0]))
        assert loss == pytest.approx(800.0)

    def test_grad_at_zero(self):
        g = bce_grad(np.zeros(2), np.array([1.0, 0.0]))
        assert_allclose(g, [-0.5, 0.5], atol=1e-15)

    def test_grad_finite_difference(self):
        rng = np.random.default_rng(9)
        logits = rng.normal(size=8)
        labels = rng.integers(0, 2, size=8).astype(np.float64)
        got = bce_grad(logits, labels)
        want = numerical_grad(lambda: bce_loss(logits, labels), logits)
        assert max_rel_err(got, want) < 1e-7


class TestAggregate:
    def test_sums_per_slot(self):
        pref = np.array([[1.0, 2.0], [3.0, 4.0], [10.0, 20.0]])
        slots = np.array([0, 0, 1])
        got = aggregate_preferences(pref, slots, 3)
        assert_array_equal(got, [[4.0, 6.0], [10.0, 20.0], [0.0, 0.0]])

    def test_empty(self):
        got = aggregate_preferences(np.zeros((0, 3)), np.zeros(0, np.int64), 2)
        assert_array_equal(got, np.zeros((2, 3)))


class TestActivations:
    def test_sigmoid_extremes_and_symmetry(self):
        x = np.array([-800.0, 0.0, 800.0])
        s = prefnet.sigmoid(x)
        assert_allclose(s, [0.0, 0.5, 1.0], atol=1e-12)
        x = np.linspace(-20, 20, 41)
        assert_allclose(prefnet.sigmoid(x) + prefnet.sigmoid(-x), 1.0, atol=1e-12)

    def test_softplus_limits(self):
        assert prefnet.softplus(np.array([0.0]))[0] == pytest.approx(LN2)
        assert prefnet.softplus(np.array([900.0]))[0] == pytest.approx(900.0)
        assert prefnet.softplus(np.array([-900.0]))[0] == pytest.approx(0.0, abs=1e-12)
