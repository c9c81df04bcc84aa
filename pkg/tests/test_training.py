"""Joint loss, closed-form gradients, and the optimizer loop."""

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from fdutil import max_rel_err, numerical_grad
from mbrec.config import TrainConfig
from mbrec.errors import DataError, NumericError
from mbrec.training import (Trainer, batch_loss_and_grads, build_state,
                            forward_tables, loss_weights, trainable_tensors)
from refmodel import dense_tables, model_loss
from synth import dataset_from_triples, funnel_dataset, random_dataset
from mbrec.data import leave_one_out_split

MICRO_CFG = dict(dim=4, layers_pretrain=1, layers_enhance=1, batch_size=16,
                 negatives=2, lr=0.05, beta=0.6, l2=1e-3, epochs=2, seed=0,
                 cutoff=3)

VARIANTS = [
    {},
    {"no_pretrain": True},
    {"no_enhancement": True},
    {"no_prefnet": True},
    {"no_prefilter": True, "no_postfilter": True},
    {"pretrain_strategy": "sep"},
    {"aux_in_pretrain": False, "aux_in_prefnet": False},
    {"blend": "fixed:0.3"},
    {"trainable_codes": True},
    {"freeze_enhancement_input": True},
    {"layers_pretrain": 0, "layers_enhance": 2},
]


def micro_problem(seed=0, **overrides):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, max_users=6, max_items=7, num_behaviors=3,
                          density=0.5)
    cfg = TrainConfig(**{**MICRO_CFG, **overrides}).validate()
    trainer = Trainer(data, cfg)
    trainer._bpr.start_epoch(trainer.rng)
    batch = trainer.prepare_batch(np.arange(len(trainer._stream[0])))
    return trainer, batch


class TestLossValue:
    @pytest.mark.parametrize("overrides", VARIANTS)
    def test_matches_dense_reference(self, overrides):
        trainer, batch = micro_problem(seed=1, **overrides)
        total, bce, bpr, _ = batch_loss_and_grads(
            trainer.state, trainer.cfg, batch, with_grads=False)
        want_total, want_bce, want_bpr = model_loss(trainer.state, trainer.cfg, batch)
        assert total == pytest.approx(want_total, rel=1e-10)
        assert bce == pytest.approx(want_bce, rel=1e-10, abs=1e-12)
        assert bpr == pytest.approx(want_bpr, rel=1e-10)

    def test_no_prefnet_drops_bce(self):
        trainer, batch = micro_problem(seed=2, no_prefnet=True)
        assert batch.bce_users is None
        total, bce, bpr, _ = batch_loss_and_grads(
            trainer.state, trainer.cfg, batch, with_grads=False)
        assert bce == 0.0
        reg = trainer.cfg.l2 * sum(
            float(np.sum(t * t))
            for t in trainable_tensors(trainer.state, trainer.cfg).values())
        assert total == pytest.approx(bpr + reg, rel=1e-12)

    def test_loss_weights(self):
        cfg = TrainConfig(beta=0.3)
        assert loss_weights(cfg) == (0.3, 0.7)
        assert loss_weights(TrainConfig(no_prefnet=True, beta=0.3)) == (0.0, 1.0)


class TestGradients:
    @pytest.mark.parametrize("overrides", VARIANTS)
    def test_finite_difference_whole_model(self, overrides):
        trainer, batch = micro_problem(seed=3, **overrides)
        state, cfg = trainer.state, trainer.cfg
        _, _, _, grads = batch_loss_and_grads(state, cfg, batch, exact_reg=True)

        frozen_eh = None
        if cfg.freeze_enhancement_input and not cfg.no_enhancement:
            frozen_eh = dense_tables(state, cfg)[1]

        def value():
            return model_loss(state, cfg, batch, frozen_eh=frozen_eh)[0]

        want_e0 = numerical_grad(value, state.e0, h=1e-4)
        assert max_rel_err(grads.e0, want_e0, floor=1e-8) < 1e-4
        for name, tensor in trainable_tensors(state, cfg).items():
            if name == "e0":
                continue
            got = getattr(grads.net, name)
            want = numerical_grad(value, tensor, h=1e-4)
            assert max_rel_err(got, want, floor=1e-8) < 1e-4, name

    def test_frozen_codes_get_no_updates(self):
        trainer, batch = micro_problem(seed=4)
        before = trainer.state.net.codes.copy()
        _, _, _, grads = batch_loss_and_grads(trainer.state, trainer.cfg, batch)
        trainer._apply(grads)
        assert_array_equal(trainer.state.net.codes, before)

    def test_freeze_enhancement_blocks_that_route(self):
        # with the net off, scores flow only through the enhanced table;
        # freezing its input must zero every base-table gradient
        trainer, batch = micro_problem(seed=5, no_prefnet=True,
                                       freeze_enhancement_input=True,
                                       no_pretrain=True, l2=0.0)
        _, _, _, grads = batch_loss_and_grads(trainer.state, trainer.cfg, batch)
        assert_array_equal(grads.e0, 0.0)


class TestForcedBlend:
    def test_no_enhancement_forces_zero(self):
        trainer, batch = micro_problem(seed=6, no_enhancement=True)
        assert_array_equal(batch.lam, 0.0)
        tables = forward_tables(trainer.state, trainer.cfg)
        assert tables.eh is None

    def test_no_prefnet_forces_one(self):
        trainer, batch = micro_problem(seed=7, no_prefnet=True)
        assert_array_equal(batch.lam, 1.0)

    def test_inverse_count_matches_training_counts(self):
        trainer, batch = micro_problem(seed=8)
        counts = trainer.train_data.user_target_count
        for u, lam in zip(batch.bpr_users, batch.lam):
            want = 1.0 / counts[u] if counts[u] > 0 else 1.0
            assert lam == pytest.approx(want)


class TestOptimizer:
    def test_loss_drops_on_learnable_data(self):
        data = funnel_dataset(num_users=24, num_items=18, seed=9, view_k=8,
                              cart_k=5, buy_k=3)
        split = leave_one_out_split(data)
        cfg = TrainConfig(dim=8, epochs=8, batch_size=64, lr=0.02, seed=1,
                          cutoff=5)
        trainer = Trainer(split.train, cfg, split.test)
        history = trainer.train(eval_interval=0)
        assert history[-1]["loss_total"] < 0.7 * history[0]["loss_total"]

    def test_sparse_and_dense_agree_when_all_rows_touched(self):
        # pretraining over a connected graph densifies the gradient, so
        # lazy updates hit every row and the two modes coincide
        data = funnel_dataset(num_users=10, num_items=8, seed=10, view_k=6,
                              cart_k=4, buy_k=2)
        results = []
        for sparse in (True, False):
            cfg = TrainConfig(dim=4, epochs=2, batch_size=256, lr=0.05,
                              seed=2, sparse_updates=sparse, cutoff=3)
            trainer = Trainer(data, cfg)
            trainer.train(eval_interval=0)
            results.append(trainer.state.e0.copy())
        assert_allclose(results[0], results[1], atol=1e-12)

    def test_sparse_skips_isolated_rows_dense_decays_them(self):
        # a user with no training rows never enters a batch (items can still
        # be drawn as negatives, users cannot), so their row gets zero
        # gradient; sparse mode must leave it at its initial value while
        # dense mode shrinks it via the L2 term
        triples = [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 2, 0)]
        data = dataset_from_triples(["buy"], 3, 3, triples)  # user 2 isolated
        out = {}
        for sparse in (True, False):
            cfg = TrainConfig(dim=4, epochs=3, batch_size=8, lr=0.05, seed=3,
                              l2=0.01, cutoff=2, sparse_updates=sparse)
            trainer = Trainer(data, cfg)
            init = trainer.state.e0[2].copy()
            trainer.train(eval_interval=0)
            out[sparse] = (init, trainer.state.e0[2].copy())
        init, after = out[True]
        assert_array_equal(init, after)
        init, after = out[False]
        assert np.all(np.abs(after) < np.abs(init))

    def test_grad_clip_trips_on_tiny_threshold(self):
        data = funnel_dataset(num_users=10, num_items=8, seed=11, view_k=5,
                              cart_k=3, buy_k=2)
        cfg = TrainConfig(dim=4, epochs=1, batch_size=64, grad_clip=1e-3,
                          seed=4, cutoff=3)
        trainer = Trainer(data, cfg)
        trainer.train(eval_interval=0)
        assert trainer.clip_events > 0

    def test_non_finite_loss_raises(self):
        trainer, _ = micro_problem(seed=12)
        trainer.state.e0[0, 0] = np.nan
        with pytest.raises(NumericError, match="non-finite"):
            trainer.train(eval_interval=0)

    def test_requires_target_interactions(self):
        data = dataset_from_triples(["view", "buy"], 2, 2, [(0, 0, 0)])
        with pytest.raises(DataError, match="target"):
            Trainer(data, TrainConfig(**MICRO_CFG))

    def test_metrics_record_shape(self):
        data = funnel_dataset(num_users=12, num_items=10, seed=13, view_k=6,
                              cart_k=4, buy_k=2)
        split = leave_one_out_split(data)
        cfg = TrainConfig(dim=4, epochs=2, batch_size=64, seed=5, cutoff=4)
        trainer = Trainer(split.train, cfg, split.test)
        history = trainer.train(eval_interval=2)
        assert [h["epoch"] for h in history] == [1, 2]
        assert set(history[0]) == {"epoch", "loss_total", "loss_bce", "loss_bpr"}
        assert set(history[1]) == {"epoch", "loss_total", "loss_bce", "loss_bpr",
                                   "hr@4", "ndcg@4"}

    def test_determinism_same_seed_same_params(self):
        data = funnel_dataset(num_users=12, num_items=10, seed=14, view_k=6,
                              cart_k=4, buy_k=2)
        cfg = TrainConfig(dim=4, epochs=3, batch_size=32, seed=6, cutoff=3)
        a = Trainer(data, cfg)
        ha = a.train(eval_interval=0)
        b = Trainer(data, cfg)
        hb = b.train(eval_interval=0)
        assert ha == hb
        assert_array_equal(a.state.e0, b.state.e0)
        assert_array_equal(a.state.net.w2, b.state.net.w2)
