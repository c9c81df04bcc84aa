"""Joint training of the preference network and the graph embeddings.

One base embedding table covers users (rows 0..M-1) and items (rows
M..M+N-1). Each batch evaluates two objectives on freshly propagated
tables:

  * a binary cross entropy over observed (user, item, behavior) triples
    plus sampled negatives, scored by the gated preference network, and
  * a pairwise ranking loss over target-behavior pairs scored by the
    blended model (aggregated preferences vs. enhanced embeddings).

The total loss is beta * bce + (1 - beta) * bpr + l2 * sum ||theta||^2.
All gradients are in closed form; Adam updates embedding rows lazily when
sparse updates are on. Checkpoints are written in a fixed binary layout
so identical runs produce identical bytes.
"""

import json
import logging
import struct
from dataclasses import dataclass

import numpy as np

from . import backend, evaluation, fusion, graph, prefnet, sampling
from .config import config_hash, parse_text, to_text
from .errors import CheckpointError, DataError, NumericError

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ModelState:
    e0: np.ndarray  # (M + N, dim)
    net: prefnet.PrefNetParams
    adjacencies: list  # pretrain graphs; one entry for the "agg" strategy
    adj_target: graph.NormalizedAdjacency
    num_users: int
    num_items: int


@dataclass
class Tables:
    e: np.ndarray
    eh: np.ndarray  # None when enhancement is off
    traces_pre: list
    trace_enh: object


@dataclass
class Grads:
    e0: np.ndarray
    net: prefnet.PrefNetGrads


@dataclass
class Batch:
    """Fully sampled batch: loss is a deterministic function of params."""

    bce_users: np.ndarray  # all four None when the preference net is off
    bce_items: np.ndarray
    bce_behaviors: np.ndarray
    bce_labels: np.ndarray
    bpr_users: np.ndarray
    bpr_pos: np.ndarray
    bpr_neg: np.ndarray  # (pairs, bpr_negatives)
    lam: np.ndarray  # per-pair blend weight
    agg_users: np.ndarray  # sorted distinct ranking users (None w/o net)
    agg_items: np.ndarray  # their target training items, user-grouped
    agg_user_of_pair: np.ndarray  # slot into agg_users per support pair
    bpr_user_slot: np.ndarray  # slot into agg_users per ranking pair


def _tensor_map(state):
    n = state.net
    return {
        "e0": state.e0,
        "w1": n.w1, "b1": n.b1,
        "w2": n.w2, "b2": n.b2,
        "w3": n.w3, "b3": n.b3,
        "codes": n.codes,
    }


def trainable_tensors(state, cfg):
    out = _tensor_map(state)
    if not cfg.trainable_codes:
        del out["codes"]
    return out


def loss_weights(cfg):
    """(bce weight, bpr weight); dropping the net leaves ranking only."""
    if cfg.no_prefnet:
        return 0.0, 1.0
    return cfg.beta, 1.0 - cfg.beta


def build_state(train, cfg, rng):
    m, n = train.num_users, train.num_items
    e0 = rng.normal(0.0, 0.1, size=(m + n, cfg.dim))
    net = prefnet.init_params(cfg.dim, train.registry.count, rng)
    if cfg.aux_in_pretrain:
        pre = list(range(train.registry.count))
    else:
        pre = [train.registry.target]
    if cfg.no_pretrain:
        adjacencies = []
    elif cfg.pretrain_strategy == "agg":
        adjacencies = [graph.build_adjacency(train, pre)]
    else:
        adjacencies = [graph.build_adjacency(train, [b]) for b in pre]
    adj_target = graph.build_adjacency(train, [train.registry.target])
    return ModelState(e0=e0, net=net, adjacencies=adjacencies,
                      adj_target=adj_target, num_users=m, num_items=n)


def forward_tables(state, cfg):
    if cfg.no_pretrain:
        e, traces = state.e0, []
    elif cfg.pretrain_strategy == "agg":
        e, trace = graph.propagate(state.adjacencies[0], state.e0, cfg.layers_pretrain)
        traces = [trace]
    else:
        outs = [graph.propagate(adj, state.e0, cfg.layers_pretrain)
                for adj in state.adjacencies]
        e = outs[0][0]
        for other, _ in outs[1:]:
            e += other
        e /= len(outs)
        traces = [t for _, t in outs]
    if cfg.no_enhancement:
        eh, trace_enh = None, None
    else:
        eh, trace_enh = fusion.enhance(state.adj_target, e, cfg.layers_enhance)
    return Tables(e=e, eh=eh, traces_pre=traces, trace_enh=trace_enh)


def backward_tables(state, cfg, tables, grad_e, grad_eh):
    """Pull table gradients back to the base embedding table."""
    if grad_eh is not None and not cfg.freeze_enhancement_input:
        grad_e = grad_e + fusion.enhance_backward(
            state.adj_target, tables.trace_enh, grad_eh)
    if cfg.no_pretrain:
        return grad_e
    if cfg.pretrain_strategy == "agg":
        return graph.propagate_backward(state.adjacencies[0], tables.traces_pre[0], grad_e)
    acc = None
    for adj, trace in zip(state.adjacencies, tables.traces_pre):
        part = graph.propagate_backward(adj, trace, grad_e)
        acc = part if acc is None else acc + part
    return acc / len(state.adjacencies)


def _zero_net_grads(net):
    return prefnet.PrefNetGrads(
        w1=np.zeros_like(net.w1), b1=np.zeros_like(net.b1),
        w2=np.zeros_like(net.w2), b2=np.zeros_like(net.b2),
        w3=np.zeros_like(net.w3), b3=np.zeros_like(net.b3),
        codes=np.zeros_like(net.codes),
    )


def _accumulate(dst, src):
    for name in ("w1", "b1", "w2", "b2", "w3", "b3", "codes"):
        getattr(dst, name).__iadd__(getattr(src, name))


def batch_loss_and_grads(state, cfg, batch, with_grads=True, exact_reg=False):
    """Loss on one prepared batch plus, optionally, closed-form gradients.

    Returns (total, bce_sum, bpr_sum, grads). Gradients exclude the L2
    term unless exact_reg is set (the trainer folds regularization itself
    so that sparse updates can keep it lazy); the loss value always
    includes it.
    """
    tables = forward_tables(state, cfg)
    m = state.num_users
    e, eh = tables.e, tables.eh
    bce_w, bpr_w = loss_weights(cfg)
    flt = not cfg.no_prefilter, not cfg.no_postfilter

    grad_e = np.zeros_like(e) if with_grads else None
    grad_eh = np.zeros_like(eh) if (with_grads and eh is not None) else None
    net_grads = _zero_net_grads(state.net) if with_grads else None

    bce_sum = 0.0
    if batch.bce_users is not None and len(batch.bce_users) > 0:
        eu = e[batch.bce_users]
        ei = e[m + batch.bce_items]
        pref, cache = prefnet.forward_batch(
            state.net, eu, ei, batch.bce_behaviors,
            use_prefilter=flt[0], use_postfilter=flt[1])
        logits = prefnet.pair_logits(pref, ei)
        bce_sum = prefnet.bce_loss(logits, batch.bce_labels)
        if with_grads and bce_w != 0.0:
            g_logit = bce_w * prefnet.bce_grad(logits, batch.bce_labels)
            g_pref = g_logit[:, None] * ei
            grads_n, g_eu, g_ei = prefnet.backward_batch(state.net, cache, g_pref)
            _accumulate(net_grads, grads_n)
            backend.scatter_add_rows(grad_e, batch.bce_users, g_eu)
            backend.scatter_add_rows(grad_e, m + batch.bce_items,
                                     g_ei + g_logit[:, None] * pref)

    # aggregated preference per distinct ranking user
    agg = cache_agg = None
    if batch.agg_users is not None:
        pair_users = batch.agg_users[batch.agg_user_of_pair]
        a_eu = e[pair_users]
        a_ei = e[m + batch.agg_items]
        behaviors = np.full(len(batch.agg_items), cfg_target_index(state), dtype=np.int64)
        pref_pairs, cache_agg = prefnet.forward_batch(
            state.net, a_eu, a_ei, behaviors,
            use_prefilter=flt[0], use_postfilter=flt[1])
        agg = prefnet.aggregate_preferences(
            pref_pairs, batch.agg_user_of_pair, len(batch.agg_users))

    lam = batch.lam
    pos_rows = m + batch.bpr_pos
    neg_rows = m + batch.bpr_neg
    y_pos = np.zeros(len(batch.bpr_users))
    y_neg = np.zeros(batch.bpr_neg.shape)
    if agg is not None:
        ag = agg[batch.bpr_user_slot]
        y_pos += (1.0 - lam) * np.einsum("pd,pd->p", ag, e[pos_rows])
        y_neg += (1.0 - lam)[:, None] * np.einsum("pd,pjd->pj", ag, e[neg_rows])
    if eh is not None:
        ehu = eh[batch.bpr_users]
        y_pos += lam * np.einsum("pd,pd->p", ehu, eh[pos_rows])
        y_neg += lam[:, None] * np.einsum("pd,pjd->pj", ehu, eh[neg_rows])
    s = y_pos[:, None] - y_neg
    bpr_sum = float(np.sum(prefnet.softplus(-s)))

    reg = 0.0
    if cfg.l2 > 0.0:
        reg = cfg.l2 * sum(float(np.sum(t * t))
                           for t in trainable_tensors(state, cfg).values())
    total = bce_w * bce_sum + bpr_w * bpr_sum + reg
    if not with_grads:
        return total, bce_sum, bpr_sum, None

    if len(batch.bpr_users) > 0:
        g_s = bpr_w * (prefnet.sigmoid(s) - 1.0)
        g_ypos = g_s.sum(axis=1)
        g_yneg = -g_s
        if agg is not None:
            w1m = 1.0 - lam
            g_ag = w1m[:, None] * (g_ypos[:, None] * e[pos_rows]
                                   + np.einsum("pj,pjd->pd", g_yneg, e[neg_rows]))
            backend.scatter_add_rows(
                grad_e, pos_rows, (w1m * g_ypos)[:, None] * ag)
            nv = (w1m[:, None] * g_yneg)[:, :, None] * ag[:, None, :]
            backend.scatter_add_rows(
                grad_e, neg_rows.ravel(), nv.reshape(-1, ag.shape[1]))
            g_agg = np.zeros_like(agg)
            np.add.at(g_agg, batch.bpr_user_slot, g_ag)
            grads_n, g_eu_p, g_ei_p = prefnet.backward_batch(
                state.net, cache_agg, g_agg[batch.agg_user_of_pair])
            _accumulate(net_grads, grads_n)
            backend.scatter_add_rows(
                grad_e, batch.agg_users[batch.agg_user_of_pair], g_eu_p)
            backend.scatter_add_rows(grad_e, m + batch.agg_items, g_ei_p)
        if eh is not None:
            backend.scatter_add_rows(
                grad_eh, batch.bpr_users,
                lam[:, None] * (g_ypos[:, None] * eh[pos_rows]
                                + np.einsum("pj,pjd->pd", g_yneg, eh[neg_rows])))
            backend.scatter_add_rows(
                grad_eh, pos_rows, (lam * g_ypos)[:, None] * ehu)
            nv = (lam[:, None] * g_yneg)[:, :, None] * ehu[:, None, :]
            backend.scatter_add_rows(
                grad_eh, neg_rows.ravel(), nv.reshape(-1, ehu.shape[1]))

    grad_e0 = backward_tables(state, cfg, tables, grad_e, grad_eh)
    grads = Grads(e0=grad_e0, net=net_grads)
    if exact_reg and cfg.l2 > 0.0:
        grads.e0 += 2.0 * cfg.l2 * state.e0
        for name, tensor in trainable_tensors(state, cfg).items():
            if name != "e0":
                getattr(grads.net, name).__iadd__(2.0 * cfg.l2 * tensor)
    return total, bce_sum, bpr_sum, grads


def cfg_target_index(state):
    # target behavior is the last registered one; K = code table rows
    return state.net.codes.shape[0] - 1


def _adam_dense(param, m, v, grad, lr, t):
    m *= ADAM_BETA1
    m += (1.0 - ADAM_BETA1) * grad
    v *= ADAM_BETA2
    v += (1.0 - ADAM_BETA2) * (grad * grad)
    mh = m / (1.0 - ADAM_BETA1 ** t)
    vh = v / (1.0 - ADAM_BETA2 ** t)
    param -= lr * mh / (np.sqrt(vh) + ADAM_EPS)


class Trainer:
    def __init__(self, train, cfg, test=None):
        cfg.validate()
        self.train_data = train
        self.cfg = cfg
        self.test = dict(test) if test else {}
        self.rng = np.random.default_rng(cfg.seed)
        self.state = build_state(train, cfg, self.rng)
        self.policy = fusion.LambdaPolicy.parse(cfg.blend)
        self.target_counts = train.user_target_count
        self.epoch = 0
        self.adam_step = 0
        self.best_hr = -1.0
        self.clip_events = 0
        self.config_hash = config_hash(
            cfg, train.num_users, train.num_items, train.registry.count)
        self._m = {k: np.zeros_like(t) for k, t in _tensor_map(self.state).items()}
        self._v = {k: np.zeros_like(t) for k, t in _tensor_map(self.state).items()}
        self._init_streams()

    def _init_streams(self):
        train, cfg = self.train_data, self.cfg
        tb = train.registry.target
        tu, ti = sampling.target_positives(train)
        if len(tu) == 0:
            raise DataError("no target-behavior training interactions")
        if cfg.no_prefnet:
            self._stream = (tu, ti, np.full(len(tu), tb, dtype=np.int64))
        else:
            self._stream = sampling.bce_positives(train, include_aux=cfg.aux_in_prefnet)
        self._bpr = sampling.CyclingPairStream(tu, ti)
        behaviors = sorted(set(self._stream[2].tolist()))
        self._neg = {}
        for b in behaviors:
            indptr, items = train.user_item_csr([b])
            self._neg[b] = sampling.NegativeSampler(
                indptr, items, train.num_items, cfg.resample_cap)
        self._t_indptr, self._t_items = train.user_item_csr([tb])
        if tb in self._neg:
            self._tneg = self._neg[tb]
        else:
            self._tneg = sampling.NegativeSampler(
                self._t_indptr, self._t_items, train.num_items, cfg.resample_cap)

    # -- batch assembly ------------------------------------------------

    def prepare_batch(self, idx):
        cfg = self.cfg
        su, si, sb = self._stream
        u, i, b = su[idx], si[idx], sb[idx]
        if cfg.no_prefnet:
            bce = (None, None, None, None)
            bu, bi = u, i
        else:
            k = cfg.negatives
            neg = np.empty((len(u), k), dtype=np.int64)
            valid = np.ones(len(u), dtype=bool)
            for beh in sorted(self._neg):
                mask = b == beh
                if mask.any():
                    drawn, ok = self._neg[beh].sample(self.rng, u[mask], k)
                    neg[mask] = drawn
                    valid[mask] = ok
            pu, pi, pb, pn = u[valid], i[valid], b[valid], neg[valid]
            bce = (
                np.concatenate([pu, np.repeat(pu, k)]),
                np.concatenate([pi, pn.ravel()]),
                np.concatenate([pb, np.repeat(pb, k)]),
                np.concatenate([np.ones(len(pu)), np.zeros(len(pu) * k)]),
            )
            bu, bi = self._bpr.take(len(idx))
        bneg, bvalid = self._tneg.sample(self.rng, bu, cfg.bpr_negatives)
        bu, bi, bneg = bu[bvalid], bi[bvalid], bneg[bvalid]
        lam = fusion.effective_lambdas(
            self.policy, bu, self.target_counts,
            no_enhancement=cfg.no_enhancement, no_prefnet=cfg.no_prefnet)
        if cfg.no_prefnet:
            agg_users = agg_items = agg_user_of_pair = slot = None
        else:
            agg_users = np.unique(bu)
            counts = self._t_indptr[agg_users + 1] - self._t_indptr[agg_users]
            agg_items = np.concatenate(
                [self._t_items[self._t_indptr[uu]:self._t_indptr[uu + 1]]
                 for uu in agg_users]) if len(agg_users) else np.empty(0, np.int64)
            agg_user_of_pair = np.repeat(np.arange(len(agg_users)), counts)
            slot = np.searchsorted(agg_users, bu)
        return Batch(
            bce_users=bce[0], bce_items=bce[1], bce_behaviors=bce[2],
            bce_labels=bce[3], bpr_users=bu, bpr_pos=bi, bpr_neg=bneg,
            lam=lam, agg_users=agg_users, agg_items=agg_items,
            agg_user_of_pair=agg_user_of_pair, bpr_user_slot=slot)

    # -- updates --------------------------------------------------------

    def _apply(self, grads):
        cfg = self.cfg
        self.adam_step += 1
        t = self.adam_step
        l2 = cfg.l2
        if cfg.sparse_updates:
            rows = np.nonzero(np.any(grads.e0 != 0.0, axis=1))[0]
        else:
            rows = np.arange(grads.e0.shape[0])
        ge = grads.e0[rows] + 2.0 * l2 * self.state.e0[rows]
        net_pairs = []
        for name, tensor in trainable_tensors(self.state, cfg).items():
            if name == "e0":
                continue
            g = getattr(grads.net, name) + 2.0 * l2 * tensor
            net_pairs.append((name, tensor, g))
        sq = float(np.sum(ge * ge)) + sum(float(np.sum(g * g)) for _, _, g in net_pairs)
        norm = np.sqrt(sq)
        if cfg.grad_clip > 0.0 and norm > cfg.grad_clip:
            scale = cfg.grad_clip / norm
            ge *= scale
            for _, _, g in net_pairs:
                g *= scale
            self.clip_events += 1
        backend.adam_update_rows(
            self.state.e0, self._m["e0"], self._v["e0"], rows, ge,
            cfg.lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
            1.0 - ADAM_BETA1 ** t, 1.0 - ADAM_BETA2 ** t)
        for name, tensor, g in net_pairs:
            _adam_dense(tensor, self._m[name], self._v[name], g, cfg.lr, t)

    def _run_epoch(self):
        cfg = self.cfg
        self._bpr.start_epoch(self.rng)
        bce_total = bpr_total = 0.0
        count = len(self._stream[0])
        for bi, idx in enumerate(sampling.epoch_batches(self.rng, count, cfg.batch_size)):
            batch = self.prepare_batch(idx)
            total, bce, bpr, grads = batch_loss_and_grads(self.state, cfg, batch)
            if not np.isfinite(total):
                raise NumericError(
                    f"non-finite loss at epoch {self.epoch + 1} batch {bi}: "
                    f"bce={bce} bpr={bpr} "
                    f"|e0|={float(np.linalg.norm(self.state.e0)):.4g}")
            self._apply(grads)
            bce_total += bce
            bpr_total += bpr
        self.epoch += 1
        bce_w, bpr_w = loss_weights(cfg)
        reg = cfg.l2 * sum(float(np.sum(t * t))
                           for t in trainable_tensors(self.state, cfg).values())
        return {
            "epoch": self.epoch,
            "loss_total": bce_w * bce_total + bpr_w * bpr_total + reg,
            "loss_bce": bce_total,
            "loss_bpr": bpr_total,
        }

    def evaluate(self, cutoffs=None, with_ranks=False, num_candidates=0):
        tables = forward_tables(self.state, self.cfg)
        return evaluation.evaluate(
            tables.e, tables.eh, self.state.net, self.train_data, self.test,
            self.cfg, cutoffs or [self.cfg.cutoff],
            with_ranks=with_ranks, num_candidates=num_candidates)

    def train(self, epochs=None, callback=None, eval_interval=1,
              checkpoint_path=None, best_path=None, patience=0):
        cfg = self.cfg
        target = cfg.epochs if epochs is None else epochs
        history = []
        stale = 0
        while self.epoch < target:
            record = self._run_epoch()
            evaluated = (self.test and eval_interval
                         and (self.epoch % eval_interval == 0 or self.epoch == target))
            if evaluated:
                report = self.evaluate()
                hr = report.hr[cfg.cutoff]
                record[f"hr@{cfg.cutoff}"] = hr
                record[f"ndcg@{cfg.cutoff}"] = report.ndcg[cfg.cutoff]
                if hr > self.best_hr:
                    self.best_hr = hr
                    stale = 0
                    if best_path:
                        save_checkpoint(best_path, self)
                else:
                    stale += 1
            history.append(record)
            if callback:
                callback(record)
            if checkpoint_path:
                save_checkpoint(checkpoint_path, self)
            if patience and stale >= patience:
                log.info("no improvement for %d evaluations; stopping", stale)
                break
        return history


# -- checkpoints ---------------------------------------------------------

CHECKPOINT_MAGIC = b"MBRECCKP"
CHECKPOINT_VERSION = 1
_PARAM_ORDER = ("e0", "w1", "b1", "w2", "b2", "w3", "b3", "codes")


def save_checkpoint(path, trainer):
    tensors = _tensor_map(trainer.state)
    arrays = []
    for name in _PARAM_ORDER:
        arrays.append((name, tensors[name]))
        arrays.append(("m_" + name, trainer._m[name]))
        arrays.append(("v_" + name, trainer._v[name]))
    header = {
        "format_version": CHECKPOINT_VERSION,
        "num_users": trainer.state.num_users,
        "num_items": trainer.state.num_items,
        "behaviors": list(trainer.train_data.registry.names),
        "dim": trainer.cfg.dim,
        "config_hash": trainer.config_hash,
        "config_text": to_text(trainer.cfg),
        "epoch": trainer.epoch,
        "adam_step": trainer.adam_step,
        "best_hr": trainer.best_hr,
        "rng_state": trainer.rng.bit_generator.state,
        "arrays": [{"name": n, "shape": list(a.shape), "dtype": str(a.dtype)}
                   for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path):
    """Returns (header dict, {name: array})."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 4 or not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    (blob_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    try:
        header = json.loads(raw[off:off + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported version {header.get('format_version')!r}")
    off += blob_len
    arrays = {}
    for meta in header["arrays"]:
        shape = tuple(meta["shape"])
        dtype = np.dtype(meta["dtype"])
        count = int(np.prod(shape, dtype=np.int64))
        if off + count * dtype.itemsize > len(raw):
            raise CheckpointError(f"{path}: truncated array {meta['name']}")
        arrays[meta["name"]] = np.frombuffer(
            raw, dtype=dtype, count=count, offset=off).reshape(shape).copy()
        off += count * dtype.itemsize
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return header, arrays


def resume_trainer(path, train, cfg, test=None):
    """Rebuild a Trainer from a checkpoint written by save_checkpoint.

    The stored configuration hash must match the requested one; training
    continues from the recorded epoch with the recorded generator state,
    so a resumed run reproduces a straight-through run exactly.
    """
    header, arrays = load_checkpoint(path)
    trainer = Trainer(train, cfg, test)
    if header["config_hash"] != trainer.config_hash:
        raise CheckpointError(
            "checkpoint configuration does not match: "
            f"{header['config_hash']} vs {trainer.config_hash}")
    if header["behaviors"] != list(train.registry.names):
        raise CheckpointError("checkpoint behavior registry does not match")
    tensors = _tensor_map(trainer.state)
    for name in _PARAM_ORDER:
        for prefix, store in (("", tensors), ("m_", trainer._m), ("v_", trainer._v)):
            src = arrays[prefix + name]
            dst = store[name]
            if src.shape != dst.shape:
                raise CheckpointError(
                    f"array {prefix + name} has shape {src.shape}, expected {dst.shape}")
            dst[...] = src
    trainer.epoch = int(header["epoch"])
    trainer.adam_step = int(header["adam_step"])
    trainer.best_hr = float(header["best_hr"])
    trainer.rng.bit_generator.state = header["rng_state"]
    return trainer


def state_from_checkpoint(path, train):
    """(state, cfg) for inference from a checkpoint, without a Trainer."""
    header, arrays = load_checkpoint(path)
    cfg = parse_text(header["config_text"], origin=path)
    want = config_hash(cfg, train.num_users, train.num_items, train.registry.count)
    if header["config_hash"] != want:
        raise CheckpointError(
            "checkpoint does not match this dataset or configuration")
    if header["behaviors"] != list(train.registry.names):
        raise CheckpointError("checkpoint behavior registry does not match")
    state = build_state(train, cfg, np.random.default_rng(0))
    tensors = _tensor_map(state)
    for name in _PARAM_ORDER:
        src = arrays[name]
        if src.shape != tensors[name].shape:
            raise CheckpointError(
                f"array {name} has shape {src.shape}, expected {tensors[name].shape}")
        tensors[name][...] = src
    return state, cfg
