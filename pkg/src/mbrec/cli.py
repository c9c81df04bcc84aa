"""Command line entry points.

Subcommands: prepare (TSV -> split snapshot), train, evaluate, ablate.
Exit codes: 0 success, 1 usage or unexpected failure, 2 bad input data or
checkpoints, 3 numeric failure during training.

Thread pinning (--threads) must happen before numpy/numba load, so heavy
imports live inside the command functions and --threads is read straight
from argv first.
"""

import argparse
import json
import logging
import os
import sys
import time

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMBA_NUM_THREADS",
)

VARIANTS = {
    "full": {},
    "wo-pre": {"no_pretrain": True},
    "wo-enh": {"no_enhancement": True},
    "wo-net": {"no_prefnet": True},
    "r-pr": {"no_prefilter": True},
    "r-po": {"no_postfilter": True},
    "r-al": {"no_prefilter": True, "no_postfilter": True},
    "b-r": {"aux_in_pretrain": False, "aux_in_prefnet": False},
    "n-r": {"aux_in_prefnet": False},
    "agg": {"pretrain_strategy": "agg"},
    "sep": {"pretrain_strategy": "sep"},
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; 2 is reserved for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _apply_threads(argv):
    value = None
    for pos, arg in enumerate(argv):
        if arg == "--threads" and pos + 1 < len(argv):
            value = argv[pos + 1]
        elif arg.startswith("--threads="):
            value = arg.split("=", 1)[1]
    if value and value.isdigit():
        for var in _THREAD_VARS:
            os.environ[var] = value


def build_parser():
    parser = _Parser(prog="mbrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest a TSV log and write a split snapshot")
    p.add_argument("--input", required=True, help="TSV: user, item, behavior[, timestamp]")
    p.add_argument("--behaviors", required=True,
                   help="comma-separated behavior names; last one is the target")
    p.add_argument("--output", required=True, help="split snapshot path")
    p.add_argument("--ids", help="raw-id sidecar path (default: OUTPUT.ids.tsv)")
    p.add_argument("--stats", help="write dataset stats JSON here instead of stdout")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a split snapshot")
    _add_model_args(p)
    p.add_argument("--metrics-file", help="write JSON-per-epoch metrics here instead of stdout")
    p.add_argument("--checkpoint", help="write the latest checkpoint here after every epoch")
    p.add_argument("--best-checkpoint", help="track the best hit-rate checkpoint here")
    p.add_argument("--resume", help="continue from this checkpoint")
    p.add_argument("--eval-interval", type=int, default=1,
                   help="evaluate every N epochs (0 disables)")
    p.add_argument("--patience", type=int, default=0,
                   help="stop after N evaluations without improvement (0 disables)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the held-out items")
    p.add_argument("--data", required=True, help="split snapshot path")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cutoffs", default="10", help="comma-separated ranking cutoffs")
    p.add_argument("--candidates", type=int, default=0,
                   help="rank against N sampled negatives instead of all items")
    p.add_argument("--per-user", help="write a per-user rank TSV here")
    p.add_argument("--report", help="write the report JSON here instead of stdout")
    p.add_argument("--threads", type=int, help="pin BLAS/compile threads")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score model variants")
    _add_model_args(p)
    p.add_argument("--variants", help=f"comma-separated subset of: {','.join(VARIANTS)}")
    p.add_argument("--output", help="write the variant table here instead of stdout")
    p.set_defaults(func=cmd_ablate)
    return parser


def _add_model_args(p):
    p.add_argument("--data", required=True, help="split snapshot path")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--negatives", type=int)
    p.add_argument("--bpr-negatives", type=int, dest="bpr_negatives")
    p.add_argument("--beta", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--layers-pretrain", type=int, dest="layers_pretrain")
    p.add_argument("--layers-enhance", type=int, dest="layers_enhance")
    p.add_argument("--lambda", dest="blend",
                   help='blend policy: "inverse-count" or "fixed:<w>"')
    p.add_argument("--cutoff", type=int)
    for flag in ("no-pretrain", "no-enhancement", "no-prefnet",
                 "no-prefilter", "no-postfilter"):
        p.add_argument("--" + flag, action="store_true", default=None,
                       dest=flag.replace("-", "_"))
    p.add_argument("--dense-updates", action="store_true", default=None,
                   dest="dense_updates", help="update every embedding row each step")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", dest="extra",
                   help="override any config key")
    p.add_argument("--threads", type=int, help="pin BLAS/compile threads")


def _resolve_config(args):
    from . import config as config_mod
    from .errors import DataError

    cfg = config_mod.TrainConfig()
    if args.config:
        cfg = config_mod.parse_file(args.config, base=cfg)
    overrides = {}
    for name in ("dim", "lr", "epochs", "batch_size", "negatives",
                 "bpr_negatives", "beta", "l2", "seed", "layers_pretrain",
                 "layers_enhance", "blend", "cutoff", "no_pretrain",
                 "no_enhancement", "no_prefnet", "no_prefilter",
                 "no_postfilter"):
        overrides[name] = getattr(args, name)
    if args.dense_updates:
        overrides["sparse_updates"] = False
    for item in args.extra or []:
        if "=" not in item:
            raise DataError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = (part.strip() for part in item.split("=", 1))
        overrides[key] = config_mod.coerce_value(key, val)
    cfg = config_mod.apply_overrides(cfg, overrides)
    cfg.validate()
    sys.stderr.write("# effective configuration\n")
    sys.stderr.write(config_mod.to_text(cfg))
    sys.stderr.flush()
    return cfg


def cmd_prepare(args):
    from . import data

    registry = data.BehaviorRegistry(args.behaviors.split(","))
    full = data.load_interactions(args.input, registry)
    split = data.leave_one_out_split(full)
    data.save_split(split, args.output)
    ids_path = args.ids or args.output + ".ids.tsv"
    with open(ids_path, "w", encoding="utf-8") as fh:
        for idx, raw in enumerate(full.user_ids):
            fh.write(f"user\t{idx}\t{raw}\n")
        for idx, raw in enumerate(full.item_ids):
            fh.write(f"item\t{idx}\t{raw}\n")
    counts = split.train.user_target_count
    stats = {
        "users": full.num_users,
        "items": full.num_items,
        "interactions": {name: full.count(b)
                         for b, name in enumerate(registry.names)},
        "train_interactions": split.train.total_interactions(),
        "test_users": len(split.test),
        "mean_target_train_count": float(counts.mean()) if len(counts) else 0.0,
    }
    text = json.dumps(stats, sort_keys=True, indent=2)
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_train(args):
    from . import data, training

    split = data.load_split(args.data)
    cfg = _resolve_config(args)
    if args.resume:
        trainer = training.resume_trainer(args.resume, split.train, cfg, split.test)
    else:
        trainer = training.Trainer(split.train, cfg, split.test)
    out = open(args.metrics_file, "w", encoding="utf-8") if args.metrics_file else sys.stdout

    def emit(record):
        out.write(json.dumps(record, sort_keys=True) + "\n")
        out.flush()

    started = time.monotonic()
    try:
        trainer.train(callback=emit, eval_interval=args.eval_interval,
                      checkpoint_path=args.checkpoint,
                      best_path=args.best_checkpoint, patience=args.patience)
    finally:
        if out is not sys.stdout:
            out.close()
    sys.stderr.write(
        f"trained to epoch {trainer.epoch} in {time.monotonic() - started:.1f}s\n")
    return 0


def cmd_evaluate(args):
    from . import data, evaluation, training

    split = data.load_split(args.data)
    state, cfg = training.state_from_checkpoint(args.checkpoint, split.train)
    tables = training.forward_tables(state, cfg)
    cutoffs = [int(c) for c in args.cutoffs.split(",")]
    report = evaluation.evaluate(
        tables.e, tables.eh, state.net, split.train, split.test, cfg, cutoffs,
        with_ranks=bool(args.per_user), num_candidates=args.candidates)
    text = report.to_json()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.per_user:
        with open(args.per_user, "w", encoding="utf-8") as fh:
            cols = ["user", "rank"]
            for c in report.cutoffs:
                cols += [f"hit@{c}", f"ndcg@{c}"]
            fh.write("\t".join(cols) + "\n")
            for u in sorted(report.per_user_rank):
                rank = report.per_user_rank[u]
                row = [split.train.user_ids[u], str(rank)]
                for c in report.cutoffs:
                    row.append(str(int(evaluation.hr_at_k(rank, c))))
                    row.append(f"{evaluation.ndcg_at_k(rank, c):.6f}")
                fh.write("\t".join(row) + "\n")
    return 0


def cmd_ablate(args):
    import dataclasses

    from . import config as config_mod, data, training
    from .errors import DataError

    split = data.load_split(args.data)
    cfg = _resolve_config(args)
    names = args.variants.split(",") if args.variants else list(VARIANTS)
    rows = []
    for name in names:
        if name not in VARIANTS:
            raise DataError(f"unknown variant {name!r} "
                            f"(expected one of {', '.join(VARIANTS)})")
        variant_cfg = config_mod.apply_overrides(
            dataclasses.replace(cfg), dict(VARIANTS[name])).validate()
        started = time.monotonic()
        trainer = training.Trainer(split.train, variant_cfg, split.test)
        trainer.train(eval_interval=0)
        report = trainer.evaluate()
        rows.append((name, report.hr[variant_cfg.cutoff],
                     report.ndcg[variant_cfg.cutoff]))
        sys.stderr.write(f"{name}: hr@{variant_cfg.cutoff}={rows[-1][1]:.6f} "
                         f"({time.monotonic() - started:.1f}s)\n")
    lines = [f"variant\thr@{cfg.cutoff}\tndcg@{cfg.cutoff}"]
    lines += [f"{name}\t{hr:.6f}\t{ndcg:.6f}" for name, hr, ndcg in rows]
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads(argv)
    logging.basicConfig(
        level=os.environ.get("MBREC_LOG", "WARNING").upper(),
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    from .errors import CheckpointError, DataError, NumericError

    try:
        return args.func(args)
    except CheckpointError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except DataError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except NumericError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
