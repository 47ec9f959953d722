"""Command line: train, export, serve, eval."""

import argparse
import dataclasses
import sys

from enctrain import __version__
from enctrain.config import TrainConfig, load_config
from enctrain.errors import EnctrainError


def _apply_overrides(cfg: TrainConfig, args, names: list[str]) -> TrainConfig:
    updates = {}
    for name in names:
        value = getattr(args, name)
        if value is not None:
            updates[name] = value
    return dataclasses.replace(cfg, **updates) if updates else cfg


_TRAIN_OVERRIDES = [
    "backbone",
    "learning_rate",
    "weight_decay",
    "temperature",
    "target_steps",
    "epochs",
    "batch_size",
    "max_length",
    "seed",
    "out_dir",
    "device",
    "log_every",
    "eval_every",
    "eval_k",
    "holdout_queries",
    "corpus_passages",
]


def cmd_train(args) -> int:
    from enctrain.train import train

    cfg = load_config(args.config) if args.config else TrainConfig()
    cfg = _apply_overrides(cfg, args, _TRAIN_OVERRIDES)
    path = train(args.pairs, cfg)
    print(f"final checkpoint: {path}")
    return 0


def cmd_export(args) -> int:
    from enctrain.train import export_checkpoint

    export_checkpoint(args.checkpoint, args.out)
    print(f"exported {args.checkpoint} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from enctrain.serve import serve

    serve(args.checkpoint, args.host, args.port)
    return 0


def cmd_eval(args) -> int:
    from enctrain.holdout import evaluate_holdout
    from enctrain.model import Encoder

    encoder = Encoder.load(args.checkpoint, device=args.device, max_length=args.max_length)
    ndcg = evaluate_holdout(
        encoder, args.holdout_queries, args.corpus_passages, args.work_dir, k=args.k
    )
    print(f"nDCG@{args.k}\t{ndcg:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enctrain",
        description="finetune a small bi-encoder on exported training pairs and serve it",
    )
    parser.add_argument("--version", action="version", version=f"enctrain {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="finetune on an exported-pairs JSONL file")
    p.add_argument("--pairs", required=True, help="training export (JSONL)")
    p.add_argument("--config", default=None, help="TrainConfig as a JSON file")
    p.add_argument("--backbone", default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--target-steps", dest="target_steps", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--max-length", dest="max_length", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--device", default=None)
    p.add_argument("--log-every", dest="log_every", type=int, default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p.add_argument("--eval-k", dest="eval_k", type=int, default=None)
    p.add_argument("--holdout-queries", dest="holdout_queries", default=None)
    p.add_argument("--corpus-passages", dest="corpus_passages", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="round-trip a checkpoint to a deployable copy")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve a checkpoint over the embedding HTTP contract")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8491)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="one-shot holdout retrieval evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--holdout-queries", dest="holdout_queries", required=True)
    p.add_argument("--corpus-passages", dest="corpus_passages", required=True)
    p.add_argument("--work-dir", dest="work_dir", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--device", default="cpu")
    p.add_argument("--max-length", dest="max_length", type=int, default=256)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EnctrainError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
