"""Command-line entry point tying the modules into reproducible pipelines.

Subcommands: embed, search, bm25, eval, compare, analyze, gen, filter, split,
export, stats, convert. Usage errors exit 2 (argparse), runtime errors exit 1
with a one-line diagnostic on standard error. Every subcommand that writes a
primary output also writes `<out>.meta.json` recording the resolved
configuration, its hash, library versions, the kernel backend, and a
timestamp, so any artifact can be traced back to the invocation that made it.

A JSON config file supplied via --config is merged under the flags: a value
from the file applies only where the command line kept the parser default.
Secrets never travel through flags or config; API keys are read from the
DENSEVAL_API_KEY and DENSEVAL_LLM_API_KEY environment variables.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, analysis, datagen, kernels, metrics
from .corpus import (
    Dataset,
    dataset_stats,
    load_dataset,
    load_dataset_jsonl,
    save_dataset,
    save_dataset_jsonl,
    zero_positive_queries,
)
from .embedding import (
    EmbeddingVector,
    EmbedRole,
    ProviderConfig,
    load_vectors,
    make_provider,
    normalize,
    save_vectors,
)
from .errors import DensevalError
from .lexical import (
    DEFAULT_B,
    DEFAULT_K1,
    DictTokenizer,
    IDF_VARIANTS,
    PretokenizedTokenizer,
    build_index,
    bm25_search,
    load_pretokenized,
    unigram_tokenize,
)
from .retrieval import PassageMatrix, RankedList, Run, load_run, save_run, search_topk

DEFAULT_SEED = 13


def _err(msg: str) -> None:
    print(f"denseval: error: {msg}", file=sys.stderr)


def _load_data(path: str) -> Dataset:
    """Accept a directory of passages.tsv/queries.tsv/labels.tsv or a .jsonl file."""
    if os.path.isdir(path):
        return load_dataset(
            os.path.join(path, "passages.tsv"),
            os.path.join(path, "queries.tsv"),
            os.path.join(path, "labels.tsv"),
            name=os.path.basename(os.path.normpath(path)),
        )
    if path.endswith(".jsonl"):
        return load_dataset_jsonl(path)
    raise DensevalError(
        f"--data expects a dataset directory or a .jsonl file, got {path!r}"
    )


def _make_tokenizer(spec: str):
    if spec == "unigram":
        return unigram_tokenize
    kind, sep, arg = spec.partition(":")
    if sep and kind == "dict":
        return DictTokenizer.from_file(arg)
    if sep and kind == "pretok":
        return PretokenizedTokenizer(load_pretokenized(arg))
    raise DensevalError(
        f"unknown tokenizer {spec!r}; expected unigram, dict:FILE, or pretok:FILE"
    )


def _provider_config(args) -> ProviderConfig:
    return ProviderConfig(
        kind=args.provider,
        model=args.model,
        instruction=args.instruction,
        endpoint=args.endpoint,
        vectors_path=args.vectors,
        batch_size=args.batch_size,
        timeout=args.timeout,
        retries=args.retries,
        parallel=args.jobs,
    )


def _write_sidecar(out_path: str, subcommand: str, args: argparse.Namespace) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and not callable(v)
    }
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    meta = {
        "subcommand": subcommand,
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "versions": {
            "denseval": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "kernel_backend": kernels.backend_name(),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_path + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, ensure_ascii=False, indent=2, default=str)
        f.write("\n")


def _load_normalized_vectors(path: str) -> dict[str, EmbeddingVector]:
    return {
        v.id: EmbeddingVector(v.id, normalize(v.values)) for v in load_vectors(path)
    }


# ---------------------------------------------------------------- subcommands


def cmd_embed(args) -> int:
    d = _load_data(args.data)
    cfg = _provider_config(args)
    provider = make_provider(cfg)
    if args.side == "passage":
        items = [(p.id, p.text) for p in d.passages]
        role = EmbedRole.PASSAGE
    else:
        items = [(q.id, q.text) for q in d.queries]
        role = EmbedRole.QUERY
    vectors = provider.embed(items, role)
    save_vectors(vectors, args.out, fmt=args.fmt)
    _write_sidecar(args.out, "embed", args)
    print(f"wrote {len(vectors)} {args.side} vectors to {args.out}")
    return 0


def cmd_search(args) -> int:
    d = _load_data(args.data)
    passage_vecs = _load_normalized_vectors(args.passage_vectors)
    query_vecs = _load_normalized_vectors(args.query_vectors)
    missing = [p.id for p in d.passages if p.id not in passage_vecs]
    if missing:
        raise DensevalError(f"no vector for passage ids: {missing[:5]}")
    pm = PassageMatrix([passage_vecs[p.id] for p in d.passages])
    lists = {}
    for q in d.queries:
        if q.id not in query_vecs:
            raise DensevalError(f"no vector for query id {q.id!r}")
        lists[q.id] = search_topk(query_vecs[q.id], pm, args.k)
    run = Run(name=args.run_name, lists=lists, metadata={"k": args.k})
    save_run(run, args.out)
    _write_sidecar(args.out, "search", args)
    print(f"wrote run {run.name!r} ({len(lists)} queries, k={args.k}) to {args.out}")
    return 0


def cmd_bm25(args) -> int:
    d = _load_data(args.data)
    tokenizer = _make_tokenizer(args.tokenizer)
    index = build_index(
        d.passages, tokenizer, k1=args.k1, b=args.b, idf_variant=args.idf
    )
    lists = {}
    for q in d.queries:
        hits = bm25_search(index, q.text, tokenizer, args.k)
        lists[q.id] = RankedList(query_id=q.id, entries=hits)
    run = Run(
        name=args.run_name,
        lists=lists,
        metadata={"k": args.k, "k1": args.k1, "b": args.b, "idf": args.idf},
    )
    save_run(run, args.out)
    _write_sidecar(args.out, "bm25", args)
    print(f"wrote run {run.name!r} ({len(lists)} queries, k={args.k}) to {args.out}")
    return 0


def cmd_eval(args) -> int:
    d = _load_data(args.data)
    run = load_run(args.run)
    cfg = metrics.MetricConfig(
        cutoffs=tuple(int(c) for c in args.cutoffs.split(",")), gain=args.gain
    )
    report = metrics.evaluate_run(run, d, cfg)
    for k in report.cutoffs:
        print(f"nDCG@{k}\t{report.aggregate[k]:.2f}")
    print(f"queries evaluated\t{len(report.per_query)}")
    print(f"queries excluded (no positives)\t{len(report.excluded)}")
    payload = {
        "run": report.run_name,
        "gain": report.gain,
        "aggregate": {str(k): report.aggregate[k] for k in report.cutoffs},
        "n_evaluated": len(report.per_query),
        "excluded": report.excluded,
    }
    if args.by_type:
        by_type = metrics.by_type_report(report, d, grouping=args.by_type, cutoff=args.cutoff)
        payload["by_type"] = by_type
        for group, row in by_type.items():
            print(f"{group}\tn={row['n']}\tnDCG@{args.cutoff}={row['ndcg']:.2f}")
    if args.per_query:
        payload["per_query"] = {
            qid: {str(k): v for k, v in vals.items()}
            for qid, vals in report.per_query.items()
        }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)
            f.write("\n")
        _write_sidecar(args.out, "eval", args)
    return 0


def cmd_compare(args) -> int:
    d = _load_data(args.data)
    cfg = metrics.MetricConfig(cutoffs=(args.cutoff,), gain=args.gain)
    rep_a = metrics.evaluate_run(load_run(args.run_a), d, cfg)
    rep_b = metrics.evaluate_run(load_run(args.run_b), d, cfg)
    table = metrics.compare_runs(
        rep_a, rep_b, d, epsilon=args.epsilon, cutoff=args.cutoff, grouping=args.grouping
    )
    header = ["group", "n", "a", "b", "a>b", "a<b", "a=b"]
    print("\t".join(header))
    for group, row in table.items():
        print(
            f"{group}\t{row['n']}\t{row['ndcg_a']:.2f}\t{row['ndcg_b']:.2f}"
            f"\t{100 * row['gt']:.0f}%\t{100 * row['lt']:.0f}%\t{100 * row['eq']:.0f}%"
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(table, f, ensure_ascii=False, indent=2)
            f.write("\n")
        _write_sidecar(args.out, "compare", args)
    return 0


def cmd_analyze(args) -> int:
    d = _load_data(args.data)
    run = load_run(args.run)
    tokenizer = _make_tokenizer(args.tokenizer)
    records = analysis.false_negatives(
        run,
        d,
        k=args.k,
        criterion=args.criterion,
        tokenizer=tokenizer,
        coverage_threshold=args.coverage_threshold,
    )
    records += analysis.false_positives(run, d, k=args.k)
    if args.kinds:
        records = analysis.filter_records(records, kinds=args.kinds.split(","))
    analysis.write_worksheet(records, d, args.out)
    _write_sidecar(args.out, "analyze", args)
    counts: dict[str, int] = {}
    for r in records:
        counts[r.kind] = counts.get(r.kind, 0) + 1
    for kind in sorted(counts):
        print(f"{kind}\t{counts[kind]}")
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_gen(args) -> int:
    d = _load_data(args.data)
    cfg = datagen.GenConfig(
        kinds=tuple(args.kinds.split(",")),
        endpoint=args.endpoint,
        model=args.model,
        temperature=args.temperature,
        max_per_kind=args.max_per_kind,
        theta=args.theta,
        parallel=args.jobs,
        timeout=args.timeout,
        retries=args.retries,
        log_path=args.llm_log,
    )
    queries = datagen.generate_queries(d.passages, cfg)
    datagen.save_generated(queries, args.out)
    _write_sidecar(args.out, "gen", args)
    print(f"generated {len(queries)} queries from {len(d.passages)} passages")
    return 0


def cmd_filter(args) -> int:
    train = _load_data(args.train_data)
    test = _load_data(args.data)
    tokenizer = _make_tokenizer(args.tokenizer) if args.granularity == "word" else None
    kept, dropped = datagen.filter_leakage(
        train.passages,
        test.passages,
        theta=args.theta,
        measure=args.measure,
        granularity=args.granularity,
        tokenizer=tokenizer,
        jobs=args.jobs,
    )
    with open(args.out, "w", encoding="utf-8") as f:
        for p in kept:
            f.write(f"{p.id}\t{p.text}\n")
    if args.dropped_out:
        with open(args.dropped_out, "w", encoding="utf-8") as f:
            for p in dropped:
                f.write(f"{p.id}\t{p.text}\n")
    _write_sidecar(args.out, "filter", args)
    print(f"kept {len(kept)}, dropped {len(dropped)} (theta={args.theta})")
    return 0


def cmd_split(args) -> int:
    queries = datagen.load_generated(args.queries)
    train, holdout = datagen.split_holdout(queries, args.fraction, args.seed)
    datagen.save_generated(train, args.train_out)
    datagen.save_generated(holdout, args.holdout_out)
    _write_sidecar(args.train_out, "split", args)
    print(f"train {len(train)}, holdout {len(holdout)} (fraction={args.fraction}, seed={args.seed})")
    return 0


def cmd_export(args) -> int:
    queries = datagen.load_generated(args.queries)
    d = _load_data(args.data)
    datagen.export_training(queries, d.passages, args.out)
    _write_sidecar(args.out, "export", args)
    print(f"wrote {len(queries)} training records to {args.out}")
    return 0


def cmd_stats(args) -> int:
    d = _load_data(args.data)
    tokenizer = _make_tokenizer(args.tokenizer)
    if args.queries:
        queries = datagen.load_generated(args.queries)
        table = datagen.gen_stats(queries, d.passages, tokenizer)
        for kind, row in table.items():
            print(
                f"{kind}\tqueries={row['queries']:.0f}"
                f"\tqueries/passage={row['queries_per_passage']:.2f}"
                f"\ttokens/query={row['tokens_per_query']:.2f}"
            )
        return 0
    s = dataset_stats(d, tokenizer)
    print(f"passages\t{s.n_passages}")
    print(
        f"passage tokens\tmin={s.passage_tokens[0]}\tmax={s.passage_tokens[1]}"
        f"\tavg={s.passage_tokens[2]:.2f}"
    )
    print(f"queries\t{s.n_queries}")
    print(
        f"query tokens\tmin={s.query_tokens[0]}\tmax={s.query_tokens[1]}"
        f"\tavg={s.query_tokens[2]:.2f}"
    )
    print(f"positive pairs\t{s.positive_pairs}")
    print(f"zero-positive queries\t{len(zero_positive_queries(d))}")
    return 0


def cmd_convert(args) -> int:
    if args.vectors:
        vectors = load_vectors(args.vectors)
        save_vectors(vectors, args.out, fmt=args.fmt)
        _write_sidecar(args.out, "convert", args)
        print(f"wrote {len(vectors)} vectors to {args.out} ({args.fmt})")
        return 0
    d = _load_data(args.data)
    if args.out.endswith(".jsonl"):
        save_dataset_jsonl(d, args.out)
        _write_sidecar(args.out, "convert", args)
        print(f"wrote dataset {d.name!r} to {args.out}")
        return 0
    os.makedirs(args.out, exist_ok=True)
    save_dataset(
        d,
        os.path.join(args.out, "passages.tsv"),
        os.path.join(args.out, "queries.tsv"),
        os.path.join(args.out, "labels.tsv"),
    )
    _write_sidecar(os.path.join(args.out, "passages.tsv"), "convert", args)
    print(f"wrote dataset {d.name!r} to {args.out}/")
    return 0


# -------------------------------------------------------------------- parser


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=["vector-file", "remote"], default="vector-file")
    p.add_argument("--vectors", default=None, help="vector file for the vector-file provider")
    p.add_argument("--endpoint", default=None, help="embedding service URL")
    p.add_argument("--model", default="", help="model name sent to the service")
    p.add_argument("--instruction", default="", help="query-side instruction prefix")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--retries", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denseval",
        description="Fine-grained dense-retrieval evaluation and training-data tooling.",
    )
    parser.add_argument("--version", action="version", version=f"denseval {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser, data: bool = True) -> None:
        if data:
            p.add_argument("--data", required=True, help="dataset directory or .jsonl file")
        p.add_argument("--config", default=None, help="JSON config merged under flags")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("embed", help="embed one side of a dataset into a vector file")
    common(p)
    p.add_argument("--side", choices=["passage", "query"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fmt", choices=["binary", "text"], default="binary")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("search", help="exact top-k dense retrieval from vector files")
    common(p)
    p.add_argument("--passage-vectors", required=True)
    p.add_argument("--query-vectors", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--run-name", default="dense")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bm25", help="lexical retrieval baseline run")
    common(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--k1", type=float, default=DEFAULT_K1)
    p.add_argument("--b", type=float, default=DEFAULT_B)
    p.add_argument("--idf", choices=list(IDF_VARIANTS), default="lucene")
    p.add_argument("--tokenizer", default="unigram", help="unigram | dict:FILE | pretok:FILE")
    p.add_argument("--run-name", default="bm25")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bm25)

    p = sub.add_parser("eval", help="graded nDCG report for a run")
    common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--cutoffs", default="1,5,10")
    p.add_argument("--cutoff", type=int, default=10, help="cutoff for --by-type rows")
    p.add_argument("--gain", choices=list(metrics.GAINS), default="linear")
    p.add_argument("--by-type", choices=list(metrics.GROUPINGS), default=None)
    p.add_argument("--per-query", action="store_true")
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="per-type win/loss/tie table for two runs")
    common(p)
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--cutoff", type=int, default=10)
    p.add_argument("--gain", choices=list(metrics.GAINS), default="linear")
    p.add_argument("--grouping", choices=list(metrics.GROUPINGS), default="coarse5")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("analyze", help="false-negative/false-positive worksheet")
    common(p)
    p.add_argument("--run", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--criterion", choices=list(analysis.FN_CRITERIA), default="bm25")
    p.add_argument("--coverage-threshold", type=float, default=1.0)
    p.add_argument("--tokenizer", default="unigram")
    p.add_argument("--kinds", default=None, help="comma-separated record kinds to keep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen", help="generate training queries with an LLM")
    common(p)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--kinds", default="SM,KW")
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--max-per-kind", type=int, default=20)
    p.add_argument("--theta", type=float, default=0.6)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--llm-log", default=None, help="JSONL request/response audit log")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("filter", help="drop training passages leaking into the test set")
    common(p)
    p.add_argument("--train-data", required=True, help="training passages (dataset dir or .jsonl)")
    p.add_argument("--theta", type=float, default=0.6)
    p.add_argument("--measure", choices=list(datagen.ROUGE_MEASURES), default="f1")
    p.add_argument(
        "--granularity", choices=list(datagen.ROUGE_GRANULARITIES), default="char"
    )
    p.add_argument("--tokenizer", default="unigram")
    p.add_argument("--out", required=True, help="kept passages TSV")
    p.add_argument("--dropped-out", default=None, help="dropped passages TSV")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("split", help="stratified train/holdout split of generated queries")
    common(p, data=False)
    p.add_argument("--queries", required=True)
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--train-out", required=True)
    p.add_argument("--holdout-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("export", help="write training pairs consumed by trainers")
    common(p)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("stats", help="dataset or generated-query statistics")
    common(p)
    p.add_argument("--queries", default=None, help="generated queries JSONL for per-kind stats")
    p.add_argument("--tokenizer", default="unigram")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("convert", help="convert dataset or vector file formats")
    common(p, data=False)
    p.add_argument("--data", default=None, help="dataset directory or .jsonl file")
    p.add_argument("--vectors", default=None, help="vector file to convert instead")
    p.add_argument("--fmt", choices=["binary", "text"], default="text")
    p.add_argument("--out", required=True, help=".jsonl file or directory (datasets)")
    p.set_defaults(func=cmd_convert)

    return parser


def _merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    """Apply config-file values wherever the command line kept the default."""
    if not getattr(args, "config", None):
        return
    with open(args.config, encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as exc:
            raise DensevalError(f"config {args.config}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise DensevalError(f"config {args.config}: expected a JSON object")
    sub_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    subparser = sub_action.choices[args.subcommand]
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise DensevalError(f"config {args.config}: unknown key {key!r}")
        if getattr(args, dest) == subparser.get_default(dest):
            setattr(args, dest, value)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(parser, args)
        return args.func(args)
    except DensevalError as exc:
        _err(str(exc))
        return 1
    except OSError as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
