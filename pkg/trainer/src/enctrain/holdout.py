"""Retrieval evaluation of a checkpoint through the evaluation toolkit's CLI.

This package never imports the toolkit; it talks to it through documented
file formats (TSV dataset trio, text vector files, JSON eval report) and the
`denseval` command line, run as a subprocess.
"""

import json
import os
import subprocess
import sys

import torch

from enctrain.errors import DataError, TrainingError

QTYPE_PLACEHOLDER = "SingletonObject"  # synthetic queries carry no real type
EMBED_CHUNK = 64


def read_passages_tsv(path) -> list[tuple[str, str]]:
    rows = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 2 or not fields[0] or not fields[1]:
                raise DataError(f"{path}:{lineno}: expected 'id<TAB>text'")
            if fields[0] in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {fields[0]!r}")
            seen.add(fields[0])
            rows.append((fields[0], fields[1]))
    if not rows:
        raise DataError(f"{path}: no rows")
    return rows


def read_generated_queries(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e})") from None
            if not all(isinstance(obj.get(k), str) and obj.get(k) for k in ("passage_id", "text")):
                raise DataError(f"{path}:{lineno}: need non-empty 'passage_id' and 'text'")
            out.append(obj)
    if not out:
        raise DataError(f"{path}: no queries")
    return out


def write_vectors(ids: list[str], matrix: torch.Tensor, path) -> None:
    """Text vector-file format: id <TAB> space-joined float values."""
    values = matrix.detach().cpu().numpy()
    with open(path, "w", encoding="utf-8") as f:
        for i, vid in enumerate(ids):
            f.write(vid + "\t" + " ".join(repr(float(x)) for x in values[i]) + "\n")


def _embed_all(encoder, texts: list[str]) -> torch.Tensor:
    encoder.eval_mode()
    chunks = []
    with torch.no_grad():
        for i in range(0, len(texts), EMBED_CHUNK):
            chunks.append(encoder.embed(texts[i : i + EMBED_CHUNK]))
    return torch.cat(chunks, dim=0)


def _denseval(*argv: str) -> None:
    cmd = [sys.executable, "-m", "denseval", *argv]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise TrainingError(
            f"denseval {argv[0]} failed (exit {proc.returncode}): {proc.stderr.strip()[:500]}"
        )


def build_holdout_dataset(holdout_queries_path, corpus_passages_path, out_dir) -> None:
    """Materialize a dataset directory: corpus passages, one grade-2 label per
    synthetic query pointing at its source passage."""
    passages = read_passages_tsv(corpus_passages_path)
    known = {pid for pid, _ in passages}
    queries = read_generated_queries(holdout_queries_path)
    for q in queries:
        if q["passage_id"] not in known:
            raise DataError(
                f"holdout query references unknown passage id {q['passage_id']!r}"
            )
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "passages.tsv"), "w", encoding="utf-8") as f:
        for pid, text in passages:
            f.write(f"{pid}\t{text}\n")
    with open(os.path.join(out_dir, "queries.tsv"), "w", encoding="utf-8") as f:
        for i, q in enumerate(queries):
            f.write(f"h{i:05d}\t{q['text']}\t{QTYPE_PLACEHOLDER}\n")
    with open(os.path.join(out_dir, "labels.tsv"), "w", encoding="utf-8") as f:
        for i, q in enumerate(queries):
            f.write(f"h{i:05d}\t{q['passage_id']}\t2\n")


def evaluate_on_dataset(encoder, data_dir, work_dir, cutoffs=(1, 5, 10), k=10) -> dict[int, float]:
    """Embed a dataset directory with `encoder`, run search + eval, return
    the aggregate nDCG per cutoff (0-100 scale)."""
    os.makedirs(work_dir, exist_ok=True)
    passages = read_passages_tsv(os.path.join(data_dir, "passages.tsv"))
    query_rows = []
    with open(os.path.join(data_dir, "queries.tsv"), encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(f"queries.tsv: expected 'id<TAB>text<TAB>type'")
            query_rows.append((fields[0], fields[1]))

    pvec_path = os.path.join(work_dir, "passages.vec")
    qvec_path = os.path.join(work_dir, "queries.vec")
    write_vectors([pid for pid, _ in passages], _embed_all(encoder, [t for _, t in passages]), pvec_path)
    write_vectors([qid for qid, _ in query_rows], _embed_all(encoder, [t for _, t in query_rows]), qvec_path)

    run_path = os.path.join(work_dir, "run.trec")
    report_path = os.path.join(work_dir, "report.json")
    _denseval(
        "search",
        "--data", data_dir,
        "--passage-vectors", pvec_path,
        "--query-vectors", qvec_path,
        "--k", str(max(k, max(cutoffs))),
        "--out", run_path,
    )
    _denseval(
        "eval",
        "--data", data_dir,
        "--run", run_path,
        "--cutoffs", ",".join(str(c) for c in cutoffs),
        "--out", report_path,
    )
    with open(report_path, encoding="utf-8") as f:
        report = json.load(f)
    return {int(c): float(v) for c, v in report["aggregate"].items()}


def evaluate_holdout(encoder, holdout_queries_path, corpus_passages_path, work_dir, k=10) -> float:
    """nDCG@k of the encoder retrieving each holdout query's source passage."""
    data_dir = os.path.join(work_dir, "holdout_data")
    build_holdout_dataset(holdout_queries_path, corpus_passages_path, data_dir)
    scores = evaluate_on_dataset(encoder, data_dir, work_dir, cutoffs=(k,), k=k)
    return scores[k]
