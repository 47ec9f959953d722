"""Exact brute-force top-k retrieval over unit-norm embeddings.

Scoring contract: each score is the float64-accumulated dot product rounded
to float32; ranking orders by (score descending, passage id ascending). The
passage matrix keeps rows sorted by id, so a stable sort on the score array
realizes the id tie-break without comparing strings per pair.

Run files use the common six-column ranked-run layout:
    query_id Q0 passage_id rank score run_name
"""

from __future__ import annotations

import concurrent.futures
import datetime
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import Dataset
from .embedding import (
    EmbeddingVector,
    EmbedRole,
    ProviderConfig,
    embed_batch,
    make_provider,
)
from .errors import DuplicateIdError, FileFormatError, IntegrityError, ParseError


@dataclass
class RankedList:
    query_id: str
    entries: list[tuple[str, float]]  # (passage_id, score), best first


@dataclass
class Run:
    name: str
    lists: dict[str, RankedList] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


class PassageMatrix:
    """Stacked unit-norm passage vectors, rows sorted by passage id."""

    def __init__(self, vectors: list[EmbeddingVector]):
        if not vectors:
            raise IntegrityError("empty passage collection")
        dims = {v.values.shape[0] for v in vectors}
        if len(dims) != 1:
            raise IntegrityError(f"mixed vector dimensions: {sorted(dims)}")
        ordered = sorted(vectors, key=lambda v: v.id)
        ids = [v.id for v in ordered]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("duplicate passage ids in vector collection")
        self.ids = ids
        self.matrix = np.ascontiguousarray(
            np.stack([v.values for v in ordered]).astype(np.float32)
        )

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def search_topk(
    query_vec: EmbeddingVector, passages: PassageMatrix | list[EmbeddingVector], k: int
) -> RankedList:
    """Exact top-k by dot product; deterministic id tie-break."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pm = passages if isinstance(passages, PassageMatrix) else PassageMatrix(passages)
    if query_vec.values.shape[0] != pm.dim:
        raise IntegrityError(
            f"query dimension {query_vec.values.shape[0]} != passage dimension {pm.dim}"
        )
    scores = kernels.dot_scores(pm.matrix, query_vec.values)
    top = np.argsort(-scores, kind="stable")[:k]
    return RankedList(
        query_id=query_vec.id,
        entries=[(pm.ids[i], float(scores[i])) for i in top],
    )


def run_all(
    d: Dataset,
    provider_cfg: ProviderConfig,
    k: int,
    run_name: str = "dense",
    jobs: int = 1,
) -> Run:
    """Embed every passage and query once, then search all queries.

    Zero-positive queries are included; metric-time filtering handles them.
    """
    provider = make_provider(provider_cfg)
    passage_vecs = embed_batch(
        [(p.id, p.text) for p in d.passages], EmbedRole.PASSAGE, provider_cfg, provider
    )
    query_vecs = embed_batch(
        [(q.id, q.text) for q in d.queries], EmbedRole.QUERY, provider_cfg, provider
    )
    pm = PassageMatrix(passage_vecs)

    run = Run(
        name=run_name,
        metadata={
            **provider_cfg.metadata(),
            "k": k,
            "backend": kernels.backend_name(),
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    )
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            for ranked in pool.map(lambda qv: search_topk(qv, pm, k), query_vecs):
                run.lists[ranked.query_id] = ranked
    else:
        for qv in query_vecs:
            ranked = search_topk(qv, pm, k)
            run.lists[ranked.query_id] = ranked
    return run


# ---------------------------------------------------------------------------
# Run files

def save_run(run: Run, path) -> None:
    name = run.name.replace(" ", "_") or "run"
    with open(path, "w", encoding="utf-8") as f:
        for qid in sorted(run.lists):
            for rank, (pid, score) in enumerate(run.lists[qid].entries, 1):
                f.write(f"{qid} Q0 {pid} {rank} {score:.6f} {name}\n")


def load_run(path) -> Run:
    lists: dict[str, list[tuple[int, str, float]]] = {}
    name = "run"
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ParseError(path, lineno, f"expected 6 columns, got {len(fields)}")
            qid, _q0, pid, rank_raw, score_raw, name = fields
            try:
                rank = int(rank_raw)
                score = float(score_raw)
            except ValueError:
                raise ParseError(path, lineno, "rank/score must be numeric") from None
            lists.setdefault(qid, []).append((rank, pid, score))

    run = Run(name=name)
    for qid, rows in lists.items():
        rows.sort(key=lambda r: r[0])
        pids = [pid for _, pid, _ in rows]
        if len(set(pids)) != len(pids):
            raise FileFormatError(f"{path}: duplicate passage in ranking for query {qid!r}")
        run.lists[qid] = RankedList(query_id=qid, entries=[(pid, score) for _, pid, score in rows])
    return run
