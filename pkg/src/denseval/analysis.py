"""Error taxonomy over ranked runs: missed positives and false positives.

A false negative is a positively labeled passage absent from a query's top-k.
It is a LiteralMiss when the passage is lexically reachable from the query
(BM25 would have surfaced it, or its tokens cover the query's), otherwise a
SemanticMiss. A false positive is a grade-0 passage ranked at a position where
an unreturned positive still existed.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Dataset
from .errors import CoverageError
from .lexical import Bm25Index, bm25_search, build_index, unigram_tokenize
from .retrieval import Run

FN_KINDS = ("LiteralMiss", "SemanticMiss")
FN_CRITERIA = ("bm25", "containment")


@dataclass(frozen=True)
class ErrorRecord:
    query_id: str
    passage_id: str
    kind: str  # LiteralMiss | SemanticMiss | FalsePositive
    grade: int
    rank: int | None  # rank in the run for false positives, None for misses
    detail: str


def _covered(query_tokens: list[str], passage_tokens: list[str], threshold: float) -> bool:
    if not query_tokens:
        return False
    hits = sum(1 for t in query_tokens if t in set(passage_tokens))
    return hits / len(query_tokens) >= threshold


def false_negatives(
    run: Run,
    d: Dataset,
    k: int = 10,
    criterion: str = "bm25",
    tokenizer=None,
    index: Bm25Index | None = None,
    coverage_threshold: float = 1.0,
) -> list[ErrorRecord]:
    """Positives missing from each query's top-k, split literal vs semantic.

    With `criterion="bm25"` a miss is literal when the passage appears in the
    BM25 top-k for the same query (an index can be passed in to avoid
    rebuilding). With `criterion="containment"` it is literal when passage
    tokens cover at least `coverage_threshold` of the query's tokens.
    """
    if criterion not in FN_CRITERIA:
        raise ValueError(f"criterion must be one of {FN_CRITERIA}")
    tokenizer = tokenizer or unigram_tokenize
    if criterion == "bm25" and index is None:
        index = build_index(d.passages, tokenizer)

    out: list[ErrorRecord] = []
    for q in d.queries:
        if q.id not in run.lists:
            continue
        row = d.labels.row(q.id)
        returned = {pid for pid, _ in run.lists[q.id].entries[:k]}
        missed = sorted(pid for pid, g in row.items() if g > 0 and pid not in returned)
        if not missed:
            continue
        if criterion == "bm25":
            lexical_hits = {pid for pid, _ in bm25_search(index, q.text, tokenizer, k)}
        else:
            qtoks = tokenizer(q.text)
            lexical_hits = {
                pid
                for pid in missed
                if _covered(qtoks, tokenizer(d.passage(pid).text), coverage_threshold)
            }
        for pid in missed:
            literal = pid in lexical_hits
            out.append(
                ErrorRecord(
                    query_id=q.id,
                    passage_id=pid,
                    kind="LiteralMiss" if literal else "SemanticMiss",
                    grade=row[pid],
                    rank=None,
                    detail=(
                        f"positive (grade {row[pid]}) outside top-{k}; "
                        + ("lexically reachable" if literal else "not lexically reachable")
                    ),
                )
            )
    return out


def false_positives(run: Run, d: Dataset, k: int = 10) -> list[ErrorRecord]:
    """Grade-0 passages occupying ranks where an unreturned positive remained.

    Walking each list top down, a zero-grade entry at rank r is flagged only
    while fewer positives have been seen above r than the query has in total;
    once every positive is accounted for, lower-ranked zeros are legitimate
    filler rather than errors.
    """
    out: list[ErrorRecord] = []
    for q in d.queries:
        if q.id not in run.lists:
            continue
        row = d.labels.row(q.id)
        total_pos = sum(1 for g in row.values() if g > 0)
        if total_pos == 0:
            continue
        seen_pos = 0
        for rank, (pid, _score) in enumerate(run.lists[q.id].entries[:k], 1):
            grade = row.get(pid, 0)
            if grade > 0:
                seen_pos += 1
            elif seen_pos < total_pos:
                out.append(
                    ErrorRecord(
                        query_id=q.id,
                        passage_id=pid,
                        kind="FalsePositive",
                        grade=0,
                        rank=rank,
                        detail=f"grade 0 at rank {rank} with {total_pos - seen_pos} positive(s) unplaced",
                    )
                )
    return out


def filter_records(
    records: list[ErrorRecord],
    kinds: list[str] | None = None,
    query_ids: list[str] | None = None,
) -> list[ErrorRecord]:
    kinds_set = set(kinds) if kinds else None
    qids_set = set(query_ids) if query_ids else None
    return [
        r
        for r in records
        if (kinds_set is None or r.kind in kinds_set)
        and (qids_set is None or r.query_id in qids_set)
    ]


def write_worksheet(records: list[ErrorRecord], d: Dataset, path: str) -> None:
    """TSV worksheet for manual triage, one record per row with both texts."""
    header = ["query_id", "query_text", "passage_id", "passage_text", "kind", "grade", "rank", "detail"]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(header) + "\n")
        for r in records:
            try:
                qtext = d.query(r.query_id).text
                ptext = d.passage(r.passage_id).text
            except Exception as exc:
                raise CoverageError(f"record references unknown id: {exc}") from exc
            f.write(
                "\t".join(
                    [
                        r.query_id,
                        qtext,
                        r.passage_id,
                        ptext,
                        r.kind,
                        str(r.grade),
                        "" if r.rank is None else str(r.rank),
                        r.detail,
                    ]
                )
                + "\n"
            )
