"""Graded nDCG@k, macro aggregation, per-type decomposition, run comparison.

DCG@k = sum_{i=1..k} gain(rel_i) / log2(i+1); the ideal DCG ranks the query's
grades in descending order. Gain is linear (g(r)=r) by default, exponential
(2^r - 1) behind a flag; the two agree on binary labels. Queries without any
positive label are excluded from aggregation and reported as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .corpus import COARSE_GROUPS, Dataset, QueryType, zero_positive_queries
from .errors import CoverageError, UndefinedMetricError
from .retrieval import RankedList, Run

GAINS = ("linear", "exponential")


@dataclass
class MetricConfig:
    cutoffs: tuple[int, ...] = (1, 5, 10)
    gain: str = "linear"
    tie_band: float = 0.01

    def __post_init__(self):
        if not self.cutoffs:
            raise ValueError("at least one cutoff required")
        if any(k < 1 for k in self.cutoffs):
            raise ValueError("cutoffs must be positive")
        if list(self.cutoffs) != sorted(set(self.cutoffs)):
            raise ValueError("cutoffs must be strictly increasing")
        if self.gain not in GAINS:
            raise ValueError(f"gain must be one of {GAINS}")


@dataclass
class MetricReport:
    run_name: str
    cutoffs: tuple[int, ...]
    gain: str
    per_query: dict[str, dict[int, float]]  # query_id -> cutoff -> ndcg in [0,1]
    aggregate: dict[int, float]  # cutoff -> macro mean * 100
    excluded: list[str]
    by_type: dict[str, dict] | None = None


def _gain(rel: int, gain: str) -> float:
    return float(rel) if gain == "linear" else float(2**rel - 1)


def ndcg_at_k(
    ranked: RankedList | list[tuple[str, float]],
    qrels_row: dict[str, int],
    k: int,
    gain: str = "linear",
) -> float:
    """nDCG@k for one query. `qrels_row` maps passage id -> grade (0s may be absent)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    positives = sorted((g for g in qrels_row.values() if g > 0), reverse=True)
    if not positives:
        raise UndefinedMetricError("nDCG undefined for a query with no positive labels")
    entries = ranked.entries if isinstance(ranked, RankedList) else ranked
    dcg = 0.0
    for i, (pid, _score) in enumerate(entries[:k], 1):
        rel = qrels_row.get(pid, 0)
        if rel > 0:
            dcg += _gain(rel, gain) / math.log2(i + 1)
    idcg = sum(_gain(g, gain) / math.log2(i + 1) for i, g in enumerate(positives[:k], 1))
    return dcg / idcg


def evaluate_run(run: Run, d: Dataset, cfg: MetricConfig | None = None) -> MetricReport:
    """Per-query nDCG at each cutoff plus the macro mean * 100.

    Zero-positive queries are excluded; every remaining dataset query must be
    present in the run, and the run must not mention unknown queries.
    """
    cfg = cfg or MetricConfig()
    excluded = set(zero_positive_queries(d))
    dataset_qids = {q.id for q in d.queries}

    unknown = sorted(set(run.lists) - dataset_qids)
    if unknown:
        raise CoverageError(f"run contains queries not in the dataset: {unknown}")
    missing = sorted(dataset_qids - excluded - set(run.lists))
    if missing:
        raise CoverageError(f"run is missing queries: {missing}")

    per_query: dict[str, dict[int, float]] = {}
    for q in d.queries:
        if q.id in excluded:
            continue
        row = d.labels.row(q.id)
        for pid, _ in run.lists[q.id].entries:
            d.passage(pid)  # unknown passage ids are an error, not grade 0
        per_query[q.id] = {
            k: ndcg_at_k(run.lists[q.id], row, k, cfg.gain) for k in cfg.cutoffs
        }

    aggregate = {}
    for k in cfg.cutoffs:
        vals = [v[k] for v in per_query.values()]
        aggregate[k] = 100.0 * sum(vals) / len(vals) if vals else 0.0
    return MetricReport(
        run_name=run.name,
        cutoffs=tuple(cfg.cutoffs),
        gain=cfg.gain,
        per_query=per_query,
        aggregate=aggregate,
        excluded=sorted(excluded),
    )


GROUPINGS = ("fine8", "coarse5")


def _group_of(qtype: QueryType, grouping: str) -> str:
    return qtype.value if grouping == "fine8" else qtype.coarse_group


def _group_order(grouping: str) -> list[str]:
    if grouping == "fine8":
        return [t.value for t in QueryType]
    return list(COARSE_GROUPS)


def by_type_report(
    report: MetricReport, d: Dataset, grouping: str = "coarse5", cutoff: int = 10
) -> dict[str, dict]:
    """Mean nDCG@cutoff * 100 per query-type group, in canonical group order."""
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    if cutoff not in report.cutoffs:
        raise ValueError(f"cutoff {cutoff} not in report cutoffs {report.cutoffs}")
    buckets: dict[str, list[float]] = {}
    for q in d.queries:
        if q.id not in report.per_query:
            continue
        buckets.setdefault(_group_of(q.qtype, grouping), []).append(
            report.per_query[q.id][cutoff]
        )
    out = {}
    for group in _group_order(grouping):
        vals = buckets.get(group)
        if vals:
            out[group] = {"n": len(vals), "ndcg": 100.0 * sum(vals) / len(vals)}
    return out


def compare_runs(
    a: MetricReport,
    b: MetricReport,
    d: Dataset,
    epsilon: float = 0.01,
    cutoff: int = 10,
    grouping: str = "coarse5",
) -> dict[str, dict]:
    """Per-type fractions of queries where a beats / trails / ties b.

    Ties are |a - b| <= epsilon on the [0,1] nDCG scale. Rows carry the mean
    nDCG of both runs for context; an "Overall" row aggregates all queries.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    if set(a.per_query) != set(b.per_query):
        only_a = sorted(set(a.per_query) - set(b.per_query))
        only_b = sorted(set(b.per_query) - set(a.per_query))
        raise CoverageError(f"query sets differ (only in a: {only_a}, only in b: {only_b})")
    if cutoff not in a.cutoffs or cutoff not in b.cutoffs:
        raise ValueError(f"cutoff {cutoff} missing from one of the reports")

    rows: dict[str, dict] = {}
    groups = _group_order(grouping) + ["Overall"]
    counts = {g: {"gt": 0, "lt": 0, "eq": 0, "sum_a": 0.0, "sum_b": 0.0} for g in groups}
    for q in d.queries:
        if q.id not in a.per_query:
            continue
        va, vb = a.per_query[q.id][cutoff], b.per_query[q.id][cutoff]
        for g in (_group_of(q.qtype, grouping), "Overall"):
            c = counts[g]
            c["sum_a"] += va
            c["sum_b"] += vb
            if abs(va - vb) <= epsilon:
                c["eq"] += 1
            elif va > vb:
                c["gt"] += 1
            else:
                c["lt"] += 1
    for g in groups:
        c = counts[g]
        n = c["gt"] + c["lt"] + c["eq"]
        if n == 0:
            continue
        rows[g] = {
            "n": n,
            "ndcg_a": 100.0 * c["sum_a"] / n,
            "ndcg_b": 100.0 * c["sum_b"] / n,
            "gt": c["gt"] / n,
            "lt": c["lt"] / n,
            "eq": c["eq"] / n,
        }
    return rows
