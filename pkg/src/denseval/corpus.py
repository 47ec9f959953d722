"""Dataset model: passages, typed queries, and a complete graded label matrix.

On disk the labels file lists only nonzero grades; any (query, passage) pair
not listed is grade 0, so lookups are total over the cross product. Files are
UTF-8 line records with tab-separated fields:

    passages:  id <TAB> text
    queries:   id <TAB> text <TAB> qtype
    labels:    query_id <TAB> passage_id <TAB> grade      (grade in {0,1,2})

A single-file JSONL variant carries the same records with a "record"
discriminator; ``denseval convert`` translates between the two.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import (
    DuplicateIdError,
    ParseError,
    ReferentialIntegrityError,
    UnknownIdError,
)

GRADES = (0, 1, 2)


class QueryType(enum.Enum):
    SINGLETON_PERSON = "SingletonPerson"
    SINGLETON_PLACE = "SingletonPlace"
    SINGLETON_OBJECT = "SingletonObject"
    SINGLETON_CONCEPT = "SingletonConcept"
    SINGLETON_EVENT = "SingletonEvent"
    CONJUNCTION = "Conjunction"
    SIMPLE_CONDITION = "SimpleCondition"
    COMPLEX_CONDITION = "ComplexCondition"

    @classmethod
    def parse(cls, raw: str) -> "QueryType":
        """Case-insensitive parse, ignoring '_', '-' and spaces. Closed vocabulary."""
        key = raw.strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        try:
            return _QTYPE_BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown query type {raw!r}") from None

    @property
    def coarse_group(self) -> str:
        """Five-way grouping: the four singleton entity types merge into one."""
        if self in SINGLETON_ENTITY_TYPES:
            return "SingletonEntity"
        return self.value


_QTYPE_BY_KEY = {t.value.lower(): t for t in QueryType}

SINGLETON_ENTITY_TYPES = frozenset(
    {
        QueryType.SINGLETON_PERSON,
        QueryType.SINGLETON_PLACE,
        QueryType.SINGLETON_OBJECT,
        QueryType.SINGLETON_CONCEPT,
    }
)

COARSE_GROUPS = (
    "SingletonEntity",
    "SingletonEvent",
    "Conjunction",
    "SimpleCondition",
    "ComplexCondition",
)


@dataclass(frozen=True)
class Passage:
    id: str
    text: str


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    qtype: QueryType


class LabelMatrix:
    """Grades for every (query, passage) pair; unstored pairs are grade 0."""

    def __init__(self, query_ids: Iterable[str], passage_ids: Iterable[str]):
        self._query_ids = set(query_ids)
        self._passage_ids = set(passage_ids)
        self._grades: dict[tuple[str, str], int] = {}

    def set_grade(self, query_id: str, passage_id: str, grade: int) -> None:
        if query_id not in self._query_ids:
            raise ReferentialIntegrityError(f"label references unknown query id {query_id!r}")
        if passage_id not in self._passage_ids:
            raise ReferentialIntegrityError(f"label references unknown passage id {passage_id!r}")
        if grade not in GRADES:
            raise ValueError(f"grade must be one of {GRADES}, got {grade!r}")
        key = (query_id, passage_id)
        if key in self._grades:
            raise DuplicateIdError(f"duplicate label for pair {key}")
        self._grades[key] = grade

    def grade(self, query_id: str, passage_id: str) -> int:
        if query_id not in self._query_ids:
            raise UnknownIdError(f"unknown query id {query_id!r}")
        if passage_id not in self._passage_ids:
            raise UnknownIdError(f"unknown passage id {passage_id!r}")
        return self._grades.get((query_id, passage_id), 0)

    def row(self, query_id: str) -> dict[str, int]:
        """Nonzero grades for one query (all other passages are grade 0)."""
        if query_id not in self._query_ids:
            raise UnknownIdError(f"unknown query id {query_id!r}")
        return {
            pid: g for (qid, pid), g in self._grades.items() if qid == query_id and g > 0
        }

    def nonzero_items(self) -> list[tuple[str, str, int]]:
        return [(q, p, g) for (q, p), g in self._grades.items() if g > 0]

    @property
    def positive_count(self) -> int:
        return sum(1 for g in self._grades.values() if g > 0)

    def positives_per_query(self) -> dict[str, int]:
        counts = {qid: 0 for qid in self._query_ids}
        for (qid, _), g in self._grades.items():
            if g > 0:
                counts[qid] += 1
        return counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        mine = {k: g for k, g in self._grades.items() if g > 0}
        theirs = {k: g for k, g in other._grades.items() if g > 0}
        return (
            self._query_ids == other._query_ids
            and self._passage_ids == other._passage_ids
            and mine == theirs
        )


@dataclass
class Dataset:
    name: str
    passages: list[Passage]
    queries: list[Query]
    labels: LabelMatrix
    _passage_by_id: dict[str, Passage] = field(init=False, repr=False)
    _query_by_id: dict[str, Query] = field(init=False, repr=False)

    def __post_init__(self):
        self._passage_by_id = {p.id: p for p in self.passages}
        self._query_by_id = {q.id: q for q in self.queries}

    def passage(self, pid: str) -> Passage:
        try:
            return self._passage_by_id[pid]
        except KeyError:
            raise UnknownIdError(f"unknown passage id {pid!r}") from None

    def query(self, qid: str) -> Query:
        try:
            return self._query_by_id[qid]
        except KeyError:
            raise UnknownIdError(f"unknown query id {qid!r}") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.passages == other.passages
            and self.queries == other.queries
            and self.labels == other.labels
        )


@dataclass
class StatsReport:
    n_passages: int
    n_queries: int
    passage_tokens: tuple[int, int, float]  # (min, max, avg)
    query_tokens: tuple[int, int, float]
    positive_pairs: int
    positives_histogram: dict[int, int]  # n_positives -> number of queries


# ---------------------------------------------------------------------------
# Line-record parsing

def _iter_records(path, n_fields: int):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise ParseError(
                    path, lineno, f"expected {n_fields} tab-separated fields, got {len(fields)}"
                )
            yield lineno, fields


def _check_text(path, lineno: int, id_: str, text: str) -> None:
    if not id_:
        raise ParseError(path, lineno, "empty id")
    if not text:
        raise ParseError(path, lineno, "empty text")


def load_passages(path) -> list[Passage]:
    passages = []
    seen = set()
    for lineno, (pid, text) in _iter_records(path, 2):
        _check_text(path, lineno, pid, text)
        if pid in seen:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate passage id {pid!r}")
        seen.add(pid)
        passages.append(Passage(pid, text))
    return passages


def load_queries(path) -> list[Query]:
    queries = []
    seen = set()
    for lineno, (qid, text, qtype_raw) in _iter_records(path, 3):
        _check_text(path, lineno, qid, text)
        if qid in seen:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        try:
            qtype = QueryType.parse(qtype_raw)
        except ValueError as e:
            raise ParseError(path, lineno, str(e)) from None
        queries.append(Query(qid, text, qtype))
    return queries


def load_dataset(passages_path, queries_path, labels_path, name: str = "dataset") -> Dataset:
    """Load and validate a TSV dataset; absent label pairs default to grade 0."""
    passages = load_passages(passages_path)
    queries = load_queries(queries_path)
    labels = LabelMatrix((q.id for q in queries), (p.id for p in passages))
    for lineno, (qid, pid, grade_raw) in _iter_records(labels_path, 3):
        try:
            grade = int(grade_raw)
        except ValueError:
            raise ParseError(labels_path, lineno, f"grade is not an integer: {grade_raw!r}") from None
        if grade not in GRADES:
            raise ParseError(labels_path, lineno, f"grade must be in {GRADES}, got {grade}")
        try:
            labels.set_grade(qid, pid, grade)
        except (ReferentialIntegrityError, DuplicateIdError) as e:
            raise type(e)(f"{labels_path}:{lineno}: {e}") from None
    return Dataset(name=name, passages=passages, queries=queries, labels=labels)


def _check_tsv_safe(text: str) -> None:
    if "\t" in text or "\n" in text:
        raise ValueError(
            "text contains a tab or newline; use the JSONL dataset format for such records"
        )


def save_dataset(d: Dataset, passages_path, queries_path, labels_path) -> None:
    """Write the TSV trio. Only nonzero grades are emitted."""
    with open(passages_path, "w", encoding="utf-8") as f:
        for p in d.passages:
            _check_tsv_safe(p.text)
            f.write(f"{p.id}\t{p.text}\n")
    with open(queries_path, "w", encoding="utf-8") as f:
        for q in d.queries:
            _check_tsv_safe(q.text)
            f.write(f"{q.id}\t{q.text}\t{q.qtype.value}\n")
    with open(labels_path, "w", encoding="utf-8") as f:
        for qid, pid, grade in sorted(d.labels.nonzero_items()):
            f.write(f"{qid}\t{pid}\t{grade}\n")


def load_dataset_jsonl(path, name: str = "dataset") -> Dataset:
    """Load the single-file variant: one JSON object per line, 'record' discriminator."""
    passages: list[Passage] = []
    queries: list[Query] = []
    label_rows: list[tuple[int, str, str, int]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, lineno, f"invalid JSON: {e}") from None
            kind = obj.get("record")
            try:
                if kind == "passage":
                    passages.append(Passage(str(obj["id"]), str(obj["text"])))
                elif kind == "query":
                    queries.append(
                        Query(str(obj["id"]), str(obj["text"]), QueryType.parse(str(obj["qtype"])))
                    )
                elif kind == "label":
                    label_rows.append(
                        (lineno, str(obj["query_id"]), str(obj["passage_id"]), int(obj["grade"]))
                    )
                else:
                    raise ParseError(path, lineno, f"unknown record kind {kind!r}")
            except (KeyError, ValueError) as e:
                raise ParseError(path, lineno, str(e)) from None

    seen_p = set()
    for p in passages:
        if not p.id or not p.text:
            raise ParseError(path, 0, f"empty id or text in passage {p.id!r}")
        if p.id in seen_p:
            raise DuplicateIdError(f"{path}: duplicate passage id {p.id!r}")
        seen_p.add(p.id)
    seen_q = set()
    for q in queries:
        if not q.id or not q.text:
            raise ParseError(path, 0, f"empty id or text in query {q.id!r}")
        if q.id in seen_q:
            raise DuplicateIdError(f"{path}: duplicate query id {q.id!r}")
        seen_q.add(q.id)

    labels = LabelMatrix(seen_q, seen_p)
    for lineno, qid, pid, grade in label_rows:
        if grade not in GRADES:
            raise ParseError(path, lineno, f"grade must be in {GRADES}, got {grade}")
        try:
            labels.set_grade(qid, pid, grade)
        except (ReferentialIntegrityError, DuplicateIdError) as e:
            raise type(e)(f"{path}:{lineno}: {e}") from None
    return Dataset(name=name, passages=passages, queries=queries, labels=labels)


def save_dataset_jsonl(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in d.passages:
            f.write(json.dumps({"record": "passage", "id": p.id, "text": p.text}, ensure_ascii=False) + "\n")
        for q in d.queries:
            f.write(
                json.dumps(
                    {"record": "query", "id": q.id, "text": q.text, "qtype": q.qtype.value},
                    ensure_ascii=False,
                )
                + "\n"
            )
        for qid, pid, grade in sorted(d.labels.nonzero_items()):
            f.write(
                json.dumps(
                    {"record": "label", "query_id": qid, "passage_id": pid, "grade": grade},
                    ensure_ascii=False,
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# Operations

def dataset_stats(d: Dataset, tokenizer: Callable[[str], list[str]]) -> StatsReport:
    """Record counts, token statistics under the given tokenizer, positives histogram."""

    def _tok_stats(texts: list[str]) -> tuple[int, int, float]:
        if not texts:
            return (0, 0, 0.0)
        lens = [len(tokenizer(t)) for t in texts]
        return (min(lens), max(lens), sum(lens) / len(lens))

    histogram = Counter(d.labels.positives_per_query().values())
    return StatsReport(
        n_passages=len(d.passages),
        n_queries=len(d.queries),
        passage_tokens=_tok_stats([p.text for p in d.passages]),
        query_tokens=_tok_stats([q.text for q in d.queries]),
        positive_pairs=d.labels.positive_count,
        positives_histogram=dict(sorted(histogram.items())),
    )


def zero_positive_queries(d: Dataset) -> list[str]:
    """Ids of queries with no grade >= 1 passage, ascending id order."""
    counts = d.labels.positives_per_query()
    return sorted(qid for qid, n in counts.items() if n == 0)
