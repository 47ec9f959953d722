"""Training-query synthesis, leakage filtering, holdout split, pair export.

Two query kinds are generated per passage through an LLM client: SM (overall
summaries and long questions) and KW (salient keywords and hypernyms). Before
training, passages too close to any evaluation caption are dropped using
character-level ROUGE-L F1 with threshold theta. Generated queries export as
line-records {query, positives, negatives} consumed by trainers.
"""

from __future__ import annotations

import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import requests

from . import kernels
from .corpus import Passage
from .errors import IntegrityError, ParseError, ReferentialIntegrityError, TransportError

log = logging.getLogger(__name__)

KINDS = ("SM", "KW")
ROUGE_MEASURES = ("f1", "recall")
ROUGE_GRANULARITIES = ("char", "word")
LLM_API_KEY_ENV = "DENSEVAL_LLM_API_KEY"
DEFAULT_TEMPLATES = {"SM": "sm_v1", "KW": "kw_v1"}


@dataclass(frozen=True)
class GeneratedQuery:
    passage_id: str
    kind: str  # SM | KW
    text: str


@dataclass
class GenConfig:
    kinds: tuple[str, ...] = KINDS
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.8
    max_per_kind: int = 20
    templates: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    theta: float = 0.6
    parallel: int = 1
    timeout: float = 60.0
    retries: int = 2
    retry_backoff: float = 0.5
    parse_retries: int = 1
    log_path: str | None = None

    def __post_init__(self):
        for kind in self.kinds:
            if kind not in KINDS:
                raise ValueError(f"unknown query kind {kind!r}, expected one of {KINDS}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")
        if self.max_per_kind < 1:
            raise ValueError("max_per_kind must be >= 1")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass(frozen=True)
class TrainingExample:
    query: str
    positives: tuple[str, ...]
    negatives: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.positives:
            raise IntegrityError("a training example needs at least one positive")
        if any(self.query == p for p in self.positives):
            raise IntegrityError("query equals one of its positives verbatim")


def resolve_template(name_or_path: str) -> str:
    """Load a prompt template by shipped id (e.g. "sm_v1") or by file path."""
    asset = resources.files("denseval").joinpath(f"prompts/{name_or_path}.txt")
    if asset.is_file():
        text = asset.read_text(encoding="utf-8")
    else:
        try:
            with open(name_or_path, encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise FileNotFoundError(
                f"prompt template {name_or_path!r} is neither a shipped id nor a readable file"
            ) from exc
    if "{passage}" not in text:
        raise ValueError(f"template {name_or_path!r} lacks the {{passage}} placeholder")
    return text


class LlmClient:
    """Minimal chat-completion client: (system, user) text in, text out.

    POSTs {"model", "messages", "temperature"} and expects {"text": "..."}.
    Bearer auth comes from the DENSEVAL_LLM_API_KEY environment variable.
    Every request/response pair is appended to `log_path` when set, so runs
    can be audited and replayed.
    """

    def __init__(self, cfg: GenConfig):
        if not cfg.endpoint:
            raise ValueError("LLM endpoint not configured")
        self.cfg = cfg

    def _headers(self) -> dict[str, str]:
        import os

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(LLM_API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, system: str, user: str) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.cfg.temperature,
        }
        last: Exception | None = None
        for attempt in range(self.cfg.retries + 1):
            if attempt:
                time.sleep(self.cfg.retry_backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(
                    self.cfg.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.cfg.timeout,
                )
                if resp.status_code != 200:
                    raise TransportError(
                        f"LLM endpoint returned HTTP {resp.status_code}: {resp.text[:200]}"
                    )
                body = resp.json()
                if "text" not in body:
                    raise TransportError("LLM response lacks a 'text' field")
                text = str(body["text"])
                self._log(payload, text)
                return text
            except (requests.RequestException, TransportError) as exc:
                last = exc
        raise TransportError(
            f"LLM request failed after {self.cfg.retries + 1} attempts: {last}"
        )

    def _log(self, payload: dict, text: str) -> None:
        if not self.cfg.log_path:
            return
        with open(self.cfg.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps({"request": payload, "response": text}, ensure_ascii=False) + "\n")


SYSTEM_PROMPT = "You create short search queries from image captions. Follow the output format exactly."


def parse_numbered_list(text: str) -> list[str]:
    """Extract items from a numbered (or bulleted) list response."""
    items = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        head, sep, rest = line.partition(". ")
        if sep and head.isdigit():
            items.append(rest.strip())
            continue
        head, sep, rest = line.partition(") ")
        if sep and head.isdigit():
            items.append(rest.strip())
            continue
        if line[0] in "-*" and len(line) > 1:
            items.append(line[1:].strip())
    if not items:
        raise ParseError("<llm response>", 0, "no list items found in response")
    return [i for i in items if i]


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def generate_queries(
    passages: list[Passage], cfg: GenConfig, client: LlmClient | None = None
) -> list[GeneratedQuery]:
    """One LLM call per (passage, kind); parse, cap, dedup.

    Responses that fail to parse are re-requested up to `cfg.parse_retries`
    times, then the (passage, kind) cell is skipped with a logged diagnostic.
    Output order follows the input passage order, SM before KW per passage.
    All randomness lives in the LLM; this function is a pure mapping of its
    responses.
    """
    if not passages:
        return []
    client = client or LlmClient(cfg)
    templates = {kind: resolve_template(cfg.templates[kind]) for kind in cfg.kinds}

    def one_cell(p: Passage, kind: str) -> list[GeneratedQuery]:
        prompt = templates[kind].format(passage=p.text)
        for attempt in range(cfg.parse_retries + 1):
            text = client.complete(SYSTEM_PROMPT, prompt)
            try:
                items = parse_numbered_list(text)
            except ParseError:
                if attempt < cfg.parse_retries:
                    continue
                log.warning(
                    "skipping passage %s kind %s: unparseable response after %d attempts",
                    p.id, kind, cfg.parse_retries + 1,
                )
                return []
            out = []
            for item in items[: cfg.max_per_kind]:
                item = item.strip()
                if item and item != p.text:
                    out.append(GeneratedQuery(passage_id=p.id, kind=kind, text=item))
            return out
        return []

    cells = [(p, kind) for p in passages for kind in cfg.kinds]
    if cfg.parallel > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel) as pool:
            results = list(pool.map(lambda c: one_cell(*c), cells))
    else:
        results = [one_cell(p, kind) for p, kind in cells]

    seen: set[tuple[str, str]] = set()
    out: list[GeneratedQuery] = []
    for chunk in results:
        for q in chunk:
            key = (q.passage_id, _normalize(q.text))
            if key in seen:
                continue
            seen.add(key)
            out.append(q)
    return out


def _codepoints(s: str) -> np.ndarray:
    if not s:
        return np.empty(0, dtype=np.int32)
    return np.frombuffer(s.encode("utf-32-le"), dtype="<u4").astype(np.int32)


def _token_ids(tokens: list[str], vocab: dict[str, int]) -> np.ndarray:
    return np.array([vocab.setdefault(t, len(vocab)) for t in tokens], dtype=np.int32)


def rouge_l(
    a: str,
    b: str,
    measure: str = "f1",
    granularity: str = "char",
    tokenizer=None,
) -> float:
    """ROUGE-L of candidate `a` against reference `b`.

    F1 = 2PR/(P+R) with P = LCS/|a| and R = LCS/|b|; `measure="recall"`
    returns R alone. `granularity` picks character or word units (the latter
    needs a tokenizer). Empty inputs score 0.
    """
    if measure not in ROUGE_MEASURES:
        raise ValueError(f"measure must be one of {ROUGE_MEASURES}")
    if granularity not in ROUGE_GRANULARITIES:
        raise ValueError(f"granularity must be one of {ROUGE_GRANULARITIES}")
    if granularity == "char":
        xs, ys = _codepoints(a), _codepoints(b)
    else:
        if tokenizer is None:
            raise ValueError("word granularity needs a tokenizer")
        vocab: dict[str, int] = {}
        xs, ys = _token_ids(tokenizer(a), vocab), _token_ids(tokenizer(b), vocab)
    if len(xs) == 0 or len(ys) == 0:
        return 0.0
    lcs = int(kernels.lcs_length(xs, ys))
    if lcs == 0:
        return 0.0
    recall = lcs / len(ys)
    if measure == "recall":
        return recall
    precision = lcs / len(xs)
    return 2 * precision * recall / (precision + recall)


def rouge_l_f1(a: str, b: str) -> float:
    """Character-level ROUGE-L F1, the default leakage measure."""
    return rouge_l(a, b, measure="f1", granularity="char")


def filter_leakage(
    train_passages: list[Passage],
    test_passages: list[Passage],
    theta: float = 0.6,
    measure: str = "f1",
    granularity: str = "char",
    tokenizer=None,
    jobs: int = 1,
) -> tuple[list[Passage], list[Passage]]:
    """Partition training passages into (kept, dropped) by test-set overlap.

    A passage is dropped when its maximum ROUGE-L against any test passage
    exceeds theta. Pairs whose length bound already caps the score at or
    below theta are skipped without running the LCS.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    if measure not in ROUGE_MEASURES:
        raise ValueError(f"measure must be one of {ROUGE_MEASURES}")
    if granularity not in ROUGE_GRANULARITIES:
        raise ValueError(f"granularity must be one of {ROUGE_GRANULARITIES}")

    vocab: dict[str, int] = {}

    def encode(text: str) -> np.ndarray:
        if granularity == "char":
            return _codepoints(text)
        if tokenizer is None:
            raise ValueError("word granularity needs a tokenizer")
        return _token_ids(tokenizer(text), vocab)

    refs = [encode(t.text) for t in test_passages]

    def leaks(p: Passage) -> bool:
        xs = encode(p.text)
        la = len(xs)
        if la == 0:
            return False
        for ys in refs:
            lb = len(ys)
            if lb == 0:
                continue
            m = min(la, lb)
            bound = m / lb if measure == "recall" else 2 * m / (la + lb)
            if bound <= theta:
                continue
            lcs = int(kernels.lcs_length(xs, ys))
            if lcs == 0:
                continue
            recall = lcs / lb
            score = recall if measure == "recall" else 2 * (lcs / la) * recall / (lcs / la + recall)
            if score > theta:
                return True
        return False

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            flags = list(pool.map(leaks, train_passages))
    else:
        flags = [leaks(p) for p in train_passages]
    kept = [p for p, bad in zip(train_passages, flags) if not bad]
    dropped = [p for p, bad in zip(train_passages, flags) if bad]
    return kept, dropped


def split_holdout(
    queries: list[GeneratedQuery], fraction: float, seed: int
) -> tuple[list[GeneratedQuery], list[GeneratedQuery]]:
    """Seeded stratified split into (train, holdout), order-preserving.

    Each kind contributes round(fraction * n_kind) queries to the holdout
    (half rounds up), so per-kind proportions track the requested fraction.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = random.Random(seed)
    holdout_idx: set[int] = set()
    for kind in sorted({q.kind for q in queries}):
        idx = [i for i, q in enumerate(queries) if q.kind == kind]
        take = int(len(idx) * fraction + 0.5)
        holdout_idx.update(rng.sample(idx, take))
    train = [q for i, q in enumerate(queries) if i not in holdout_idx]
    holdout = [q for i, q in enumerate(queries) if i in holdout_idx]
    return train, holdout


def export_training(
    queries: list[GeneratedQuery], passages: list[Passage], path: str
) -> None:
    """Write one JSON line per query: {query, positives, negatives, kind, passage_id}.

    The positive is the source passage's text; negatives stay empty here and
    are supplied in-batch at training time. Order follows the input list.
    """
    by_id = {p.id: p for p in passages}
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            if q.passage_id not in by_id:
                raise ReferentialIntegrityError(
                    f"generated query references unknown passage id {q.passage_id!r}"
                )
            ex = TrainingExample(query=q.text, positives=(by_id[q.passage_id].text,))
            record = {
                "query": ex.query,
                "positives": list(ex.positives),
                "negatives": list(ex.negatives),
                "kind": q.kind,
                "passage_id": q.passage_id,
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def save_generated(queries: list[GeneratedQuery], path: str) -> None:
    """One JSON line per generated query: {passage_id, kind, text}."""
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            f.write(
                json.dumps(
                    {"passage_id": q.passage_id, "kind": q.kind, "text": q.text},
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_generated(path: str) -> list[GeneratedQuery]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc}") from exc
            try:
                q = GeneratedQuery(
                    passage_id=str(record["passage_id"]),
                    kind=str(record["kind"]),
                    text=str(record["text"]),
                )
            except KeyError as exc:
                raise ParseError(path, lineno, f"missing field {exc}") from exc
            if q.kind not in KINDS:
                raise ParseError(path, lineno, f"unknown kind {q.kind!r}")
            if not q.text.strip():
                raise ParseError(path, lineno, "empty query text")
            out.append(q)
    return out


def load_training(path: str) -> list[dict]:
    """Read back records written by export_training."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, f"invalid JSON: {exc}") from exc
            for key in ("query", "positives", "negatives"):
                if key not in record:
                    raise ParseError(path, lineno, f"missing field {key!r}")
            if not record["positives"]:
                raise ParseError(path, lineno, "record has no positives")
            out.append(record)
    return out


def gen_stats(
    queries: list[GeneratedQuery], passages: list[Passage], tokenizer
) -> dict[str, dict[str, float]]:
    """Per kind: mean queries per passage and mean tokens per query.

    The queries-per-passage denominator is the full passage list, so passages
    that yielded nothing still count.
    """
    out: dict[str, dict[str, float]] = {}
    n_passages = len(passages)
    for kind in sorted({q.kind for q in queries}):
        qs = [q for q in queries if q.kind == kind]
        token_counts = [len(tokenizer(q.text)) for q in qs]
        out[kind] = {
            "queries": float(len(qs)),
            "queries_per_passage": len(qs) / n_passages if n_passages else 0.0,
            "tokens_per_query": sum(token_counts) / len(qs) if qs else 0.0,
        }
    return out
