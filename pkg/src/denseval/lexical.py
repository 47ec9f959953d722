"""Tokenizers and an Okapi BM25 baseline.

The built-in tokenizer lowercases, emits Latin/digit runs as single tokens
and every CJK codepoint as its own token. A dictionary longest-match
tokenizer and pre-tokenized input files are available when a real word
segmentation is required to reproduce external BM25 numbers.

idf defaults to the always-positive form ln(1 + (N-df+0.5)/(df+0.5)); the
"classic-eps" variant uses ln((N-df+0.5)/(df+0.5)) with negative values
floored to 0.25 * mean idf, matching a widely used BM25 implementation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .corpus import Passage
from .errors import DuplicateIdError, ParseError, UnknownIdError

Tokenizer = Callable[[str], list[str]]

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75
IDF_VARIANTS = ("lucene", "classic-eps")
_CLASSIC_EPSILON = 0.25

_CJK_RANGES = (
    (0x3040, 0x30FF),  # hiragana, katakana
    (0x3400, 0x4DBF),  # CJK extension A
    (0x4E00, 0x9FFF),  # CJK unified
    (0xAC00, 0xD7AF),  # hangul syllables
    (0xF900, 0xFAFF),  # CJK compatibility
    (0x20000, 0x2EBEF),  # extensions B..F
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    for lo, hi in _CJK_RANGES:
        if lo <= cp <= hi:
            return True
    return False


def unigram_tokenize(text: str) -> list[str]:
    """Lowercase; alphanumeric runs as tokens, each CJK codepoint its own token."""
    tokens: list[str] = []
    run: list[str] = []
    for ch in text.lower():
        if _is_cjk(ch):
            if run:
                tokens.append("".join(run))
                run = []
            tokens.append(ch)
        elif ch.isalnum():
            run.append(ch)
        else:
            if run:
                tokens.append("".join(run))
                run = []
    if run:
        tokens.append("".join(run))
    return tokens


class DictTokenizer:
    """Greedy longest-match segmentation against a word list.

    Unmatched spans fall back to unigram_tokenize. Dictionary files carry one
    entry per line; extra whitespace-separated columns (frequency, tag) are
    ignored so common segmenter dictionaries load as-is.
    """

    def __init__(self, words: Iterable[str]):
        self._words = set()
        for w in words:
            w = w.strip().lower()
            if w:
                self._words.add(w)
        self._max_len = max((len(w) for w in self._words), default=0)

    @classmethod
    def from_file(cls, path) -> "DictTokenizer":
        words = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                parts = line.split()
                if parts:
                    words.append(parts[0])
        return cls(words)

    def __call__(self, text: str) -> list[str]:
        s = text.lower()
        tokens: list[str] = []
        pending: list[str] = []
        i, n = 0, len(s)
        while i < n:
            match = None
            for length in range(min(self._max_len, n - i), 0, -1):
                cand = s[i : i + length]
                if cand in self._words:
                    match = cand
                    break
            if match is not None:
                if pending:
                    tokens.extend(unigram_tokenize("".join(pending)))
                    pending = []
                tokens.append(match)
                i += len(match)
            else:
                pending.append(s[i])
                i += 1
        if pending:
            tokens.extend(unigram_tokenize("".join(pending)))
        return tokens


def load_pretokenized(path) -> dict[str, list[str]]:
    """Read `id <TAB> space-joined-tokens` lines."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(path, lineno, f"expected 2 tab-separated fields, got {len(fields)}")
            tid, toks = fields
            if tid in out:
                raise DuplicateIdError(f"{path}:{lineno}: duplicate id {tid!r}")
            out[tid] = toks.split()
    return out


class PretokenizedTokenizer:
    """Tokenizer backed by a pre-tokenized file, keyed by the exact input text.

    Useful when queries were segmented externally: map each query text to its
    stored token list (ids are resolved by the caller for corpora).
    """

    def __init__(self, tokens_by_text: dict[str, list[str]]):
        self._tokens_by_text = tokens_by_text

    def __call__(self, text: str) -> list[str]:
        try:
            return list(self._tokens_by_text[text])
        except KeyError:
            raise UnknownIdError(f"no pre-tokenized entry for text {text!r}") from None


# ---------------------------------------------------------------------------
# BM25

@dataclass
class Bm25Index:
    doc_ids: list[str]  # ascending; positional index is the tie-break order
    doc_len: np.ndarray  # int32, token count per doc
    avgdl: float
    k1: float
    b: float
    idf_variant: str
    postings: dict[str, tuple[np.ndarray, np.ndarray]]  # term -> (doc positions, tf)
    _idf: dict[str, float] = field(repr=False)
    _doc_pos: dict[str, int] = field(repr=False)
    _norm: np.ndarray = field(repr=False)  # k1*(1 - b + b*dl/avgdl) per doc

    @property
    def N(self) -> int:
        return len(self.doc_ids)

    def df(self, term: str) -> int:
        entry = self.postings.get(term)
        return 0 if entry is None else int(entry[0].size)

    def idf(self, term: str) -> float:
        return self._idf.get(term, 0.0)

    def doc_length(self, doc_id: str) -> int:
        return int(self.doc_len[self._require(doc_id)])

    def _require(self, doc_id: str) -> int:
        try:
            return self._doc_pos[doc_id]
        except KeyError:
            raise UnknownIdError(f"unknown document id {doc_id!r}") from None


def build_index(
    passages: list[Passage],
    tokenizer: Tokenizer,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    idf_variant: str = "lucene",
    doc_tokens: dict[str, list[str]] | None = None,
) -> Bm25Index:
    """Build an inverted index. `doc_tokens` overrides the tokenizer per doc id."""
    if k1 <= 0:
        raise ValueError(f"k1 must be > 0, got {k1}")
    if not 0 <= b <= 1:
        raise ValueError(f"b must be in [0, 1], got {b}")
    if idf_variant not in IDF_VARIANTS:
        raise ValueError(f"idf_variant must be one of {IDF_VARIANTS}")

    ids = [p.id for p in passages]
    if len(set(ids)) != len(ids):
        raise DuplicateIdError("duplicate passage ids in corpus")
    order = sorted(range(len(passages)), key=lambda i: passages[i].id)

    doc_ids: list[str] = []
    doc_len = np.zeros(len(passages), dtype=np.int32)
    term_docs: dict[str, list[tuple[int, int]]] = {}
    for pos, i in enumerate(order):
        p = passages[i]
        tokens = doc_tokens[p.id] if doc_tokens is not None else tokenizer(p.text)
        doc_ids.append(p.id)
        doc_len[pos] = len(tokens)
        for term, tf in Counter(tokens).items():
            term_docs.setdefault(term, []).append((pos, tf))

    n = len(doc_ids)
    avgdl = float(doc_len.mean()) if n else 0.0
    postings = {
        term: (
            np.array([d for d, _ in entries], dtype=np.int32),
            np.array([tf for _, tf in entries], dtype=np.float64),
        )
        for term, entries in term_docs.items()
    }

    idf: dict[str, float] = {}
    if idf_variant == "lucene":
        for term, (docs, _) in postings.items():
            df = docs.size
            idf[term] = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
    else:
        raw = {
            term: math.log((n - docs.size + 0.5) / (docs.size + 0.5))
            for term, (docs, _) in postings.items()
        }
        avg = sum(raw.values()) / len(raw) if raw else 0.0
        floor = _CLASSIC_EPSILON * avg
        idf = {term: (v if v > 0 else floor) for term, v in raw.items()}

    if avgdl > 0:
        norm = k1 * (1.0 - b + b * doc_len.astype(np.float64) / avgdl)
    else:
        norm = np.full(n, k1, dtype=np.float64)
    return Bm25Index(
        doc_ids=doc_ids,
        doc_len=doc_len,
        avgdl=avgdl,
        k1=k1,
        b=b,
        idf_variant=idf_variant,
        postings=postings,
        _idf=idf,
        _doc_pos={pid: pos for pos, pid in enumerate(doc_ids)},
        _norm=norm,
    )


def bm25_score(idx: Bm25Index, query_tokens: list[str], doc_id: str) -> float:
    """Score one document; query tokens count with multiplicity."""
    pos = idx._require(doc_id)
    score = 0.0
    for term in query_tokens:
        entry = idx.postings.get(term)
        if entry is None:
            continue
        docs, tfs = entry
        j = int(np.searchsorted(docs, pos))
        if j >= docs.size or docs[j] != pos:
            continue
        tf = float(tfs[j])
        score += idx._idf[term] * tf * (idx.k1 + 1.0) / (tf + float(idx._norm[pos]))
    return score


def bm25_all_scores(idx: Bm25Index, query_tokens: list[str]) -> np.ndarray:
    """Scores for every document (float64); docs sharing no term score 0."""
    chunks_docs = []
    chunks_tf = []
    chunks_idf = []
    for term in query_tokens:
        entry = idx.postings.get(term)
        if entry is None:
            continue
        docs, tfs = entry
        chunks_docs.append(docs)
        chunks_tf.append(tfs)
        chunks_idf.append(np.full(docs.size, idx._idf[term], dtype=np.float64))
    if not chunks_docs:
        return np.zeros(idx.N, dtype=np.float64)
    doc_idx = np.concatenate(chunks_docs)
    tf = np.concatenate(chunks_tf)
    idf = np.concatenate(chunks_idf)
    return kernels.bm25_accumulate(doc_idx, tf, idf, idx._norm, idx.N, idx.k1)


def bm25_search(
    idx: Bm25Index,
    query: str,
    tokenizer: Tokenizer,
    k: int,
    query_tokens: list[str] | None = None,
) -> list[tuple[str, float]]:
    """Top-k (doc_id, score), descending score, ties by ascending doc id.

    Zero-score documents (no term overlap) are never returned, so fewer than
    k entries may come back.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    tokens = query_tokens if query_tokens is not None else tokenizer(query)
    scores = bm25_all_scores(idx, tokens)
    nonzero = np.nonzero(scores > 0.0)[0]
    if nonzero.size == 0:
        return []
    # stable sort on -score keeps ascending positional (== id) order for ties
    top = nonzero[np.argsort(-scores[nonzero], kind="stable")][:k]
    return [(idx.doc_ids[i], float(scores[i])) for i in top]
