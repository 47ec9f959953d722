"""Hot numeric kernels, each in two flavors: numba @njit and pure numpy.

The numba path is used whenever numba imports cleanly; set DENSEVAL_NUMBA=0
to force the numpy fallback (the benchmark in benchmarks/bench_kernels.py
times both). Both flavors of a kernel return identical values except for
last-ulp float noise from differing summation orders, which the callers'
contracts absorb (scores are accumulated in float64 and emitted in float32).
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("DENSEVAL_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep, but stay runnable
    njit = None

HAVE_NUMBA = njit is not None
USE_NUMBA = HAVE_NUMBA and _want_numba


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Longest common subsequence length (character-level, for ROUGE-L)

def lcs_length_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """LCS length via row-vectorized DP.

    Per row the relaxed recurrence max(prev[j], prev[j-1] + eq) followed by a
    running maximum equals the textbook LCS table, because dp rows grow by at
    most 1 per column.
    """
    if a.size == 0 or b.size == 0:
        return 0
    prev = np.zeros(b.size, dtype=np.int32)
    shifted = np.empty(b.size, dtype=np.int32)
    for ch in a:
        shifted[0] = 0
        shifted[1:] = prev[:-1]
        cand = np.maximum(prev, shifted + (b == ch))
        prev = np.maximum.accumulate(cand)
    return int(prev[-1])


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _lcs_length_nb(a, b):  # pragma: no cover - exercised via lcs_length
        n = a.size
        m = b.size
        if n == 0 or m == 0:
            return 0
        prev = np.zeros(m + 1, dtype=np.int32)
        cur = np.zeros(m + 1, dtype=np.int32)
        for i in range(n):
            ai = a[i]
            for j in range(1, m + 1):
                if b[j - 1] == ai:
                    cur[j] = prev[j - 1] + 1
                else:
                    cur[j] = max(prev[j], cur[j - 1])
            tmp = prev
            prev = cur
            cur = tmp
        return int(prev[m])

    def lcs_length_numba(a: np.ndarray, b: np.ndarray) -> int:
        return int(_lcs_length_nb(a, b))

else:  # pragma: no cover
    lcs_length_numba = None


# ---------------------------------------------------------------------------
# Dense dot-product scores (unit-norm vectors => cosine)

def dot_scores_numpy(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Per-row dot products, float64 accumulation, float32 output."""
    q = query.astype(np.float64)
    out = np.empty(matrix.shape[0], dtype=np.float32)
    step = 8192  # bound the float64 temp for large corpora
    for i0 in range(0, matrix.shape[0], step):
        block = matrix[i0 : i0 + step].astype(np.float64)
        out[i0 : i0 + step] = (block @ q).astype(np.float32)
    return out


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _dot_scores_nb(matrix, query):  # pragma: no cover
        n, d = matrix.shape
        out = np.empty(n, dtype=np.float32)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += matrix[i, j] * query[j]
            out[i] = acc
        return out

    def dot_scores_numba(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
        return _dot_scores_nb(matrix, query.astype(np.float64))

else:  # pragma: no cover
    dot_scores_numba = None


# ---------------------------------------------------------------------------
# BM25 score accumulation over concatenated posting entries

def bm25_accumulate_numpy(
    doc_idx: np.ndarray,
    tf: np.ndarray,
    idf: np.ndarray,
    norm: np.ndarray,
    n_docs: int,
    k1: float,
) -> np.ndarray:
    """scores[d] += idf * tf*(k1+1) / (tf + norm[d]) for each posting entry."""
    scores = np.zeros(n_docs, dtype=np.float64)
    if doc_idx.size:
        contrib = idf * tf * (k1 + 1.0) / (tf + norm[doc_idx])
        np.add.at(scores, doc_idx, contrib)
    return scores


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _bm25_accumulate_nb(doc_idx, tf, idf, norm, n_docs, k1):  # pragma: no cover
        scores = np.zeros(n_docs, dtype=np.float64)
        for e in range(doc_idx.size):
            d = doc_idx[e]
            scores[d] += idf[e] * tf[e] * (k1 + 1.0) / (tf[e] + norm[d])
        return scores

    def bm25_accumulate_numba(doc_idx, tf, idf, norm, n_docs, k1):
        return _bm25_accumulate_nb(doc_idx, tf, idf, norm, n_docs, k1)

else:  # pragma: no cover
    bm25_accumulate_numba = None


if USE_NUMBA:
    lcs_length = lcs_length_numba
    dot_scores = dot_scores_numba
    bm25_accumulate = bm25_accumulate_numba
else:
    lcs_length = lcs_length_numpy
    dot_scores = dot_scores_numpy
    bm25_accumulate = bm25_accumulate_numpy
