"""Toolkit for fine-grained retrieval evaluation over fully annotated graded labels.

Submodules:
    corpus     -- dataset model (passages, typed queries, graded label matrix) and file I/O
    lexical    -- tokenizers and an Okapi BM25 baseline
    embedding  -- embedding providers (vector files, remote HTTP service) and vector stores
    retrieval  -- exact top-k dense search and run files
    metrics    -- graded nDCG@k, per-type decomposition, run comparison
    analysis   -- false-negative / false-positive error worksheets
    datagen    -- LLM query generation, ROUGE-L leakage filtering, training export
    kernels    -- numba-accelerated numeric kernels with a numpy fallback
"""

__version__ = "0.1.0"
