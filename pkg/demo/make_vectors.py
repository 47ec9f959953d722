"""Regenerate the toy vector fixtures under demo/vectors/.

The vectors are synthetic: each passage gets a deterministic random unit
direction, and each query vector is the normalized grade-weighted sum of its
positive passages plus a little noise. That makes the dense demo run rank
relevant passages near the top without needing any model or network access.

Run from the repository root:

    python demo/make_vectors.py
"""

import hashlib
import os

import numpy as np

from denseval.corpus import load_dataset
from denseval.embedding import EmbeddingVector, normalize, save_vectors

DIM = 8
HERE = os.path.dirname(os.path.abspath(__file__))


def _unit(seed_text: str) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(seed_text.encode()).digest()[:8], "big")
    v = np.random.default_rng(seed).standard_normal(DIM).astype(np.float32)
    return normalize(v)


def main() -> None:
    d = load_dataset(
        os.path.join(HERE, "data", "passages.tsv"),
        os.path.join(HERE, "data", "queries.tsv"),
        os.path.join(HERE, "data", "labels.tsv"),
        name="demo",
    )
    pvecs = {p.id: _unit("passage:" + p.id) for p in d.passages}
    save_vectors(
        [EmbeddingVector(p.id, pvecs[p.id]) for p in d.passages],
        os.path.join(HERE, "vectors", "passages.vec"),
        fmt="text",
    )
    qvecs = []
    for q in d.queries:
        acc = 0.25 * _unit("query:" + q.id)
        for pid, grade in d.labels.row(q.id).items():
            acc = acc + float(grade) * pvecs[pid]
        qvecs.append(EmbeddingVector(q.id, normalize(acc.astype(np.float32))))
    save_vectors(qvecs, os.path.join(HERE, "vectors", "queries.vec"), fmt="text")
    print(f"wrote {len(pvecs)} passage and {len(qvecs)} query vectors (dim {DIM})")


if __name__ == "__main__":
    main()
