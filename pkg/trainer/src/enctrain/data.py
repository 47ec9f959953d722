"""Training pairs: the exported-pairs JSONL reader and batch iteration.

The input format is the training export produced by the evaluation toolkit's
`export` command: one JSON object per line with a non-empty "query", a
non-empty list of "positives" (texts), optional "negatives", plus "kind" and
"passage_id" bookkeeping fields. The first positive is the contrastive
target; other in-batch positives act as negatives.
"""

import json
import random
from dataclasses import dataclass
from typing import Iterator

from enctrain.errors import DataError


@dataclass(frozen=True)
class Pair:
    query: str
    positive: str
    kind: str
    passage_id: str


def load_pairs(path) -> list[Pair]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            query = obj.get("query")
            positives = obj.get("positives")
            if not isinstance(query, str) or not query:
                raise DataError(f"{path}:{lineno}: missing or empty 'query'")
            if (
                not isinstance(positives, list)
                or not positives
                or not all(isinstance(p, str) and p for p in positives)
            ):
                raise DataError(f"{path}:{lineno}: 'positives' must be a non-empty list of texts")
            negatives = obj.get("negatives", [])
            if not isinstance(negatives, list):
                raise DataError(f"{path}:{lineno}: 'negatives' must be a list")
            pairs.append(
                Pair(
                    query=query,
                    positive=positives[0],
                    kind=str(obj.get("kind", "")),
                    passage_id=str(obj.get("passage_id", "")),
                )
            )
    if not pairs:
        raise DataError(f"{path}: no training pairs")
    return pairs


def iter_batches(
    pairs: list[Pair], batch_size: int, epochs: int, seed: int
) -> Iterator[list[Pair]]:
    """Shuffled batches, reshuffled each epoch; the trailing short batch is kept.

    A full shuffle also mixes query kinds uniformly at the example level, so
    SM and KW examples interleave without any per-kind scheduling.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    for epoch in range(epochs):
        order = list(pairs)
        random.Random(seed * 1000003 + epoch).shuffle(order)
        for i in range(0, len(order), batch_size):
            yield order[i : i + batch_size]
