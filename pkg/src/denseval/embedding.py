"""Embedding providers and vector stores.

All text is lowercased before encoding; query-side text additionally gets the
configured instruction composed via the provider's template (lowercase first,
then compose). Every vector leaving this module is L2-normalized so that
downstream retrieval can use plain dot products for cosine similarity.

Vector file formats:
  binary  -- one ASCII header line `DVEC1 dim=<d> count=<n> dtype=float32
             endian=little`, then per row: uint16-LE id byte length, the id
             in UTF-8, and d little-endian float32 values.
  text    -- `id <TAB> space-joined floats`, one vector per line (debugging).
"""

from __future__ import annotations

import concurrent.futures
import enum
import os
import struct
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import requests

from .errors import (
    DuplicateIdError,
    FileFormatError,
    IntegrityError,
    TransportError,
    UnknownIdError,
)

API_KEY_ENV = "DENSEVAL_API_KEY"
DEFAULT_INSTRUCTION_TEMPLATE = "{instruction} {text}"
_MAGIC = b"DVEC1"
NORM_TOLERANCE = 1e-4


class EmbedRole(enum.Enum):
    QUERY = "query"
    PASSAGE = "passage"


@dataclass(frozen=True)
class EmbeddingVector:
    id: str
    values: np.ndarray  # float32, unit norm once it leaves this module

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)


@dataclass
class ProviderConfig:
    kind: str = "vector-file"  # "vector-file" | "remote"
    model: str = ""
    instruction: str | None = None
    instruction_template: str = DEFAULT_INSTRUCTION_TEMPLATE
    endpoint: str | None = None
    vectors_path: str | None = None
    batch_size: int = 64
    timeout: float = 30.0
    retries: int = 2
    retry_backoff: float = 0.5
    parallel: int = 1

    def __post_init__(self):
        if self.kind not in ("vector-file", "remote"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote provider requires an endpoint")
        if self.kind == "vector-file" and not self.vectors_path:
            raise ValueError("vector-file provider requires vectors_path")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    def metadata(self) -> dict:
        return {
            "provider": self.kind,
            "model": self.model,
            "instruction": self.instruction,
            "instruction_template": self.instruction_template,
            "endpoint": self.endpoint,
            "vectors_path": self.vectors_path,
        }


def preprocess(text: str, role: EmbedRole, cfg: ProviderConfig) -> str:
    """Lowercase; for query-side text with an instruction, compose via template."""
    out = text.lower()
    if role is EmbedRole.QUERY and cfg.instruction:
        out = cfg.instruction_template.format(instruction=cfg.instruction, text=out)
    return out


def normalize(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float32)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0:
        raise IntegrityError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


# ---------------------------------------------------------------------------
# Vector files

def save_vectors(vectors: Sequence[EmbeddingVector], path, fmt: str = "binary") -> None:
    dims = {v.values.shape[0] for v in vectors}
    if len(dims) > 1:
        raise IntegrityError(f"mixed vector dimensions: {sorted(dims)}")
    seen = set()
    for v in vectors:
        if v.id in seen:
            raise DuplicateIdError(f"duplicate vector id {v.id!r}")
        seen.add(v.id)
    dim = dims.pop() if dims else 0

    if fmt == "binary":
        with open(path, "wb") as f:
            f.write(_MAGIC + f" dim={dim} count={len(vectors)} dtype=float32 endian=little\n".encode())
            for v in vectors:
                id_bytes = v.id.encode("utf-8")
                f.write(struct.pack("<H", len(id_bytes)))
                f.write(id_bytes)
                f.write(np.ascontiguousarray(v.values, dtype="<f4").tobytes())
    elif fmt == "text":
        with open(path, "w", encoding="utf-8") as f:
            for v in vectors:
                f.write(v.id + "\t" + " ".join(repr(float(x)) for x in v.values) + "\n")
    else:
        raise ValueError(f"unknown vector format {fmt!r}")


def load_vectors(path) -> list[EmbeddingVector]:
    """Load either format (auto-detected); values are returned as stored."""
    with open(path, "rb") as f:
        head = f.read(len(_MAGIC))
    if head == _MAGIC:
        return _load_vectors_binary(path)
    return _load_vectors_text(path)


def _load_vectors_binary(path) -> list[EmbeddingVector]:
    with open(path, "rb") as f:
        header = f.readline(512)
        if not header.endswith(b"\n"):
            raise FileFormatError(f"{path}: missing or oversized header line")
        parts = header.decode("ascii", errors="replace").split()
        if not parts or parts[0] != "DVEC1":
            raise FileFormatError(f"{path}: bad magic in header")
        fields = {}
        for p in parts[1:]:
            if "=" not in p:
                raise FileFormatError(f"{path}: malformed header field {p!r}")
            k, v = p.split("=", 1)
            fields[k] = v
        try:
            dim = int(fields["dim"])
            count = int(fields["count"])
        except (KeyError, ValueError):
            raise FileFormatError(f"{path}: header must carry integer dim and count") from None
        if fields.get("dtype") != "float32" or fields.get("endian") != "little":
            raise FileFormatError(f"{path}: unsupported dtype/endianness")

        vectors: list[EmbeddingVector] = []
        seen = set()
        row_bytes = 4 * dim
        for i in range(count):
            len_raw = f.read(2)
            if len(len_raw) != 2:
                raise FileFormatError(f"{path}: truncated at row {i} (declared count {count})")
            (id_len,) = struct.unpack("<H", len_raw)
            id_raw = f.read(id_len)
            payload = f.read(row_bytes)
            if len(id_raw) != id_len or len(payload) != row_bytes:
                raise FileFormatError(f"{path}: truncated at row {i} (declared count {count})")
            vid = id_raw.decode("utf-8")
            if vid in seen:
                raise DuplicateIdError(f"{path}: duplicate vector id {vid!r}")
            seen.add(vid)
            values = np.frombuffer(payload, dtype="<f4").astype(np.float32)
            vectors.append(EmbeddingVector(vid, values))
        if f.read(1):
            raise FileFormatError(f"{path}: trailing data after {count} rows")
    return vectors


def _load_vectors_text(path) -> list[EmbeddingVector]:
    vectors: list[EmbeddingVector] = []
    seen = set()
    dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise FileFormatError(f"{path}:{lineno}: expected `id<TAB>floats`")
            vid, raw = fields
            if vid in seen:
                raise DuplicateIdError(f"{path}:{lineno}: duplicate vector id {vid!r}")
            seen.add(vid)
            try:
                values = np.array([float(x) for x in raw.split()], dtype=np.float32)
            except ValueError:
                raise FileFormatError(f"{path}:{lineno}: non-numeric vector value") from None
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise FileFormatError(f"{path}:{lineno}: dimension {values.size} != {dim}")
            vectors.append(EmbeddingVector(vid, values))
    return vectors


# ---------------------------------------------------------------------------
# Providers

class VectorFileProvider:
    """Serves embeddings from a vector file; deterministic and read-only."""

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg
        self._by_id = {}
        for v in load_vectors(cfg.vectors_path):
            self._by_id[v.id] = v.values

    def embed(self, items: Sequence[tuple[str, str]], role: EmbedRole) -> list[EmbeddingVector]:
        out = []
        for vid, _text in items:
            try:
                raw = self._by_id[vid]
            except KeyError:
                raise UnknownIdError(
                    f"no stored vector for id {vid!r} in {self.cfg.vectors_path}"
                ) from None
            out.append(EmbeddingVector(vid, normalize(raw)))
        return out


class RemoteProvider:
    """HTTP embedding service client.

    Request JSON: {"model", "role", "instruction", "texts"} where texts are
    already preprocessed (lowercased, instruction-composed); the role and
    instruction fields ride along so services can log or verify. Response
    JSON: {"embeddings": [[float, ...], ...]} in request order. The API key,
    if any, is read from the DENSEVAL_API_KEY environment variable.
    """

    def __init__(self, cfg: ProviderConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self._session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_batch(self, texts: list[str], role: EmbedRole) -> list[list[float]]:
        payload = {
            "model": self.cfg.model,
            "role": role.value,
            "instruction": self.cfg.instruction,
            "texts": texts,
        }
        last_err: Exception | None = None
        for attempt in range(self.cfg.retries + 1):
            try:
                resp = self._session.post(
                    self.cfg.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.cfg.timeout,
                )
                if resp.status_code != 200:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                body = resp.json()
                embeddings = body["embeddings"]
                if not isinstance(embeddings, list) or len(embeddings) != len(texts):
                    raise IntegrityError(
                        f"service returned {len(embeddings)} embeddings for {len(texts)} texts"
                    )
                return embeddings
            except IntegrityError:
                raise
            except Exception as e:  # transport/JSON/schema issues are retryable
                last_err = e
                if attempt < self.cfg.retries:
                    time.sleep(self.cfg.retry_backoff * (2**attempt))
        raise TransportError(
            f"embedding request failed after {self.cfg.retries + 1} attempts: {last_err}"
        )

    def embed(self, items: Sequence[tuple[str, str]], role: EmbedRole) -> list[EmbeddingVector]:
        texts = [preprocess(text, role, self.cfg) for _id, text in items]
        batches = [
            (i, texts[i : i + self.cfg.batch_size])
            for i in range(0, len(texts), self.cfg.batch_size)
        ]
        results: dict[int, list[list[float]]] = {}
        if self.cfg.parallel > 1 and len(batches) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=self.cfg.parallel) as pool:
                futures = {
                    pool.submit(self._post_batch, chunk, role): start for start, chunk in batches
                }
                for fut in concurrent.futures.as_completed(futures):
                    results[futures[fut]] = fut.result()
        else:
            for start, chunk in batches:
                results[start] = self._post_batch(chunk, role)

        out: list[EmbeddingVector] = []
        for start, chunk in batches:
            for offset, emb in enumerate(results[start]):
                vid = items[start + offset][0]
                out.append(EmbeddingVector(vid, normalize(np.asarray(emb, dtype=np.float32))))
        dims = {v.values.shape[0] for v in out}
        if len(dims) > 1:
            raise IntegrityError(f"service returned mixed dimensions: {sorted(dims)}")
        return out


def make_provider(cfg: ProviderConfig):
    if cfg.kind == "vector-file":
        return VectorFileProvider(cfg)
    return RemoteProvider(cfg)


def embed_batch(
    items: Sequence[tuple[str, str]], role: EmbedRole, cfg: ProviderConfig, provider=None
) -> list[EmbeddingVector]:
    """One unit-norm vector per (id, text) input, order preserved."""
    provider = provider or make_provider(cfg)
    vectors = provider.embed(items, role)
    if len(vectors) != len(items):
        raise IntegrityError(f"provider returned {len(vectors)} vectors for {len(items)} inputs")
    return vectors
