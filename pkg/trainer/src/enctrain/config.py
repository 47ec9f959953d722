"""Training configuration and the batch-size/step-count arithmetic."""

import dataclasses
import json
import math
from dataclasses import dataclass

from enctrain.errors import ConfigError

DEFAULT_BACKBONE = "BAAI/bge-base-zh-v1.5"


@dataclass
class TrainConfig:
    """Hyperparameters for one finetuning run.

    `batch_size` is usually left unset and derived from the corpus size so
    that `epochs` passes land near `target_steps` optimizer steps. Embeddings
    are the normalized first-token (CLS) state of the backbone.
    """

    backbone: str = DEFAULT_BACKBONE
    learning_rate: float = 5e-6
    weight_decay: float = 0.1
    temperature: float = 0.01
    target_steps: int = 4000
    epochs: int = 4
    batch_size: int | None = None
    max_length: int = 256
    seed: int = 13
    out_dir: str = "runs/enctrain"
    device: str = "cpu"
    log_every: int = 50
    eval_every: int = 0
    eval_k: int = 10
    holdout_queries: str | None = None
    corpus_passages: str | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.target_steps <= 0:
            raise ConfigError(f"target_steps must be > 0, got {self.target_steps}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_length < 8:
            raise ConfigError(f"max_length must be >= 8, got {self.max_length}")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}")
        if self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0, got {self.eval_every}")
        if (self.holdout_queries is None) != (self.corpus_passages is None):
            raise ConfigError("holdout_queries and corpus_passages must be set together")


_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


def load_config(path) -> TrainConfig:
    """Read a TrainConfig from a JSON object file; unknown keys are errors."""
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    unknown = sorted(set(raw) - _FIELDS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return TrainConfig(**raw)


def derive_batch_size(n_examples: int, epochs: int, target_steps: int) -> int:
    """Power of two nearest (in log space) to n*epochs/target_steps, in [1, n]."""
    if n_examples < 1:
        raise ConfigError("cannot derive a batch size for an empty corpus")
    ratio = n_examples * epochs / target_steps
    exponent = round(math.log2(ratio)) if ratio > 0 else 0
    batch = 2 ** max(exponent, 0)
    return max(1, min(batch, n_examples))


def steps_for(n_examples: int, batch_size: int, epochs: int) -> int:
    return math.ceil(n_examples / batch_size) * epochs
