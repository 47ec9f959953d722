"""Contrastive finetuning of small bi-encoders on exported training pairs."""

__version__ = "0.1.0"

from enctrain.config import TrainConfig, derive_batch_size, load_config, steps_for
from enctrain.data import Pair, iter_batches, load_pairs
from enctrain.errors import ConfigError, DataError, EnctrainError, TrainingError
from enctrain.loss import info_nce, per_row_losses

__all__ = [
    "TrainConfig",
    "derive_batch_size",
    "load_config",
    "steps_for",
    "Pair",
    "iter_batches",
    "load_pairs",
    "ConfigError",
    "DataError",
    "EnctrainError",
    "TrainingError",
    "info_nce",
    "per_row_losses",
    "__version__",
]
