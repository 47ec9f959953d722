"""Bi-encoder wrapper: transformer backbone, first-token pooling, unit norm."""

import torch
import torch.nn.functional as F
from transformers import AutoModel, AutoTokenizer

from enctrain.errors import TrainingError


class Encoder:
    """One tower used for both queries and passages.

    The embedding of a text is the L2-normalized hidden state of the first
    (CLS) token. `embed` respects the backbone's train/eval mode; callers
    wrap inference in torch.no_grad().
    """

    def __init__(self, model, tokenizer, device: str = "cpu", max_length: int = 256):
        self.model = model.to(device)
        self.tokenizer = tokenizer
        self.device = device
        self.max_length = max_length

    @classmethod
    def load(cls, name_or_path: str, device: str = "cpu", max_length: int = 256) -> "Encoder":
        try:
            model = AutoModel.from_pretrained(name_or_path)
            tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        except Exception as e:
            raise TrainingError(f"cannot load backbone {name_or_path!r}: {e}") from None
        return cls(model, tokenizer, device=device, max_length=max_length)

    def embed(self, texts: list[str]) -> torch.Tensor:
        if not texts:
            raise ValueError("empty text batch")
        enc = self.tokenizer(
            list(texts),
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        ).to(self.device)
        hidden = self.model(**enc).last_hidden_state[:, 0, :]
        return F.normalize(hidden, p=2, dim=-1)

    def save(self, path) -> None:
        self.model.save_pretrained(path)
        self.tokenizer.save_pretrained(path)

    def parameters(self):
        return self.model.parameters()

    def train_mode(self) -> None:
        self.model.train()

    def eval_mode(self) -> None:
        self.model.eval()
