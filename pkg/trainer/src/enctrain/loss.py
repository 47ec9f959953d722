"""InfoNCE over an in-batch similarity matrix."""

import torch
import torch.nn.functional as F


def _check(sim: torch.Tensor, temperature: float) -> None:
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError(f"expected a square similarity matrix, got shape {tuple(sim.shape)}")


def per_row_losses(sim: torch.Tensor, temperature: float) -> torch.Tensor:
    """-log softmax(sim_i / t)[i] per row; row i's true positive is column i."""
    _check(sim, temperature)
    targets = torch.arange(sim.shape[0], device=sim.device)
    return F.cross_entropy(sim / temperature, targets, reduction="none")


def info_nce(sim: torch.Tensor, temperature: float) -> torch.Tensor:
    """Mean InfoNCE loss; off-diagonal columns act as in-batch negatives."""
    return per_row_losses(sim, temperature).mean()
