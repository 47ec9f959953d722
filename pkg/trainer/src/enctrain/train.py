"""The finetuning loop: AdamW over InfoNCE with in-batch negatives."""

import json
import math
import os
import random
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from enctrain.config import TrainConfig, derive_batch_size, steps_for
from enctrain.data import Pair, iter_batches, load_pairs
from enctrain.errors import TrainingError
from enctrain.holdout import evaluate_holdout
from enctrain.loss import info_nce
from enctrain.model import Encoder


@dataclass
class TrainState:
    step: int = 0
    running_loss: float = 0.0
    history: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)


def _set_seeds(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


class _MetricsLog:
    """Append-only JSONL of step records."""

    def __init__(self, path):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._f = open(path, "w", encoding="utf-8")

    def write(self, record: dict) -> None:
        self._f.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()


def _diagnostics(batch: list[Pair], sim: torch.Tensor) -> str:
    ids = [p.passage_id for p in batch]
    sim = sim.detach()
    return (
        f"batch passage_ids={ids}, sim min={float(sim.min()):.4f} "
        f"max={float(sim.max()):.4f}, any_nan={bool(torch.isnan(sim).any())}"
    )


def train(pairs_path, cfg: TrainConfig, encoder: Encoder | None = None) -> str:
    """Run finetuning; returns the final checkpoint path.

    Holdout evaluation (when configured) runs between optimizer steps, never
    concurrently with one, and shells out to the evaluation toolkit's CLI.
    """
    _set_seeds(cfg.seed)
    pairs = load_pairs(pairs_path)
    batch_size = cfg.batch_size or derive_batch_size(len(pairs), cfg.epochs, cfg.target_steps)
    total_steps = steps_for(len(pairs), batch_size, cfg.epochs)
    if encoder is None:
        encoder = Encoder.load(cfg.backbone, device=cfg.device, max_length=cfg.max_length)

    os.makedirs(cfg.out_dir, exist_ok=True)
    log = _MetricsLog(os.path.join(cfg.out_dir, "metrics.jsonl"))
    log.write(
        {
            "event": "start",
            "n_pairs": len(pairs),
            "batch_size": batch_size,
            "epochs": cfg.epochs,
            "total_steps": total_steps,
            "learning_rate": cfg.learning_rate,
            "weight_decay": cfg.weight_decay,
            "temperature": cfg.temperature,
            "backbone": cfg.backbone,
            "seed": cfg.seed,
        }
    )

    opt = torch.optim.AdamW(
        encoder.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    state = TrainState()
    window_loss, window_n = 0.0, 0
    t0 = time.perf_counter()
    try:
        encoder.train_mode()
        for batch in iter_batches(pairs, batch_size, cfg.epochs, cfg.seed):
            q = encoder.embed([p.query for p in batch])
            d = encoder.embed([p.positive for p in batch])
            sim = q @ d.T
            loss = info_nce(sim, cfg.temperature)
            loss_val = float(loss.item())
            if not math.isfinite(loss_val):
                raise TrainingError(
                    f"non-finite loss {loss_val} at step {state.step}: "
                    + _diagnostics(batch, sim)
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.step += 1
            window_loss += loss_val
            window_n += 1
            state.running_loss = window_loss / window_n
            if state.step % cfg.log_every == 0 or state.step == total_steps:
                log.write(
                    {
                        "event": "step",
                        "step": state.step,
                        "loss": round(window_loss / window_n, 6),
                        "elapsed_s": round(time.perf_counter() - t0, 2),
                    }
                )
                window_loss, window_n = 0.0, 0
            if (
                cfg.eval_every
                and cfg.holdout_queries
                and state.step % cfg.eval_every == 0
            ):
                encoder.eval_mode()
                ndcg = evaluate_holdout(
                    encoder,
                    cfg.holdout_queries,
                    cfg.corpus_passages,
                    os.path.join(cfg.out_dir, f"holdout-step{state.step}"),
                    k=cfg.eval_k,
                )
                encoder.train_mode()
                row = {"event": "holdout", "step": state.step, f"ndcg@{cfg.eval_k}": ndcg}
                state.history.append(row)
                log.write(row)

        final_path = os.path.join(cfg.out_dir, "checkpoint-final")
        encoder.eval_mode()
        encoder.save(final_path)
        state.checkpoints.append(final_path)
        if cfg.holdout_queries:
            ndcg = evaluate_holdout(
                encoder,
                cfg.holdout_queries,
                cfg.corpus_passages,
                os.path.join(cfg.out_dir, "holdout-final"),
                k=cfg.eval_k,
            )
            row = {"event": "holdout", "step": state.step, f"ndcg@{cfg.eval_k}": ndcg}
            state.history.append(row)
            log.write(row)
        log.write({"event": "done", "step": state.step, "checkpoint": final_path})
    finally:
        log.close()
    return final_path


def export_checkpoint(checkpoint_dir, out_dir) -> None:
    """Re-save a checkpoint through a load round trip, proving it is loadable
    by the serving adapter before it ships."""
    encoder = Encoder.load(checkpoint_dir)
    os.makedirs(out_dir, exist_ok=True)
    encoder.save(out_dir)
