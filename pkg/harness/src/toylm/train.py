"""Training loop: cosine LR with warmup, checkpointed per-position logging.

Emits ``manifest.json`` and ``losses.jsonl`` in the tempscale loss-log
format so the primary pipeline can consume the run directly. Validation
losses come from a fixed set of held-out sequences and are never
weighted; the position-weighting strategy applies to the training
objective only, and only after the configured activation token count.
"""

from __future__ import annotations

import json
import logging
import math
import os

import numpy as np
import torch

from toylm.config import HarnessConfig
from toylm.corpus import load_corpus
from toylm.model import TinyDecoder
from toylm.weights import position_weights

log = logging.getLogger("toylm")

DIVERGENCE_LOSS = 20.0


class DivergenceError(RuntimeError):
    """Training loss exceeded the divergence threshold."""


def cosine_lr(tokens_seen: int, config: HarnessConfig) -> float:
    """Learning rate at a token count: linear warmup then cosine decay."""
    peak = config.learning_rate
    if tokens_seen < config.warmup_tokens:
        return peak * tokens_seen / max(1, config.warmup_tokens)
    span = config.total_tokens - config.warmup_tokens
    progress = (tokens_seen - config.warmup_tokens) / span
    return peak * 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))


def _sample_batch(data, rng, batch_size, seq_len, val_starts):
    """Random training windows avoiding the held-out validation starts."""
    high = data.size - seq_len - 1
    starts = rng.integers(0, high, batch_size)
    while np.intersect1d(starts, val_starts).size:
        starts = rng.integers(0, high, batch_size)
    x = np.stack([data[s:s + seq_len] for s in starts])
    y = np.stack([data[s + 1:s + seq_len + 1] for s in starts])
    return torch.from_numpy(x), torch.from_numpy(y)


def _validation_set(data, rng, config: HarnessConfig):
    high = data.size - config.seq_len - 1
    starts = np.sort(rng.choice(high, size=config.n_val_sequences,
                                replace=False))
    x = np.stack([data[s:s + config.seq_len] for s in starts])
    y = np.stack([data[s + 1:s + config.seq_len + 1] for s in starts])
    return torch.from_numpy(x), torch.from_numpy(y), starts


@torch.no_grad()
def _validate(model, val_x, val_y) -> np.ndarray:
    model.eval()
    losses = model.position_losses(val_x, val_y)
    model.train()
    return losses.mean(dim=0).double().cpu().numpy()


def train_and_log(config: HarnessConfig, out_dir) -> None:
    """Train the model and write manifest.json + losses.jsonl to out_dir."""
    if config.total_tokens < config.tokens_per_step:
        raise ValueError(
            "total_tokens below one training step; nothing would be logged"
        )
    if not os.path.exists(config.corpus_path):
        raise FileNotFoundError(f"corpus not found: {config.corpus_path}")
    data, vocab = load_corpus(config.corpus_path)
    if data.size < config.seq_len * (config.n_val_sequences + config.batch_size):
        raise ValueError("corpus too small for the configured sequences")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = TinyDecoder(len(vocab), config.seq_len, config.d_model,
                        config.n_layers, config.n_heads)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    val_x, val_y, val_starts = _validation_set(data, rng, config)
    weights = torch.from_numpy(
        position_weights(config.weighting, config.seq_len)
    ).float()

    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "run_id": config.run_id,
        "n_tot": config.total_tokens,
        "n_warmup": config.warmup_tokens,
        "seq_len": config.seq_len,
        "checkpoint_interval": config.checkpoint_interval,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")

    tokens_seen = 0
    next_checkpoint = config.checkpoint_interval
    log_path = os.path.join(out_dir, "losses.jsonl")
    with open(log_path, "w") as log_fh:
        while tokens_seen < config.total_tokens:
            lr = cosine_lr(tokens_seen, config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            x, y = _sample_batch(data, rng, config.batch_size, config.seq_len,
                                 val_starts)
            losses = model.position_losses(x, y)
            if config.weighting != "default" \
                    and tokens_seen >= config.weighting_activation_tokens:
                loss = (losses * weights).mean()
            else:
                loss = losses.mean()
            if not torch.isfinite(loss) or loss.item() > DIVERGENCE_LOSS:
                raise DivergenceError(
                    f"training loss {loss.item():.3f} at {tokens_seen} tokens "
                    f"exceeds {DIVERGENCE_LOSS}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            tokens_seen += config.tokens_per_step

            if tokens_seen >= next_checkpoint or tokens_seen >= config.total_tokens:
                profile = _validate(model, val_x, val_y)
                record = {
                    "tokens_trained": min(tokens_seen, config.total_tokens),
                    "loss_by_position": [float(v) for v in profile],
                }
                log_fh.write(json.dumps(record))
                log_fh.write("\n")
                log_fh.flush()
                log.info("checkpoint at %d tokens: mean loss %.4f",
                         record["tokens_trained"], float(profile.mean()))
                next_checkpoint += config.checkpoint_interval
