"""Harness configuration: model dims, schedule, and weighting strategy."""

from __future__ import annotations

import json
from dataclasses import dataclass

STRATEGIES = ("default", "head_suppression", "body_suppression",
              "tail_suppression")


@dataclass(frozen=True)
class HarnessConfig:
    """Complete description of one toy training run.

    ``weighting_activation_tokens`` stands in for the separation point:
    the position-weighting strategy is applied to the training objective
    only after that many tokens (default 30% of the schedule). Validation
    losses are always unweighted.
    """

    corpus_path: str
    run_id: str = "toy"
    n_layers: int = 2
    n_heads: int = 2
    d_model: int = 64
    seq_len: int = 128
    batch_size: int = 8
    total_tokens: int = 1_000_000
    warmup_tokens: int = 10_000
    checkpoint_interval: int = 100_000
    weighting: str = "default"
    weighting_activation_tokens: int | None = None  # None -> 30% of total
    n_val_sequences: int = 64
    learning_rate: float = 3e-3
    seed: int = 0

    def __post_init__(self):
        if self.weighting not in STRATEGIES:
            raise ValueError(f"unknown weighting strategy: {self.weighting!r}")
        if self.seq_len < 2:
            raise ValueError("seq_len must be >= 2")
        if self.total_tokens <= 0 or self.checkpoint_interval <= 0:
            raise ValueError("token budgets must be positive")
        if not 0 <= self.warmup_tokens < self.total_tokens:
            raise ValueError("warmup must satisfy 0 <= warmup < total")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.weighting_activation_tokens is None:
            object.__setattr__(self, "weighting_activation_tokens",
                               int(0.3 * self.total_tokens))

    @property
    def tokens_per_step(self) -> int:
        return self.batch_size * self.seq_len


def load_config(path) -> HarnessConfig:
    """Read a HarnessConfig from a JSON file."""
    with open(path) as fh:
        raw = json.load(fh)
    return HarnessConfig(**raw)
