"""Tiny decoder-only character-level LM training harness.

Trains a small transformer on a character corpus with a cosine
learning-rate schedule and optional position-weighting of the training
loss, and logs per-position validation losses at regular checkpoints in
the tempscale loss-log file format (manifest.json + losses.jsonl).
"""

from toylm.config import HarnessConfig, load_config
from toylm.corpus import generate_corpus, load_corpus
from toylm.weights import position_weights
from toylm.train import train_and_log

__all__ = [
    "HarnessConfig",
    "load_config",
    "generate_corpus",
    "load_corpus",
    "position_weights",
    "train_and_log",
]
