"""Position-weighting strategies for the training loss.

Each strategy halves the weight of one region of the sequence (first 10%,
central 80%, or last 10% of positions) relative to the rest, then
rescales so the mean per-position weight is exactly 1.
"""

from __future__ import annotations

import numpy as np

_REGIONS = {
    "head_suppression": lambda n: (0, max(1, round(0.1 * n))),
    "body_suppression": lambda n: (max(1, round(0.1 * n)),
                                   n - max(1, round(0.1 * n))),
    "tail_suppression": lambda n: (n - max(1, round(0.1 * n)), n),
}


def position_weights(strategy: str, seq_len: int) -> np.ndarray:
    """Per-position training-loss weights with mean exactly 1.

    The suppressed region gets half the weight of the remaining
    positions; region boundaries round to the nearest position.
    """
    if seq_len < 2:
        raise ValueError("seq_len must be >= 2")
    if strategy == "default":
        return np.ones(seq_len)
    if strategy not in _REGIONS:
        raise ValueError(f"unknown weighting strategy: {strategy!r}")
    lo, hi = _REGIONS[strategy](seq_len)
    weights = np.ones(seq_len)
    weights[lo:hi] = 0.5
    weights /= weights.mean()
    return weights
