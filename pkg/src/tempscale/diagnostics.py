"""Per-position loss-decrease profiles between checkpoint pairs.

After the separation point the gap and scaling factors are constant, so
the loss decrease between two checkpoints should be uniform across token
positions. The flatness statistic (coefficient of variation of the
per-position deltas) quantifies how far a checkpoint pair is from that
uniform-learning regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tempscale.errors import InsufficientSpanError, MissingCheckpointError
from tempscale.loss_log import Trajectory


@dataclass(frozen=True)
class DeltaProfile:
    """Per-position loss decrease from n_from to n_to tokens."""

    n_from: int
    n_to: int
    delta_by_position: np.ndarray
    flatness: float | None  # std / |mean| of the deltas; None when mean is 0

    def __post_init__(self):
        if self.n_to <= self.n_from:
            raise ValueError("n_to must exceed n_from")
        arr = np.asarray(self.delta_by_position, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "delta_by_position", arr)


def _find_profile(traj: Trajectory, tokens: int):
    for p in traj.profiles:
        if p.tokens_trained == tokens:
            return p
    raise MissingCheckpointError(f"no checkpoint at tokens_trained={tokens}")


def delta_profile(traj: Trajectory, n_from: int, n_to: int,
                  trim_head: bool = False) -> DeltaProfile:
    """Elementwise loss decrease between two checkpoints plus flatness.

    With ``trim_head`` the first 1% of positions (the highest-variance
    region) is dropped from the flatness statistic, not from the deltas.
    """
    p_from = _find_profile(traj, n_from)
    p_to = _find_profile(traj, n_to)
    deltas = p_from.loss_by_position - p_to.loss_by_position
    stat = deltas
    if trim_head:
        skip = max(1, deltas.size // 100)
        stat = deltas[skip:]
    mean = float(np.mean(stat))
    flatness = None if mean == 0.0 else float(np.std(stat) / abs(mean))
    return DeltaProfile(n_from, n_to, deltas, flatness)


@dataclass(frozen=True)
class UniformityReport:
    early: DeltaProfile
    late: DeltaProfile
    uniformity_improved: bool  # late flatness below early flatness


def uniformity_report(traj: Trajectory, n_sep: int,
                      window_frac: float = 0.05,
                      trim_head: bool = False) -> UniformityReport:
    """Compare delta-profile flatness before and after the separation point.

    Picks one early checkpoint pair (both before n_sep) and one late pair
    (both after), each spanning roughly ``window_frac`` of the schedule.
    """
    tokens = [p.tokens_trained for p in traj.profiles]
    pre = [t for t in tokens if t < n_sep]
    post = [t for t in tokens if t >= n_sep]
    if len(pre) < 2 or len(post) < 2:
        raise InsufficientSpanError(
            "trajectory must have at least 2 checkpoints on each side of n_sep"
        )
    window = window_frac * traj.manifest.n_tot

    def pick_pair(candidates):
        start = candidates[0]
        want = start + window
        end = min(candidates[1:], key=lambda t: abs(t - want))
        return start, end

    early = delta_profile(traj, *pick_pair(pre), trim_head=trim_head)
    # Latest available window, where stabilization is most advanced.
    post_rev = list(reversed(post))
    late_end = post_rev[0]
    want = late_end - window
    late_start = min(post_rev[1:], key=lambda t: abs(t - want))
    late = delta_profile(traj, late_start, late_end, trim_head=trim_head)

    improved = (
        early.flatness is not None
        and late.flatness is not None
        and late.flatness < early.flatness
    ) or (late.flatness == 0.0 and early.flatness not in (None, 0.0))
    return UniformityReport(early=early, late=late, uniformity_improved=improved)
