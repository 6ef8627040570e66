"""Per-checkpoint hyperbolic fit of loss versus token position.

The loss at position i follows ``a0 / (1 + a1 * i) + a2``: a0 is the loss
gap between the first and last positions, a1 the scaling factor along the
sequence, and a2 the converged per-token loss at long context.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from tempscale.errors import InsufficientDataError
from tempscale.fitkit import nls_fit
from tempscale.loss_log import TokenLossProfile, Trajectory

_FLAT_RANGE = 1e-9
A1_BOUNDS = (0.0, 10.0)


@dataclass(frozen=True)
class HyperbolicParams:
    """Fitted position-loss curve for one checkpoint."""

    a0: float
    a1: float
    a2: float
    r_squared: float
    tokens_trained: int
    converged: bool = True
    degenerate: bool = False


def eval_position_loss(p: HyperbolicParams, i) -> float:
    """Loss at 1-indexed position i under the fitted curve."""
    return p.a0 / (1.0 + p.a1 * np.asarray(i, dtype=float)) + p.a2


def position_curve(p: HyperbolicParams, n: int) -> np.ndarray:
    """Curve values over positions 1..n."""
    return eval_position_loss(p, np.arange(1, n + 1))


def _model(params, i):
    a0, a1, a2 = params
    return a0 / (1.0 + a1 * i) + a2


def _initial_guess(losses: np.ndarray) -> np.ndarray:
    n = losses.size
    tail = losses[-max(1, n // 10):]
    a2 = float(np.mean(tail))
    a0 = float(losses[0] - a2)
    a1 = 10.0 / n
    return np.array([a0, a1, a2])


def fit_checkpoint(profile: TokenLossProfile) -> HyperbolicParams:
    """Fit the hyperbolic position law to one checkpoint's loss profile.

    Flat profiles (range below 1e-9) short-circuit to a zero-gap curve
    since a1 is unidentifiable there.
    """
    losses = profile.loss_by_position
    n = losses.size
    if n < 4:
        raise InsufficientDataError("hyperbolic fit needs at least 4 positions")
    init = _initial_guess(losses)
    if float(np.ptp(losses)) < _FLAT_RANGE:
        return HyperbolicParams(
            a0=0.0,
            a1=float(init[1]),
            a2=float(np.mean(losses)),
            r_squared=1.0,
            tokens_trained=profile.tokens_trained,
            degenerate=True,
        )
    positions = np.arange(1, n + 1, dtype=float)
    bounds = [None, A1_BOUNDS, (0.0, float(losses[0]))]
    fit = nls_fit(_model, positions, losses, init, bounds=bounds)
    return HyperbolicParams(
        a0=float(fit.params[0]),
        a1=float(fit.params[1]),
        a2=float(fit.params[2]),
        r_squared=1.0 if fit.r_squared is None else fit.r_squared,
        tokens_trained=profile.tokens_trained,
        converged=fit.converged,
    )


def fit_trajectory(traj: Trajectory, jobs: int = 1) -> list[HyperbolicParams]:
    """Fit every checkpoint of a trajectory, in tokens_trained order.

    Per-checkpoint fits are independent; with ``jobs > 1`` they run in a
    process pool. Non-converged checkpoints are kept (flagged through
    ``converged``) rather than aborting the batch.
    """
    if not traj.profiles:
        raise InsufficientDataError("trajectory has no checkpoints")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fit_checkpoint, traj.profiles))
    return [fit_checkpoint(p) for p in traj.profiles]


def fit_quality_fraction(fits, threshold: float = 0.95) -> float:
    """Fraction of checkpoint fits with R-squared above the threshold."""
    if not fits:
        raise InsufficientDataError("no fits given")
    return sum(1 for f in fits if f.r_squared > threshold) / len(fits)


def aggregate_mean_loss(p: HyperbolicParams, n: int) -> float:
    """Mean loss over positions 1..n implied by the fitted curve."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(np.mean(position_curve(p, n)))
