"""Loss-curve extrapolation from an early training prefix.

The prefix checkpoints give per-checkpoint hyperbolic fits; their
parameter series are fit with the temporal curve forms, the separation
point is estimated from the fitted gradients, and the post-separation
converging factor is continued with a fixed-phase cosine whose amplitude
and offset come from value/derivative continuity at the estimated
separation point. When the prefix already extends past the separation
point, the cosine tail is additionally calibrated against those points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from tempscale.errors import InsufficientDataError
from tempscale.fitkit import nls_fit
from tempscale.hyperbolic import HyperbolicParams
from tempscale.loss_log import RunManifest
from tempscale.temporal import (
    DEFAULT_EPSILON,
    ParamSeries,
    cosine_model,
    double_log_deriv,
    double_log_model,
    find_separation_point,
    fit_a0,
    fit_a1,
    saturating_model,
    series_from_fits,
    stabilized_value,
)

_MIN_PREFIX_CHECKPOINTS = 8
_MIN_REFIT_POINTS = 8
_SEP_REFINE_ROUNDS = 6
_SIN_THETA_FLOOR = 1e-12


class Situation(str, Enum):
    ONE = "one"  # prefix ends before the estimated separation point
    TWO = "two"  # prefix extends past the estimated separation point


@dataclass(frozen=True)
class PredictedCurves:
    """Temporal curves estimated from a training prefix."""

    alpha: tuple
    beta: tuple
    gamma: tuple            # 8 entries; 4..7 are None until the tail is solved
    n_sep: int              # estimated separation point (n_tot when degraded)
    n_train: int
    situation: Situation
    eps4: float = 0.0       # cosine-tail calibration offsets, zero in Situation one
    eps7: float = 0.0
    degraded: bool = False  # separation never reached within the schedule
    calibration_warning: bool = False
    fit_quality: dict = field(default_factory=dict)

    @property
    def has_tail(self) -> bool:
        return self.gamma[4] is not None


@dataclass(frozen=True)
class LossForecast:
    """Predicted mean loss per token count, with per-point provenance."""

    tokens: np.ndarray
    predicted_mean_loss: np.ndarray
    provenance: tuple  # "fitted" | "extrapolated" per point

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=float)
        values = np.asarray(self.predicted_mean_loss, dtype=float)
        if tokens.shape != values.shape or tokens.size != len(self.provenance):
            raise ValueError("forecast vectors must have equal length")
        if np.any(np.diff(tokens) <= 0):
            raise ValueError("forecast tokens must be increasing")
        tokens.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "predicted_mean_loss", values)
        object.__setattr__(self, "provenance", tuple(self.provenance))


def default_grid(manifest: RunManifest) -> np.ndarray:
    """Checkpoint-cadence token grid continued to the end of training."""
    step = manifest.checkpoint_interval
    grid = np.arange(step, manifest.n_tot + 1, step, dtype=float)
    if grid.size == 0 or grid[-1] != manifest.n_tot:
        grid = np.append(grid, float(manifest.n_tot))
    return grid


def fit_prefix(fits: list[HyperbolicParams], manifest: RunManifest,
               epsilon: float = DEFAULT_EPSILON) -> PredictedCurves:
    """Fit prefix parameter series and estimate the separation point.

    The cosine tail is left unsolved; see ``solve_cosine_tail`` and
    ``predict`` for the full pipeline. When the prefix extends past the
    estimated separation point, the pre-separation forms are re-fit on
    pre-separation checkpoints only (the raw series is flat past the
    separation point) and the estimate is refined.
    """
    if len(fits) < _MIN_PREFIX_CHECKPOINTS:
        raise InsufficientDataError(
            f"prefix needs at least {_MIN_PREFIX_CHECKPOINTS} checkpoints, "
            f"got {len(fits)}"
        )
    s_a0, s_a1, s_a2 = series_from_fits(fits)
    n_train = int(s_a0.tokens[-1])
    grid = default_grid(manifest)

    quality = {}
    n_sep = None
    limit = None
    alpha = beta = gamma_log = None
    for _ in range(_SEP_REFINE_ROUNDS):
        if limit is None:
            sub0, sub1, sub2 = s_a0, s_a1, s_a2
        else:
            keep = s_a0.tokens <= limit
            if int(np.sum(keep)) < _MIN_REFIT_POINTS:
                break
            sub0 = ParamSeries(s_a0.tokens[keep], s_a0.values[keep])
            sub1 = ParamSeries(s_a1.tokens[keep], s_a1.values[keep])
            sub2 = ParamSeries(s_a2.tokens[keep], s_a2.values[keep])
        alpha, quality["a0"], _ = fit_a0(sub0)
        beta, quality["a1"], _ = fit_a1(sub1)
        gamma_log, quality["a2_log"], _ = _fit_a2_log(sub2)
        new_sep = find_separation_point(alpha, beta, epsilon, grid)
        if new_sep is None:
            if limit is None:
                n_sep = None
            break
        if new_sep == n_sep and limit is not None:
            break
        n_sep = new_sep
        if new_sep < n_train:
            limit = new_sep
        else:
            break

    degraded = n_sep is None
    if degraded:
        n_sep = manifest.n_tot
    situation = Situation.TWO if n_train > n_sep else Situation.ONE
    return PredictedCurves(
        alpha=alpha,
        beta=beta,
        gamma=tuple(gamma_log) + (None, None, None, None),
        n_sep=int(n_sep),
        n_train=n_train,
        situation=situation,
        degraded=degraded,
        fit_quality=quality,
    )


def _fit_a2_log(series: ParamSeries):
    from tempscale.temporal import _double_log_init, _robust_fit

    fit, filtered = _robust_fit(double_log_model, series, _double_log_init(series))
    return tuple(fit.params), fit.r_squared, filtered


def solve_cosine_boundary(value, deriv, n_sep, n_tot, n_warmup):
    """Closed-form cosine tail from value/derivative continuity.

    Solves g4 * cos(theta) + g7 = value and
    -g4 * (pi / n_tot) * sin(theta) = deriv at theta = (pi / n_tot) *
    (n_sep - n_warmup). When sin(theta) vanishes the derivative condition
    is unsolvable; the amplitude is then chosen so the tail's total drop
    over [n_sep, n_tot] matches the left branch's drop over an
    equal-length trailing window.
    """
    omega = math.pi / n_tot
    theta = omega * (n_sep - n_warmup)
    if abs(math.sin(theta)) < _SIN_THETA_FLOOR:
        return None  # caller applies the drop-matching fallback
    g4 = -deriv / (omega * math.sin(theta))
    g7 = value - g4 * math.cos(theta)
    return g4, g7


def solve_cosine_tail(pc: PredictedCurves, manifest: RunManifest):
    """Amplitude and offset of the fixed-phase cosine tail.

    The frequency is pi / n_tot and the phase offset -pi * n_warmup /
    n_tot (half a cosine period over the post-warmup schedule).
    """
    n_sep = pc.n_sep
    omega = math.pi / manifest.n_tot
    theta = omega * (n_sep - manifest.n_warmup)
    value = float(double_log_model(np.asarray(pc.gamma[:4], dtype=float),
                                   np.asarray(float(n_sep))))
    deriv = float(double_log_deriv(pc.gamma[:4], float(n_sep)))
    solved = solve_cosine_boundary(value, deriv, n_sep, manifest.n_tot,
                                   manifest.n_warmup)
    if solved is not None:
        return solved
    # Fallback: match the left branch's drop over an equal-length window.
    window = manifest.n_tot - n_sep
    theta_end = omega * (manifest.n_tot - manifest.n_warmup)
    left_start = max(float(n_sep - window), float(manifest.checkpoint_interval))
    left_drop = float(
        double_log_model(np.asarray(pc.gamma[:4], dtype=float),
                         np.asarray(left_start))
    ) - value
    denom = math.cos(theta) - math.cos(theta_end)
    g4 = left_drop / denom if denom != 0.0 else 0.0
    g7 = value - g4 * math.cos(theta)
    return g4, g7


def calibrate_situation_two(pc: PredictedCurves, post_sep_points: ParamSeries):
    """Least-squares offsets on the cosine tail from post-separation data.

    Returns (eps4, eps7, warning). With fewer than two post-separation
    points the offsets are zero and the warning flag is set.
    """
    ts = post_sep_points.active_tokens
    vs = post_sep_points.active_values
    if ts.size < 2:
        return 0.0, 0.0, True
    g4, g5, g6, g7 = pc.gamma[4:]

    def model(params, n):
        e4, e7 = params
        return (g4 + e4) * np.cos(g5 * n + g6) + (g7 + e7)

    fit = nls_fit(model, ts, vs, np.array([0.0, 0.0]))
    return float(fit.params[0]), float(fit.params[1]), False


def eval_predicted(pc: PredictedCurves, n):
    """Evaluate the predicted (a0, a1, a2) at token count(s) n."""
    n = np.asarray(n, dtype=float)
    a0 = stabilized_value(double_log_model, pc.alpha, n, pc.n_sep)
    a1 = stabilized_value(saturating_model, pc.beta, n, pc.n_sep)
    a2 = double_log_model(np.asarray(pc.gamma[:4], dtype=float), n)
    if pc.has_tail:
        g4, g5, g6, g7 = pc.gamma[4:]
        tail = cosine_model((g4 + pc.eps4, g5, g6, g7 + pc.eps7), n)
        a2 = np.where(n >= pc.n_sep, tail, a2)
    return a0, a1, a2


def forecast(pc: PredictedCurves, manifest: RunManifest, grid) -> LossForecast:
    """Predicted mean loss over a token grid, aggregated over positions."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid > manifest.n_tot):
        raise ValueError("grid must lie within (0, n_tot]")
    positions = np.arange(1, manifest.seq_len + 1, dtype=float)
    a0, a1, a2 = eval_predicted(pc, grid)
    hyper = np.mean(1.0 / (1.0 + np.outer(np.atleast_1d(a1), positions)), axis=1)
    values = np.atleast_1d(a0) * hyper + np.atleast_1d(a2)
    provenance = tuple(
        "fitted" if n <= pc.n_train else "extrapolated" for n in grid
    )
    return LossForecast(grid, values, provenance)


def predict(fits: list[HyperbolicParams], manifest: RunManifest,
            epsilon: float = DEFAULT_EPSILON) -> PredictedCurves:
    """Full prefix-to-curves pipeline: fit, tail solve, and calibration."""
    pc = fit_prefix(fits, manifest, epsilon=epsilon)
    if pc.degraded:
        return pc
    g4, g7 = solve_cosine_tail(pc, manifest)
    omega = math.pi / manifest.n_tot
    gamma = pc.gamma[:4] + (g4, omega, -omega * manifest.n_warmup, g7)
    pc = replace(pc, gamma=gamma)
    if pc.situation is Situation.TWO:
        _, _, s_a2 = series_from_fits(fits)
        post = s_a2.tokens > pc.n_sep
        post_series = ParamSeries(s_a2.tokens[post], s_a2.values[post]) \
            if int(np.sum(post)) else ParamSeries(
                np.array([]), np.array([]))
        eps4, eps7, warning = calibrate_situation_two(pc, post_series) \
            if int(np.sum(post)) else (0.0, 0.0, True)
        pc = replace(pc, eps4=eps4, eps7=eps7, calibration_warning=warning)
    return pc
