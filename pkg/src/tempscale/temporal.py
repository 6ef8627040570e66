"""Temporal evolution of the per-checkpoint hyperbolic parameters.

Across checkpoints, the loss gap factor follows a double-log curve in
tokens trained, the position scaling factor a saturating reciprocal, and
the converging factor a piecewise log/cosine curve. The separation point
is the earliest token count where both the gap and scaling curves have
flattened below a gradient threshold; past it the gap and scaling factors
are held constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tempscale.errors import InsufficientDataError, TempscaleError
from tempscale.fitkit import nls_fit, r_squared
from tempscale.hyperbolic import HyperbolicParams
from tempscale.loss_log import RunManifest, Trajectory

# Gradient threshold: 1e-4 nats per 1e9 tokens.
DEFAULT_EPSILON = 1e-4 / 1e9

_MAD_SCALE = 1.4826
_MAD_THRESHOLD = 3.0
_MIN_SEGMENT_POINTS = 5
_MIN_REFIT_POINTS = 8
_SEP_REFINE_ROUNDS = 6


# --------------------------------------------------------------------------
# Parametric curve forms
# --------------------------------------------------------------------------

def double_log_model(params, n):
    """c0 * log(c1 * log(n) + c2) + c3; non-finite outside its domain."""
    c0, c1, c2, c3 = params
    inner = c1 * np.log(n) + c2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(inner > 0, c0 * np.log(np.where(inner > 0, inner, 1.0)) + c3,
                        np.inf)


def double_log_deriv(params, n):
    c0, c1, c2, _ = params
    inner = c1 * np.log(n) + c2
    return c0 * c1 / (inner * n)


def saturating_model(params, n):
    b0, b1, b2 = params
    return b0 / (1.0 + b1 * n) + b2


def saturating_deriv(params, n):
    b0, b1, _ = params
    return -b0 * b1 / (1.0 + b1 * n) ** 2


def cosine_model(params, n):
    g4, g5, g6, g7 = params
    return g4 * np.cos(g5 * n + g6) + g7


def cosine_deriv(params, n):
    g4, g5, g6, _ = params
    return -g4 * g5 * np.sin(g5 * n + g6)


# --------------------------------------------------------------------------
# Parameter series and outlier filtering
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSeries:
    """One hyperbolic parameter collected across checkpoints."""

    tokens: np.ndarray
    values: np.ndarray
    outlier_mask: np.ndarray = None  # True marks an outlier

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=float)
        values = np.asarray(self.values, dtype=float)
        mask = (np.zeros(tokens.size, dtype=bool) if self.outlier_mask is None
                else np.asarray(self.outlier_mask, dtype=bool))
        if tokens.shape != values.shape or tokens.shape != mask.shape:
            raise ValueError("tokens, values, outlier_mask must have equal length")
        if np.any(np.diff(tokens) <= 0):
            raise ValueError("tokens must be strictly increasing")
        for name, arr in (("tokens", tokens), ("values", values),
                          ("outlier_mask", mask)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def active_tokens(self) -> np.ndarray:
        return self.tokens[~self.outlier_mask]

    @property
    def active_values(self) -> np.ndarray:
        return self.values[~self.outlier_mask]


def series_from_fits(fits: list[HyperbolicParams]):
    """Build the (a0, a1, a2) parameter series from checkpoint fits."""
    tokens = np.array([f.tokens_trained for f in fits], dtype=float)
    return (
        ParamSeries(tokens, np.array([f.a0 for f in fits])),
        ParamSeries(tokens, np.array([f.a1 for f in fits])),
        ParamSeries(tokens, np.array([f.a2 for f in fits])),
    )


def filter_outliers(series: ParamSeries, fitted_values) -> ParamSeries:
    """Mask points whose residual exceeds 3 * 1.4826 * MAD of the residuals.

    Statistics are taken over currently active points; already-masked
    points stay masked. When the active residuals are essentially zero
    (noiseless data) nothing new is masked, which makes the filter a
    no-op on an already-clean series.
    """
    fitted = np.asarray(fitted_values, dtype=float)
    residuals = series.values - fitted
    active = ~series.outlier_mask
    r_act = residuals[active]
    mad = float(np.median(np.abs(r_act - np.median(r_act))))
    scale = max(1.0, float(np.median(np.abs(series.values[active]))))
    if mad < 1e-12 * scale:
        return series
    threshold = _MAD_THRESHOLD * _MAD_SCALE * mad
    new_mask = series.outlier_mask | (np.abs(residuals) > threshold)
    return ParamSeries(series.tokens, series.values, new_mask)


def _robust_fit(model, series: ParamSeries, init, bounds=None):
    """Fit, mask outliers from the first-fit residuals, and re-fit once."""
    ts, vs = series.active_tokens, series.active_values
    if ts.size < _MIN_SEGMENT_POINTS:
        raise InsufficientDataError(
            f"need at least {_MIN_SEGMENT_POINTS} points, got {ts.size}"
        )
    first = nls_fit(model, ts, vs, init, bounds=bounds)
    fitted_all = np.asarray(model(first.params, series.tokens), dtype=float)
    filtered = filter_outliers(series, fitted_all)
    if np.array_equal(filtered.outlier_mask, series.outlier_mask):
        return first, filtered
    ts2, vs2 = filtered.active_tokens, filtered.active_values
    if ts2.size < max(_MIN_SEGMENT_POINTS, len(np.atleast_1d(init))):
        raise InsufficientDataError("outlier filter left too few points")
    second = nls_fit(model, ts2, vs2, first.params, bounds=bounds)
    return second, filtered


# --------------------------------------------------------------------------
# Individual series fits
# --------------------------------------------------------------------------

def _double_log_init(series: ParamSeries) -> np.ndarray:
    # With c1=1, c2=0 the form is linear in log(log n): solve that exactly.
    ts, vs = series.active_tokens, series.active_values
    x = np.log(np.log(ts))
    a = np.vstack([x, np.ones_like(x)]).T
    slope, intercept = np.linalg.lstsq(a, vs, rcond=None)[0]
    return np.array([slope, 1.0, 0.0, intercept])


def fit_a0(series: ParamSeries):
    """Fit the loss gap factor's double-log curve. Returns (alpha, r2, series)."""
    if np.any(series.tokens < 2):
        raise ValueError("token counts must be >= 2")
    fit, filtered = _robust_fit(double_log_model, series, _double_log_init(series))
    return tuple(fit.params), fit.r_squared, filtered


def fit_a1(series: ParamSeries):
    """Fit the scaling factor's saturating curve. Returns (beta, r2, series)."""
    ts, vs = series.active_tokens, series.active_values
    b2 = float(vs[-1])
    b0 = float(vs[0] - b2)
    b1 = 1.0 / float(np.median(ts))
    bounds = [None, (0.0, None), None]
    fit, filtered = _robust_fit(saturating_model, series, [b0, b1, b2], bounds=bounds)
    return tuple(fit.params), fit.r_squared, filtered


def find_separation_point(alpha, beta, epsilon, token_grid):
    """Earliest grid token count where both fitted gradients are below epsilon.

    Gradients are evaluated analytically on the fitted smooth curves, not
    on the raw noisy series. Returns None when no grid point qualifies.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    grid = np.asarray(token_grid, dtype=float)
    d0 = np.abs(double_log_deriv(alpha, grid))
    d1 = np.abs(saturating_deriv(beta, grid))
    hits = np.flatnonzero((d0 < epsilon) & (d1 < epsilon))
    if hits.size == 0:
        return None
    return int(grid[hits[0]])


def stabilized_value(model, params, n, n_sep):
    """Evaluate a fitted curve, held constant at its n_sep value past n_sep."""
    n = np.asarray(n, dtype=float)
    if n_sep is None:
        return model(params, n)
    return model(params, np.minimum(n, float(n_sep)))


def _cosine_init(tokens, values, manifest: RunManifest) -> np.ndarray:
    g5 = math.pi / manifest.n_tot
    g6 = -g5 * manifest.n_warmup
    basis = np.vstack([np.cos(g5 * tokens + g6), np.ones_like(tokens)]).T
    g4, g7 = np.linalg.lstsq(basis, values, rcond=None)[0]
    return np.array([g4, g5, g6, g7])


def fit_a2_piecewise(series: ParamSeries, n_sep, manifest: RunManifest):
    """Fit the converging factor: double-log before n_sep, cosine after.

    Returns (gamma, quality) where gamma has 8 entries (the last four are
    None when there are no post-separation points) and quality maps each
    fitted segment to its R-squared. The cosine frequency is free here;
    callers can compare it against pi / n_tot.
    """
    tokens = series.tokens
    if n_sep is None:
        pre_idx = np.ones(tokens.size, dtype=bool)
        post_idx = np.zeros(tokens.size, dtype=bool)
    else:
        pre_idx = tokens < n_sep
        post_idx = ~pre_idx
    n_post = int(np.sum(post_idx & ~series.outlier_mask))
    n_pre = int(np.sum(pre_idx & ~series.outlier_mask))
    if n_pre < _MIN_SEGMENT_POINTS:
        raise InsufficientDataError(
            f"pre-separation segment has {n_pre} points, need {_MIN_SEGMENT_POINTS}"
        )
    if 0 < n_post < _MIN_SEGMENT_POINTS:
        raise InsufficientDataError(
            f"post-separation segment has {n_post} points, need "
            f"{_MIN_SEGMENT_POINTS} for a two-segment fit"
        )

    pre_series = ParamSeries(tokens[pre_idx], series.values[pre_idx],
                             series.outlier_mask[pre_idx])
    log_fit, _ = _robust_fit(double_log_model, pre_series,
                             _double_log_init(pre_series))
    quality = {"log": log_fit.r_squared}
    gamma = list(log_fit.params) + [None, None, None, None]

    if n_post > 0:
        post_series = ParamSeries(tokens[post_idx], series.values[post_idx],
                                  series.outlier_mask[post_idx])
        init = _cosine_init(post_series.active_tokens, post_series.active_values,
                            manifest)
        bounds = [None, (0.0, None), None, None]
        cos_fit, _ = _robust_fit(cosine_model, post_series, init, bounds=bounds)
        gamma[4:] = list(cos_fit.params)
        quality["cosine"] = cos_fit.r_squared
    return tuple(gamma), quality


# --------------------------------------------------------------------------
# Assembled temporal curves
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TemporalCurves:
    """Fitted temporal evolution of (a0, a1, a2)."""

    alpha: tuple          # 4 double-log parameters for a0
    beta: tuple           # 3 saturating parameters for a1
    gamma: tuple          # 8 piecewise parameters for a2 (last 4 may be None)
    n_sep: int | None     # separation point snapped to a checkpoint, or None
    epsilon: float = DEFAULT_EPSILON
    fit_quality: dict = field(default_factory=dict)

    @property
    def has_cosine(self) -> bool:
        return self.gamma[4] is not None


def eval_curves(tc: TemporalCurves, n):
    """Evaluate (a0, a1, a2) at token count(s) n.

    a0 and a1 are held constant past the separation point; a2 switches
    from the double-log branch to the cosine branch there.
    """
    n = np.asarray(n, dtype=float)
    a0 = stabilized_value(double_log_model, tc.alpha, n, tc.n_sep)
    a1 = stabilized_value(saturating_model, tc.beta, n, tc.n_sep)
    if tc.n_sep is None:
        a2 = double_log_model(tc.gamma[:4], n)
    else:
        post = n >= tc.n_sep
        if np.any(post) and not tc.has_cosine:
            raise TempscaleError(
                "cosine segment queried but unset (no post-separation fit)"
            )
        a2 = double_log_model(tc.gamma[:4], n)
        if np.any(post):
            a2 = np.where(post, cosine_model(tc.gamma[4:], n), a2)
    return a0, a1, a2


def fitted_mean_losses(tc: TemporalCurves, tokens, seq_len: int) -> np.ndarray:
    """Mean loss per token count implied by the fitted curves."""
    tokens = np.atleast_1d(np.asarray(tokens, dtype=float))
    positions = np.arange(1, seq_len + 1, dtype=float)
    a0, a1, a2 = eval_curves(tc, tokens)
    a0 = np.atleast_1d(a0)
    a1 = np.atleast_1d(a1)
    a2 = np.atleast_1d(a2)
    hyper = np.mean(1.0 / (1.0 + np.outer(a1, positions)), axis=1)
    return a0 * hyper + a2


def fit_temporal(traj: Trajectory, fits: list[HyperbolicParams],
                 epsilon: float = DEFAULT_EPSILON) -> TemporalCurves:
    """Fit all three temporal curves and locate the separation point.

    The gap and scaling curves are first fit over every checkpoint. When a
    separation point is found, they are re-fit using only checkpoints up
    to it (the raw series is constant past the separation point, which
    would otherwise bias the pre-separation forms) and the separation
    point is re-estimated until it stabilizes.
    """
    if len(fits) < _MIN_SEGMENT_POINTS:
        raise InsufficientDataError("temporal fit needs at least 5 checkpoints")
    s_a0, s_a1, s_a2 = series_from_fits(fits)
    grid = s_a0.tokens

    n_sep = None
    limit = None
    alpha = beta = None
    quality = {}
    for _ in range(_SEP_REFINE_ROUNDS):
        if limit is None:
            sub0, sub1 = s_a0, s_a1
        else:
            keep = grid <= limit
            if int(np.sum(keep)) < _MIN_REFIT_POINTS:
                break
            sub0 = ParamSeries(s_a0.tokens[keep], s_a0.values[keep])
            sub1 = ParamSeries(s_a1.tokens[keep], s_a1.values[keep])
        alpha, r2_a0, _ = fit_a0(sub0)
        beta, r2_a1, _ = fit_a1(sub1)
        quality["a0"] = r2_a0
        quality["a1"] = r2_a1
        new_sep = find_separation_point(alpha, beta, epsilon, grid)
        if new_sep is None:
            # Keep an earlier estimate if the restricted refit lost it.
            if limit is None:
                n_sep = None
            break
        if new_sep == n_sep and limit is not None:
            break
        n_sep = new_sep
        limit = new_sep

    gamma, a2_quality = fit_a2_piecewise(s_a2, n_sep, traj.manifest)
    quality["a2_log"] = a2_quality.get("log")
    if "cosine" in a2_quality:
        quality["a2_cosine"] = a2_quality["cosine"]

    tc = TemporalCurves(alpha=alpha, beta=beta, gamma=gamma, n_sep=n_sep,
                        epsilon=epsilon, fit_quality=quality)
    try:
        quality["mean_loss"] = r_squared(
            traj.mean_losses, fitted_mean_losses(tc, grid, traj.manifest.seq_len)
        )
    except TempscaleError:
        pass
    return tc
