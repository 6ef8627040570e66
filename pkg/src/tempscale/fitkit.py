"""Nonlinear least-squares solver and goodness-of-fit metrics.

The solver is a Levenberg-Marquardt iteration with a numerical Jacobian
(central differences). Bounds are enforced by projecting each trial point
onto the feasible box, so accepted steps can only decrease the residual
sum of squares. All routines are pure: identical inputs give bit-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tempscale.errors import (
    DegenerateVarianceError,
    InsufficientDataError,
    NonFiniteModelError,
)

COST_RTOL = 1e-10
STEP_RTOL = 1e-10
MAX_ITERATIONS = 500
_JACOBIAN_STEP = 1e-6
_MULTISTART_SCALE = 0.5
_MULTISTART_TRIES = 8


@dataclass(frozen=True)
class FitResult:
    """Outcome of one nonlinear least-squares fit.

    ``r_squared`` is None when the observations have zero variance (the
    coefficient of determination is undefined there).
    """

    params: np.ndarray
    residual_sum_squares: float
    r_squared: float | None
    converged: bool
    iterations: int


def mse(ys, fs) -> float:
    """Mean squared error between observations and fitted values."""
    ys = np.asarray(ys, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if ys.shape != fs.shape:
        raise ValueError("ys and fs must have equal length")
    if ys.size == 0:
        raise InsufficientDataError("mse requires at least one point")
    return float(np.mean((ys - fs) ** 2))


def r_squared(ys, fs) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot.

    Raises DegenerateVarianceError when all observations are identical,
    since the total sum of squares vanishes.
    """
    ys = np.asarray(ys, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if ys.shape != fs.shape:
        raise ValueError("ys and fs must have equal length")
    if ys.size < 2:
        raise InsufficientDataError("r_squared requires at least two points")
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    if ss_tot == 0.0:
        raise DegenerateVarianceError("observations have zero variance")
    ss_res = float(np.sum((ys - fs) ** 2))
    return 1.0 - ss_res / ss_tot


def _as_bounds(bounds, k):
    lo = np.full(k, -np.inf)
    hi = np.full(k, np.inf)
    if bounds is not None:
        for j, b in enumerate(bounds):
            if b is None:
                continue
            blo, bhi = b
            if blo is not None:
                lo[j] = blo
            if bhi is not None:
                hi[j] = bhi
    return lo, hi


def _project(p, lo, hi):
    return np.clip(p, lo, hi)


def _residuals(model, params, xs, ys):
    out = np.asarray(model(params, xs), dtype=float)
    return out - ys


def _cost(r):
    if not np.all(np.isfinite(r)):
        return np.inf
    return float(r @ r)


def _jacobian(model, params, xs, ys, lo, hi):
    k = params.size
    jac = np.empty((ys.size, k))
    for j in range(k):
        # Relative step: parameters here span many orders of magnitude
        # (token-scale rate constants can sit near 1e-8).
        h = _JACOBIAN_STEP * abs(params[j]) if params[j] != 0.0 else _JACOBIAN_STEP
        for attempt in range(3):
            pp = params.copy()
            pm = params.copy()
            pp[j] = min(params[j] + h, hi[j])
            pm[j] = max(params[j] - h, lo[j])
            denom = pp[j] - pm[j]
            if denom == 0.0:
                col = np.zeros(ys.size)
                break
            fp = np.asarray(model(pp, xs), dtype=float)
            fm = np.asarray(model(pm, xs), dtype=float)
            col = (fp - fm) / denom
            if np.all(np.isfinite(col)):
                break
            h /= 16.0  # shrink toward the feasible point and retry
        else:
            col = np.where(np.isfinite(col), col, 0.0)
        jac[:, j] = col
    return jac


def _levenberg_marquardt(model, xs, ys, init, lo, hi):
    params = _project(np.asarray(init, dtype=float), lo, hi)
    r = _residuals(model, params, xs, ys)
    cost = _cost(r)
    if not np.isfinite(cost):
        raise NonFiniteModelError(
            f"model is non-finite at initial parameters {params.tolist()}",
            params=params.copy(),
        )
    lam = 1e-3
    converged = False
    iteration = 0
    cost_floor = 1e-28 * max(1.0, float(ys @ ys))
    while iteration < MAX_ITERATIONS:
        if cost <= cost_floor:
            converged = True
            break
        iteration += 1
        jac = _jacobian(model, params, xs, ys, lo, hi)
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.maximum(np.diag(jtj), 1e-12)
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = _project(params + step, lo, hi)
            r_new = _residuals(model, candidate, xs, ys)
            cost_new = _cost(r_new)
            if cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        rel_step = float(np.linalg.norm(candidate - params)) / max(
            1.0, float(np.linalg.norm(params))
        )
        rel_cost = (cost - cost_new) / max(cost, np.finfo(float).tiny)
        params, r, cost = candidate, r_new, cost_new
        lam = max(lam / 3.0, 1e-14)
        if rel_step < STEP_RTOL and rel_cost < COST_RTOL:
            converged = True
            break
    return params, cost, converged, iteration


def _perturbation_signs(k, attempt):
    # Fixed deterministic +-1 pattern indexed by the attempt number.
    return np.array([1.0 if (attempt >> (j % 3)) & 1 == 0 else -1.0 for j in range(k)])


def _perturbed_init(init, attempt):
    signs = _perturbation_signs(init.size, attempt)
    # +-50% per parameter; an absolute offset keeps zero entries moving.
    return np.where(init != 0.0, init * (1.0 + _MULTISTART_SCALE * signs),
                    _MULTISTART_SCALE * signs)


def nls_fit(model, xs, ys, init, bounds=None) -> FitResult:
    """Fit ``model(params, xs) -> values`` to ``ys`` by least squares.

    The returned residual sum of squares never exceeds that of ``init``.
    ``converged`` is True iff both the relative step and the relative cost
    decrease fell below tolerance before the iteration cap. When the first
    attempt does not converge, or fits poorly (R-squared below 0.5), eight
    deterministic perturbations of ``init`` are tried and the best kept.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    init = np.asarray(init, dtype=float)
    if xs.shape[0] != ys.shape[0]:
        raise ValueError("xs and ys must have equal length")
    if ys.size < init.size:
        raise InsufficientDataError(
            f"need at least {init.size} points, got {ys.size}"
        )
    if not np.all(np.isfinite(init)):
        raise ValueError("init must be finite")
    lo, hi = _as_bounds(bounds, init.size)

    params, cost, converged, iters = _levenberg_marquardt(model, xs, ys, init, lo, hi)

    def _quality(p):
        try:
            return r_squared(ys, np.asarray(model(p, xs), dtype=float))
        except DegenerateVarianceError:
            return None

    quality = _quality(params)
    if not converged or (quality is not None and quality < 0.5):
        for attempt in range(_MULTISTART_TRIES):
            alt = _project(_perturbed_init(init, attempt), lo, hi)
            try:
                p2, c2, conv2, it2 = _levenberg_marquardt(model, xs, ys, alt, lo, hi)
            except NonFiniteModelError:
                continue
            if c2 < cost:
                params, cost, converged, iters = p2, c2, conv2, it2
        quality = _quality(params)

    # Monotone-improvement contract relative to the original init.
    init_cost = _cost(_residuals(model, _project(init, lo, hi), xs, ys))
    if cost > init_cost:
        params = _project(init, lo, hi)
        cost = init_cost
        converged = False
        quality = _quality(params)

    return FitResult(
        params=params,
        residual_sum_squares=cost,
        r_squared=quality,
        converged=converged,
        iterations=iters,
    )
