"""Whole-curve baselines: power-law, reciprocal, and logarithmic fits.

These treat the mean loss as a single function of tokens trained, without
the per-position decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from tempscale.errors import InsufficientDataError, ModelDomainError
from tempscale.fitkit import nls_fit


class BaselineKind(str, Enum):
    POWER_LAW = "power_law"      # (p1 * n)**p2 + p3
    RECIPROCAL = "reciprocal"    # a0 / (1 + a1 * n) + a2
    LOGARITHMIC = "logarithmic"  # log(a1 + a2 * n) + a3


@dataclass(frozen=True)
class BaselineModel:
    kind: BaselineKind
    params: tuple  # 3 reals
    r_squared: float | None = None


def _power_law(params, n):
    p1, p2, p3 = params
    base = p1 * n
    with np.errstate(invalid="ignore"):
        return np.where(base > 0, np.power(np.where(base > 0, base, 1.0), p2) + p3,
                        np.inf)


def _reciprocal(params, n):
    a0, a1, a2 = params
    return a0 / (1.0 + a1 * n) + a2


def _logarithmic(params, n):
    a1, a2, a3 = params
    arg = a1 + a2 * n
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(arg > 0, np.log(np.where(arg > 0, arg, 1.0)) + a3, np.inf)


_MODELS = {
    BaselineKind.POWER_LAW: _power_law,
    BaselineKind.RECIPROCAL: _reciprocal,
    BaselineKind.LOGARITHMIC: _logarithmic,
}


def eval_baseline(m: BaselineModel, n):
    """Closed-form baseline value at token count(s) n."""
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise ModelDomainError("token counts must be positive")
    out = _MODELS[BaselineKind(m.kind)](m.params, n)
    if not np.all(np.isfinite(out)):
        raise ModelDomainError(
            f"{BaselineKind(m.kind).value} baseline evaluated outside its domain"
        )
    return out if out.ndim else float(out)


def _initial_guess(kind: BaselineKind, tokens, losses) -> np.ndarray:
    if kind is BaselineKind.POWER_LAW:
        # Decaying-power geometry: small positive rate, mild negative exponent,
        # offset at the observed floor.
        return np.array([1.0 / tokens[0], -0.5, float(np.min(losses))])
    if kind is BaselineKind.RECIPROCAL:
        a2 = float(losses[-1])
        return np.array([float(losses[0]) - a2, 1.0 / float(np.median(tokens)), a2])
    # Logarithmic: decreasing branch has a2 < 0. Anchor the log argument at
    # 1 on the first point and at exp(-drop) on the last, which keeps it
    # positive over the observed range.
    drop = float(losses[0] - losses[-1])
    a2 = (np.exp(-drop) - 1.0) / (tokens[-1] - tokens[0])
    a1 = 1.0 - a2 * tokens[0]
    return np.array([a1, a2, float(losses[0])])


def fit_baseline(kind, tokens, mean_losses) -> BaselineModel:
    """Least-squares fit of one baseline form to the mean-loss curve."""
    kind = BaselineKind(kind)
    tokens = np.asarray(tokens, dtype=float)
    losses = np.asarray(mean_losses, dtype=float)
    if tokens.size < 4:
        raise InsufficientDataError("baseline fit needs at least 4 points")
    init = _initial_guess(kind, tokens, losses)
    bounds = None
    if kind is BaselineKind.RECIPROCAL:
        bounds = [None, (0.0, None), None]
    fit = nls_fit(_MODELS[kind], tokens, losses, init, bounds=bounds)
    return BaselineModel(kind=kind, params=tuple(fit.params),
                         r_squared=fit.r_squared)


def forecast_baseline(m: BaselineModel, grid, fit_end=None):
    """Evaluate a fitted baseline on a token grid.

    Returns (grid, values, provenance) where provenance marks points past
    ``fit_end`` as extrapolated.
    """
    grid = np.asarray(grid, dtype=float)
    values = eval_baseline(m, grid)
    if fit_end is None:
        provenance = ["fitted"] * grid.size
    else:
        provenance = ["fitted" if n <= fit_end else "extrapolated" for n in grid]
    return grid, np.atleast_1d(values), provenance
