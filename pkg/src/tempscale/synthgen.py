"""Synthetic trajectory generator: the ground-truth oracle.

Generates checkpoint series that exactly obey the hyperbolic position law
with temporal parameter curves (double-log gap, saturating scaling,
piecewise log/cosine converging factor), optionally plus per-position
Gaussian noise. The cosine branch uses the fixed phase of the cosine
learning-rate schedule (frequency pi / n_tot, offset -pi * n_warmup /
n_tot) and joins the log branch continuously in value and derivative at
the separation point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from tempscale.errors import TempscaleError
from tempscale.loss_log import RunManifest, TokenLossProfile, Trajectory
from tempscale.predictor import solve_cosine_boundary
from tempscale.temporal import (
    TemporalCurves,
    cosine_deriv,
    cosine_model,
    double_log_deriv,
    double_log_model,
    find_separation_point,
    saturating_deriv,
    saturating_model,
)

_JOIN_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorSpec:
    """Complete description of one synthetic run."""

    manifest: RunManifest
    alpha: tuple        # 4 double-log parameters for a0
    beta: tuple         # 3 saturating parameters for a1
    gamma: tuple        # 8 piecewise parameters for a2
    n_sep_true: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0 < self.n_sep_true <= self.manifest.n_tot:
            raise ValueError("n_sep_true must lie within (0, n_tot]")
        _check_continuity(self)


def _check_continuity(spec: GeneratorSpec) -> None:
    n = float(spec.n_sep_true)
    left_v = float(double_log_model(np.asarray(spec.gamma[:4], dtype=float),
                                    np.asarray(n)))
    left_d = float(double_log_deriv(spec.gamma[:4], n))
    right_v = float(cosine_model(spec.gamma[4:], n))
    right_d = float(cosine_deriv(spec.gamma[4:], n))
    if abs(left_v - right_v) > _JOIN_TOL * max(1.0, abs(left_v)):
        raise TempscaleError(
            f"a2 branches not value-continuous at {spec.n_sep_true}: "
            f"{left_v} vs {right_v}"
        )
    if abs(left_d - right_d) > 1e-6 * max(abs(left_d), abs(right_d), 1e-300):
        raise TempscaleError(
            f"a2 branches not derivative-continuous at {spec.n_sep_true}: "
            f"{left_d} vs {right_d}"
        )


def checkpoint_grid(manifest: RunManifest) -> np.ndarray:
    step = manifest.checkpoint_interval
    grid = np.arange(step, manifest.n_tot + 1, step, dtype=int)
    if grid.size == 0 or grid[-1] != manifest.n_tot:
        grid = np.append(grid, manifest.n_tot)
    return grid


def curve_values(spec: GeneratorSpec, n):
    """Ground-truth (a0, a1, a2) at token count(s) n, with stabilization."""
    n = np.asarray(n, dtype=float)
    clamped = np.minimum(n, float(spec.n_sep_true))
    a0 = double_log_model(np.asarray(spec.alpha, dtype=float), clamped)
    a1 = saturating_model(spec.beta, clamped)
    a2 = np.where(
        n < spec.n_sep_true,
        double_log_model(np.asarray(spec.gamma[:4], dtype=float), n),
        cosine_model(spec.gamma[4:], n),
    )
    return a0, a1, a2


def generate(spec: GeneratorSpec) -> Trajectory:
    """Generate the full synthetic trajectory, deterministic given seed.

    Each checkpoint draws its noise from a generator seeded by
    ``seed XOR checkpoint-index`` so checkpoints can be produced in any
    order with identical results.
    """
    manifest = spec.manifest
    positions = np.arange(1, manifest.seq_len + 1, dtype=float)
    profiles = []
    for idx, tokens in enumerate(checkpoint_grid(manifest)):
        a0, a1, a2 = curve_values(spec, float(tokens))
        losses = float(a0) / (1.0 + float(a1) * positions) + float(a2)
        if spec.noise_sigma > 0:
            rng = np.random.default_rng(spec.seed ^ idx)
            losses = losses + rng.normal(0.0, spec.noise_sigma, losses.size)
        losses = np.maximum(losses, 0.0)
        profiles.append(TokenLossProfile(int(tokens), losses))
    return Trajectory(manifest, tuple(profiles))


def ground_truth_curves(spec: GeneratorSpec) -> TemporalCurves:
    """The exact generating curves, for oracle comparisons."""
    return TemporalCurves(
        alpha=tuple(spec.alpha),
        beta=tuple(spec.beta),
        gamma=tuple(spec.gamma),
        n_sep=int(spec.n_sep_true),
        fit_quality={"source": "generator"},
    )


def ground_truth_mean_losses(spec: GeneratorSpec, tokens) -> np.ndarray:
    """Noise-free mean loss at the given token counts."""
    tokens = np.atleast_1d(np.asarray(tokens, dtype=float))
    positions = np.arange(1, spec.manifest.seq_len + 1, dtype=float)
    a0, a1, a2 = curve_values(spec, tokens)
    hyper = np.mean(1.0 / (1.0 + np.outer(np.atleast_1d(a1), positions)), axis=1)
    return np.atleast_1d(a0) * hyper + np.atleast_1d(a2)


def _snap_epsilon(alpha, beta, grid, target):
    """Gradient threshold that makes the separation point land on target."""
    idx = int(np.searchsorted(grid, target))
    if grid[idx] != target or idx == 0:
        raise ValueError("target must be an interior grid point")
    d_at = max(abs(double_log_deriv(alpha, float(grid[idx]))),
               abs(saturating_deriv(beta, float(grid[idx]))))
    d_before = max(abs(double_log_deriv(alpha, float(grid[idx - 1]))),
                   abs(saturating_deriv(beta, float(grid[idx - 1]))))
    if d_before <= d_at:
        raise ValueError("gradients are not decreasing around the target")
    return math.sqrt(d_at * d_before)


def build_spec(manifest: RunManifest, alpha, beta, gamma_log, n_sep_true,
               noise_sigma: float = 0.0, seed: int = 0):
    """Assemble a GeneratorSpec with a continuously joined cosine branch.

    The cosine amplitude and offset are derived from the log branch's
    value and derivative at ``n_sep_true``; the frequency and phase follow
    the schedule (pi / n_tot, -pi * n_warmup / n_tot). Returns the spec
    together with the gradient threshold that reproduces ``n_sep_true``
    on the checkpoint grid.
    """
    grid = checkpoint_grid(manifest).astype(float)
    value = float(double_log_model(np.asarray(gamma_log, dtype=float),
                                   np.asarray(float(n_sep_true))))
    deriv = float(double_log_deriv(gamma_log, float(n_sep_true)))
    solved = solve_cosine_boundary(value, deriv, n_sep_true, manifest.n_tot,
                                   manifest.n_warmup)
    if solved is None:
        raise TempscaleError(
            "derivative condition degenerates at this separation point"
        )
    g4, g7 = solved
    omega = math.pi / manifest.n_tot
    gamma = tuple(gamma_log) + (g4, omega, -omega * manifest.n_warmup, g7)
    epsilon = _snap_epsilon(alpha, beta, grid, float(n_sep_true))
    spec = GeneratorSpec(
        manifest=manifest,
        alpha=tuple(alpha),
        beta=tuple(beta),
        gamma=gamma,
        n_sep_true=int(n_sep_true),
        noise_sigma=noise_sigma,
        seed=seed,
    )
    # The threshold must actually reproduce the target on the grid.
    found = find_separation_point(spec.alpha, spec.beta, epsilon, grid)
    if found != int(n_sep_true):
        raise TempscaleError(
            f"epsilon does not reproduce the separation point: {found}"
        )
    return spec, epsilon


def default_spec(noise_sigma: float = 0.0, seed: int = 0,
                 run_id: str = "synth"):
    """Desk-scale default: 200 checkpoints over 4e8 tokens, seq_len 1024.

    Separation at 30% of the schedule. Returns (spec, epsilon).
    """
    manifest = RunManifest(
        run_id=run_id,
        n_tot=400_000_000,
        n_warmup=1_000_000,
        seq_len=1024,
        checkpoint_interval=2_000_000,
    )
    alpha = (0.8, 1.0, 0.0, 0.6)
    beta = (0.04, 3.0e-8, 0.012)
    gamma_log = (-0.9, 1.0, 0.0, 4.5)
    n_sep_true = 120_000_000
    return build_spec(manifest, alpha, beta, gamma_log, n_sep_true,
                      noise_sigma=noise_sigma, seed=seed)


def spec_from_config(path):
    """Read a GeneratorSpec from a JSON config file.

    The config holds the manifest fields plus ``alpha``, ``beta``,
    ``gamma_log`` (4 values), ``n_sep_true``, ``noise_sigma`` and
    ``seed``; the cosine branch is derived. Returns (spec, epsilon).
    """
    with open(path) as fh:
        raw = json.load(fh)
    manifest = RunManifest(
        run_id=str(raw.get("run_id", "synth")),
        n_tot=int(raw["n_tot"]),
        n_warmup=int(raw["n_warmup"]),
        seq_len=int(raw["seq_len"]),
        checkpoint_interval=int(raw["checkpoint_interval"]),
    )
    return build_spec(
        manifest,
        tuple(raw["alpha"]),
        tuple(raw["beta"]),
        tuple(raw["gamma_log"]),
        int(raw["n_sep_true"]),
        noise_sigma=float(raw.get("noise_sigma", 0.0)),
        seed=int(raw.get("seed", 0)),
    )


def with_overrides(spec: GeneratorSpec, **kwargs) -> GeneratorSpec:
    """Copy a spec with selected fields replaced."""
    return replace(spec, **kwargs)
