import numpy as np
import pytest

from tempscale import hyperbolic, synthgen, temporal


@pytest.fixture(scope="session")
def default_spec():
    spec, epsilon = synthgen.default_spec()
    return spec, epsilon


@pytest.fixture(scope="session")
def noiseless_traj(default_spec):
    spec, _ = default_spec
    return synthgen.generate(spec)


@pytest.fixture(scope="session")
def noiseless_fits(noiseless_traj):
    return hyperbolic.fit_trajectory(noiseless_traj)


@pytest.fixture(scope="session")
def noiseless_curves(default_spec, noiseless_traj, noiseless_fits):
    spec, epsilon = default_spec
    return temporal.fit_temporal(noiseless_traj, noiseless_fits, epsilon=epsilon)


@pytest.fixture(scope="session")
def noisy_traj(default_spec):
    spec, _ = default_spec
    noisy = synthgen.with_overrides(spec, noise_sigma=0.005, seed=7)
    return synthgen.generate(noisy)


def make_profile(params, n, tokens=1_000_000, sigma=0.0, seed=0):
    """Synthesize a loss profile exactly (or noisily) from hyperbolic params."""
    from tempscale.loss_log import TokenLossProfile

    positions = np.arange(1, n + 1, dtype=float)
    a0, a1, a2 = params
    losses = a0 / (1.0 + a1 * positions) + a2
    if sigma > 0:
        losses = losses + np.random.default_rng(seed).normal(0.0, sigma, n)
    return TokenLossProfile(tokens, np.maximum(losses, 0.0))
