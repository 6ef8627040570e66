import numpy as np
import pytest

from tempscale.diagnostics import (
    DeltaProfile,
    delta_profile,
    uniformity_report,
)
from tempscale.errors import InsufficientSpanError, MissingCheckpointError
from tempscale.loss_log import RunManifest, TokenLossProfile, Trajectory


def make_traj(rows, seq_len=4, n_tot=1000):
    manifest = RunManifest("r", n_tot, 10, seq_len, 100)
    profiles = tuple(TokenLossProfile(t, np.asarray(v, dtype=float))
                     for t, v in rows)
    return Trajectory(manifest, profiles)


class TestDeltaProfile:
    def test_hand_values(self):
        traj = make_traj([
            (100, [4.0, 3.0, 2.5, 2.4]),
            (200, [3.0, 2.5, 2.0, 2.0]),
        ])
        d = delta_profile(traj, 100, 200)
        np.testing.assert_allclose(d.delta_by_position, [1.0, 0.5, 0.5, 0.4])
        mean = 0.6
        std = np.std([1.0, 0.5, 0.5, 0.4])
        assert d.flatness == pytest.approx(std / mean, abs=1e-12)

    def test_uniform_decrease_is_perfectly_flat(self):
        traj = make_traj([
            (100, [3.0, 2.5, 2.0, 1.8]),
            (200, [2.9, 2.4, 1.9, 1.7]),
        ])
        d = delta_profile(traj, 100, 200)
        assert d.flatness == pytest.approx(0.0, abs=1e-12)

    def test_zero_mean_flatness_none(self):
        traj = make_traj([
            (100, [2.0, 2.0, 2.0, 2.0]),
            (200, [2.0, 2.0, 2.0, 2.0]),
        ])
        assert delta_profile(traj, 100, 200).flatness is None

    def test_missing_checkpoint(self):
        traj = make_traj([(100, [1, 1, 1, 1]), (200, [1, 1, 1, 1])])
        with pytest.raises(MissingCheckpointError):
            delta_profile(traj, 100, 300)

    def test_trim_head_excludes_first_positions(self):
        n = 200
        base = np.full(n, 2.0)
        later = base - 0.1
        later_spiked = later.copy()
        later_spiked[0] = 0.0  # head-position outlier
        traj = make_traj([(100, base), (200, later_spiked)], seq_len=n)
        raw = delta_profile(traj, 100, 200)
        trimmed = delta_profile(traj, 100, 200, trim_head=True)
        assert trimmed.flatness < raw.flatness
        assert trimmed.flatness == pytest.approx(0.0, abs=1e-12)
        # deltas themselves are untouched by the trim
        np.testing.assert_array_equal(trimmed.delta_by_position,
                                      raw.delta_by_position)

    def test_ordering_validated(self):
        with pytest.raises(ValueError):
            DeltaProfile(200, 100, np.zeros(4), 0.0)


class TestUniformityReport:
    def test_synthetic_run_improves(self, default_spec, noiseless_traj):
        spec, _ = default_spec
        report = uniformity_report(noiseless_traj, spec.n_sep_true)
        assert report.late.flatness == pytest.approx(0.0, abs=1e-6)
        assert report.early.flatness > report.late.flatness
        assert report.uniformity_improved

    def test_window_spans_requested_fraction(self, default_spec,
                                             noiseless_traj):
        spec, _ = default_spec
        report = uniformity_report(noiseless_traj, spec.n_sep_true,
                                   window_frac=0.05)
        window = 0.05 * spec.manifest.n_tot
        assert report.early.n_to - report.early.n_from == pytest.approx(
            window, rel=0.5)
        assert report.late.n_to - report.late.n_from == pytest.approx(
            window, rel=0.5)

    def test_insufficient_span(self, noiseless_traj):
        n_tot = noiseless_traj.manifest.n_tot
        with pytest.raises(InsufficientSpanError):
            uniformity_report(noiseless_traj, n_tot)  # no post-sep checkpoints
