import math

import pytest

from tempscale import synthgen
from tempscale.errors import InsufficientDataError
from tempscale.loss_log import Trajectory
from tempscale.rerank import CandidateRun, rerank

LOGLOG_ANCHOR = math.log(math.log(1e8))


def crossing_pair_specs(slope_a=-1.1, slope_b=-0.7, early_edge=0.005):
    """Two runs whose 10%-prefix ordering contradicts their final ordering.

    Both share the gap and scaling curves; only the converging factor
    differs. The log-branch offsets are chosen so candidate "b" is lower
    throughout the prefix, while "a"'s steeper slope yields a larger
    post-separation cosine drop and hence the lower final loss.
    """
    base, epsilon = synthgen.default_spec()
    specs = {}
    for label, slope, edge in (("a", slope_a, 0.0), ("b", slope_b, early_edge)):
        gamma_log = (slope, 1.0, 0.0, 4.5 - slope * LOGLOG_ANCHOR - edge)
        spec, _ = synthgen.build_spec(base.manifest, base.alpha, base.beta,
                                      gamma_log, base.n_sep_true)
        specs[label] = spec
    return specs, epsilon


def truncate(traj: Trajectory, frac: float) -> Trajectory:
    cut = frac * traj.manifest.n_tot
    keep = tuple(p for p in traj.profiles if p.tokens_trained <= cut)
    return Trajectory(traj.manifest, keep)


@pytest.fixture(scope="module")
def crossing_runs():
    specs, epsilon = crossing_pair_specs()
    trajs = {label: synthgen.generate(spec) for label, spec in specs.items()}
    return specs, trajs, epsilon


class TestCrossingPair:
    def test_pair_actually_crosses(self, crossing_runs):
        specs, trajs, _ = crossing_runs
        prefix_mean = {
            label: truncate(traj, 0.1).mean_losses[-1]
            for label, traj in trajs.items()
        }
        final_mean = {
            label: synthgen.ground_truth_mean_losses(
                specs[label], specs[label].manifest.n_tot)[0]
            for label in specs
        }
        assert prefix_mean["b"] < prefix_mean["a"]
        assert final_mean["a"] < final_mean["b"]
        assert final_mean["b"] - final_mean["a"] > 0.005

    def test_rerank_recovers_final_order(self, crossing_runs):
        _, trajs, epsilon = crossing_runs
        candidates = [CandidateRun(label, truncate(traj, 0.1))
                      for label, traj in trajs.items()]
        ranked = rerank(candidates, epsilon=epsilon)
        assert [c.label for c in ranked] == ["a", "b"]
        assert ranked[0].predicted_final_loss < ranked[1].predicted_final_loss
        assert all(c.error is None for c in ranked)

    def test_order_invariance(self, crossing_runs):
        _, trajs, epsilon = crossing_runs
        forward = rerank([CandidateRun(l, truncate(t, 0.1))
                          for l, t in trajs.items()], epsilon=epsilon)
        backward = rerank([CandidateRun(l, truncate(t, 0.1))
                           for l, t in reversed(list(trajs.items()))],
                          epsilon=epsilon)
        assert [c.label for c in forward] == [c.label for c in backward]


class TestRerankContract:
    def test_needs_two_candidates(self, noiseless_traj):
        with pytest.raises(InsufficientDataError):
            rerank([CandidateRun("solo", noiseless_traj)])

    def test_mismatched_schedules_rejected(self, noiseless_traj):
        other_spec, _ = synthgen.default_spec(run_id="other")
        shrunk = synthgen.with_overrides(
            other_spec,
            manifest=type(noiseless_traj.manifest)(
                "other", 200_000_000, 1_000_000, 1024, 2_000_000),
            n_sep_true=120_000_000,
        )
        with pytest.raises(ValueError):
            rerank([CandidateRun("a", noiseless_traj),
                    CandidateRun("b", synthgen.generate(shrunk))])

    def test_failing_candidate_ranked_last(self, crossing_runs):
        _, trajs, epsilon = crossing_runs
        short = truncate(trajs["a"], 0.02)  # too few checkpoints to predict
        candidates = [
            CandidateRun("bad", short),
            CandidateRun("a", truncate(trajs["a"], 0.1)),
            CandidateRun("b", truncate(trajs["b"], 0.1)),
        ]
        ranked = rerank(candidates, epsilon=epsilon)
        assert ranked[-1].label == "bad"
        assert ranked[-1].error is not None
        assert ranked[-1].predicted_final_loss is None
        assert [c.label for c in ranked[:2]] == ["a", "b"]

    def test_tie_breaks_by_label(self, crossing_runs):
        _, trajs, epsilon = crossing_runs
        twin_a = truncate(trajs["a"], 0.1)
        ranked = rerank([CandidateRun("z", twin_a), CandidateRun("m", twin_a)],
                        epsilon=epsilon)
        assert [c.label for c in ranked] == ["m", "z"]
