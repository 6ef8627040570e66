"""End-to-end acceptance gate.

Each test covers one headline requirement and prints a single PASS/FAIL
line (visible with ``pytest -s`` or on failure) alongside the asserted
tolerances.
"""

import json
import math
import time

import numpy as np
import pytest

from tempscale import hyperbolic, predictor, synthgen
from tempscale.cli import main
from tempscale.fitkit import mse, r_squared
from tempscale.loss_log import Trajectory, TokenLossProfile, mean_loss, perplexity
from tempscale.rerank import CandidateRun, rerank
from tempscale.temporal import cosine_deriv, cosine_model, double_log_deriv, \
    double_log_model


def report(name, passed, detail):
    print(f"{'PASS' if passed else 'FAIL'} [{name}] {detail}")
    assert passed, f"{name}: {detail}"


def truncate(traj, frac):
    cut = frac * traj.manifest.n_tot
    keep = tuple(p for p in traj.profiles if p.tokens_trained <= cut)
    return Trajectory(traj.manifest, keep)


@pytest.fixture(scope="module")
def fit_run(default_spec, tmp_path_factory):
    """cmd_fit on the noiseless 200-checkpoint default run, timed."""
    spec, epsilon = default_spec
    base = tmp_path_factory.mktemp("accept-fit")
    run = base / "run"
    assert main(["synth", "--out", str(run)]) == 0
    out = base / "fit"
    start = time.monotonic()
    code = main(["fit",
                 "--manifest", str(run / "manifest.json"),
                 "--log", str(run / "losses.jsonl"),
                 "--out", str(out), "--epsilon", str(epsilon)])
    elapsed = time.monotonic() - start
    assert code == 0
    fit_report = json.loads((out / "fit_report.json").read_text())
    curves = json.loads((out / "temporal_curves.json").read_text())
    return spec, fit_report, curves, elapsed


def test_synthetic_round_trip(fit_run):
    spec, fit_report, curves, elapsed = fit_run
    r2 = fit_report["temporal_law"]
    g5 = curves["gamma"][5]
    g5_target = math.pi / spec.manifest.n_tot
    g5_err = abs(g5 - g5_target) / g5_target
    passed = r2 >= 0.999 and g5_err < 0.01 and elapsed < 60.0
    report("synthetic-round-trip", passed,
           f"whole-curve R^2={r2:.6f} (>=0.999), gamma5 rel err={g5_err:.2e} "
           f"(<1%), cmd_fit took {elapsed:.1f}s (<60s)")


def test_baseline_failure_ordering(fit_run):
    _, fit_report, _, _ = fit_run
    r2 = fit_report["temporal_law"]
    others = {k: fit_report[k]
              for k in ("power_law", "reciprocal", "logarithmic")}
    passed = all(v is not None and v < r2 for v in others.values())
    detail = ", ".join(f"{k}={v:.4f}" for k, v in others.items())
    report("baseline-ordering", passed,
           f"temporal={r2:.6f} strictly above {detail}")


def test_prediction_mse_under_noise(default_spec, tmp_path_factory):
    """Held-out MSE < 1e-3 per train fraction, averaged over 10 seeds,
    with the temporal method's held-out R^2 beating every baseline's."""
    spec, epsilon = default_spec
    base = tmp_path_factory.mktemp("accept-predict")
    fracs = (0.1, 0.2, 0.3, 0.4)
    sums = {f: 0.0 for f in fracs}
    ordering_ok = True
    for seed in range(10):
        run = base / f"seed{seed}"
        assert main(["synth", "--out", str(run),
                     "--noise", "0.005", "--seed", str(seed)]) == 0
        for frac in fracs:
            out = base / f"seed{seed}-frac{frac}"
            code = main(["predict",
                         "--manifest", str(run / "manifest.json"),
                         "--log", str(run / "losses.jsonl"),
                         "--out", str(out),
                         "--train-frac", str(frac),
                         "--epsilon", str(epsilon)])
            assert code == 0
            held = json.loads(
                (out / "predict_report.json").read_text())["heldout"]
            sums[frac] += held["temporal_law"]["mse"]
            ours = held["temporal_law"]["r_squared"]
            for kind in ("power_law", "reciprocal", "logarithmic"):
                if held[kind].get("r_squared", -np.inf) >= ours:
                    ordering_ok = False
    avg = {f: sums[f] / 10 for f in fracs}
    passed = max(avg.values()) < 1e-3 and ordering_ok
    detail = ", ".join(f"frac {f}: avg MSE={avg[f]:.2e}" for f in fracs)
    report("prediction-mse", passed,
           f"{detail} (all <1e-3); temporal held-out R^2 beat every "
           f"baseline in all 40 runs: {ordering_ok}")


def test_boundary_condition_solver():
    # Closed-form example: amplitude 1, offset 2, to 1e-9.
    n_tot, n_sep = 4e8, 1e8
    omega = math.pi / n_tot
    theta = omega * n_sep
    g4, g7 = predictor.solve_cosine_boundary(
        math.cos(theta) + 2.0, -omega * math.sin(theta), n_sep, n_tot, 0)
    closed_ok = abs(g4 - 1.0) < 1e-9 and abs(g7 - 2.0) < 1e-9

    # Continuity at the separation point on 100 randomized generator specs.
    from tempscale.loss_log import RunManifest

    rng = np.random.default_rng(42)
    worst_v = worst_d = 0.0
    for _ in range(100):
        interval = int(rng.integers(1, 6)) * 1_000_000
        manifest = RunManifest("r", interval * 200, 1_000_000, 64, interval)
        n_sep_true = interval * int(rng.integers(40, 81))
        spec, _ = synthgen.build_spec(
            manifest,
            (rng.uniform(0.5, 1.2), 1.0, 0.0, rng.uniform(0.3, 0.8)),
            (rng.uniform(0.02, 0.06), 10 ** rng.uniform(-8, -7.3),
             rng.uniform(0.008, 0.02)),
            (rng.uniform(-1.2, -0.6), 1.0, 0.0, rng.uniform(4, 5)),
            n_sep_true,
        )
        n = float(spec.n_sep_true)
        glog = np.asarray(spec.gamma[:4], dtype=float)
        dv = abs(float(double_log_model(glog, np.asarray(n)))
                 - cosine_model(spec.gamma[4:], n))
        dd = abs(double_log_deriv(glog, n) - cosine_deriv(spec.gamma[4:], n)) \
            / abs(double_log_deriv(glog, n))
        worst_v = max(worst_v, dv)
        worst_d = max(worst_d, dd)
    continuity_ok = worst_v < 1e-9 and worst_d < 1e-6
    report("boundary-solver", closed_ok and continuity_ok,
           f"closed form g4={g4:.12f}, g7={g7:.12f} (to 1e-9); 100 random "
           f"specs: worst value gap={worst_v:.2e}, worst rel deriv "
           f"gap={worst_d:.2e}")


def test_metric_unit_suite():
    checks = [
        ("R^2 perfect", r_squared([1, 2, 3], [1, 2, 3]) == 1.0),
        ("R^2 mean", r_squared([1, 2, 3], [2, 2, 2]) == 0.0),
        ("R^2 half", abs(r_squared([1, 2, 3], [1, 2, 4]) - 0.5) < 1e-12),
        ("PPL(0)=1", perplexity(0.0) == 1.0),
        ("PPL(log 2)=2", abs(perplexity(math.log(2)) - 2.0) < 1e-12),
        ("PPL(1)=e", abs(perplexity(1.0) - math.e) < 1e-12),
        ("mean loss", mean_loss(
            TokenLossProfile(1, np.array([1.0, 2, 3, 4]))) == 2.5),
        ("aggregate 5/12", abs(hyperbolic.aggregate_mean_loss(
            hyperbolic.HyperbolicParams(1.0, 1.0, 0.0, 1.0, 1), 2)
            - 5.0 / 12.0) < 1e-15),
    ]
    failed = [name for name, ok in checks if not ok]
    report("metric-units", not failed,
           f"{len(checks)} exact metric identities"
           + (f"; failed: {failed}" if failed else ""))


def _crossing_pair(base_spec, rng):
    """Candidate pair sharing gap/scaling curves whose 10%-prefix mean-loss
    ordering contradicts the ground-truth final ordering."""
    anchor = math.log(math.log(1e8))
    slope_a = rng.uniform(-1.25, -0.95)
    slope_b = rng.uniform(-0.85, -0.6)
    edge = rng.uniform(0.002, 0.006)
    specs = {}
    for label, slope, e in (("a", slope_a, 0.0), ("b", slope_b, edge)):
        gamma_log = (slope, 1.0, 0.0, 4.5 - slope * anchor - e)
        specs[label], _ = synthgen.build_spec(
            base_spec.manifest, base_spec.alpha, base_spec.beta, gamma_log,
            base_spec.n_sep_true)
    final = {l: float(synthgen.ground_truth_mean_losses(
        s, s.manifest.n_tot)[0]) for l, s in specs.items()}
    early = {l: float(synthgen.ground_truth_mean_losses(
        s, 0.1 * s.manifest.n_tot)[0]) for l, s in specs.items()}
    assert early["b"] < early["a"] and final["a"] < final["b"] \
        and final["b"] - final["a"] > 0.005, "pair does not cross"
    return specs


def test_rerank_correctness(default_spec):
    spec, epsilon = default_spec
    rng = np.random.default_rng(2024)
    clean = noisy = 0
    trials = 20
    for trial in range(trials):
        specs = _crossing_pair(spec, rng)
        cands = [CandidateRun(l, truncate(synthgen.generate(s), 0.1))
                 for l, s in specs.items()]
        if [c.label for c in rerank(cands, epsilon=epsilon)] == ["a", "b"]:
            clean += 1
        cands = [CandidateRun(l, truncate(synthgen.generate(
            synthgen.with_overrides(s, noise_sigma=0.005, seed=100 + trial)),
            0.1)) for l, s in specs.items()]
        if [c.label for c in rerank(cands, epsilon=epsilon)] == ["a", "b"]:
            noisy += 1
    passed = clean >= 19 and noisy >= 16
    report("rerank-correctness", passed,
           f"noiseless {clean}/{trials} (>=19), sigma=0.005 {noisy}/{trials} "
           f"(>=16) crossing pairs ranked by true final loss")


def test_uniform_decrease_property(default_spec, noiseless_traj):
    spec, _ = default_spec
    post = [p for p in noiseless_traj.profiles
            if p.tokens_trained >= spec.n_sep_true]
    worst = max(float(np.ptp(a.loss_by_position - b.loss_by_position))
                for a, b in zip(post, post[1:]))
    flat_ok = worst < 1e-12

    rng = np.random.default_rng(0)
    profiles = noiseless_traj.profiles
    telescope_ok = True
    for _ in range(50):
        i, j, k = sorted(rng.choice(len(profiles), size=3, replace=False))
        d_ij = profiles[i].loss_by_position - profiles[j].loss_by_position
        d_jk = profiles[j].loss_by_position - profiles[k].loss_by_position
        d_ik = profiles[i].loss_by_position - profiles[k].loss_by_position
        if not np.allclose(d_ij + d_jk, d_ik, atol=1e-12, rtol=0):
            telescope_ok = False
    report("uniform-decrease", flat_ok and telescope_ok,
           f"post-separation deltas constant across positions to "
           f"{worst:.2e} (<1e-12); telescoping held on 50 random triples: "
           f"{telescope_ok}")
