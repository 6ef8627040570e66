"""Command-line entry point.

Subcommands: ``synth`` (generate a synthetic run), ``fit`` (full-trajectory
temporal fit plus baseline comparison), ``predict`` (prefix extrapolation
with held-out evaluation), ``rerank`` (candidate comparison), ``diag``
(loss-decrease uniformity report). Outputs are data files (tabular or
JSON), written atomically, each carrying a schema-version header.

Exit codes: 1 usage, 2 parse failure, 3 insufficient data, 4 solver
failure, 5 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile

import numpy as np

from tempscale import baselines, diagnostics, hyperbolic, predictor, rerank, synthgen
from tempscale import temporal
from tempscale.errors import (
    InsufficientDataError,
    InsufficientSpanError,
    LogParseError,
    MissingCheckpointError,
    NonFiniteModelError,
    SolverError,
    TempscaleError,
)
from tempscale.fitkit import mse, r_squared
from tempscale.loss_log import emit_trajectory, parse_trajectory

log = logging.getLogger("tempscale")

EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_INSUFFICIENT_DATA = 3
EXIT_SOLVER = 4
EXIT_INTERNAL = 5

SCHEMA_PREFIX = "tempscale"
SCHEMA_VERSION = 1


def _schema(kind: str) -> str:
    return f"{SCHEMA_PREFIX}.{kind}/{SCHEMA_VERSION}"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path: str, kind: str, columns, rows) -> None:
    lines = [f"# schema: {_schema(kind)}", "\t".join(columns)]
    for row in rows:
        lines.append("\t".join(str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json(path: str, kind: str, payload: dict) -> None:
    body = {"schema_version": _schema(kind)}
    body.update(payload)
    _atomic_write(path, json.dumps(body, indent=2, default=_jsonify) + "\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_series(out_dir, name, kind, fmt, columns, rows):
    if fmt == "structured":
        payload = {"columns": list(columns), "rows": [list(r) for r in rows]}
        write_json(os.path.join(out_dir, f"{name}.json"), kind, payload)
    else:
        write_table(os.path.join(out_dir, f"{name}.tsv"), kind, columns, rows)


def _load_trajectory(args):
    return parse_trajectory(args.manifest, args.log)


def _curves_payload(tc: temporal.TemporalCurves) -> dict:
    return {
        "alpha": [float(v) for v in tc.alpha],
        "beta": [float(v) for v in tc.beta],
        "gamma": [None if v is None else float(v) for v in tc.gamma],
        "n_sep": tc.n_sep,
        "epsilon": tc.epsilon,
        "fit_quality": {k: (None if v is None else float(v))
                        for k, v in tc.fit_quality.items()},
    }


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.config:
        spec, epsilon = synthgen.spec_from_config(args.config)
    else:
        spec, epsilon = synthgen.default_spec()
    if args.noise is not None:
        spec = synthgen.with_overrides(spec, noise_sigma=args.noise)
    if args.seed is not None:
        spec = synthgen.with_overrides(spec, seed=args.seed)
    traj = synthgen.generate(spec)
    os.makedirs(args.out, exist_ok=True)
    emit_trajectory(traj, os.path.join(args.out, "manifest.json"),
                    os.path.join(args.out, "losses.jsonl"))
    write_json(os.path.join(args.out, "truth.json"), "synth_truth", {
        "alpha": list(spec.alpha),
        "beta": list(spec.beta),
        "gamma": list(spec.gamma),
        "n_sep_true": spec.n_sep_true,
        "epsilon": epsilon,
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
    })
    log.info("wrote %d checkpoints to %s", len(traj.profiles), args.out)
    return 0


def cmd_fit(args) -> int:
    traj = _load_trajectory(args)
    if len(traj.profiles) < 5:
        raise InsufficientDataError(
            f"temporal fit needs at least 5 checkpoints, got {len(traj.profiles)}"
        )
    fits = hyperbolic.fit_trajectory(traj, jobs=args.jobs)
    tc = temporal.fit_temporal(traj, fits, epsilon=args.epsilon)
    os.makedirs(args.out, exist_ok=True)

    _write_series(
        args.out, "checkpoint_fits", "checkpoint_fits", args.format,
        ["tokens_trained", "a0", "a1", "a2", "r_squared", "converged"],
        [(f.tokens_trained, f.a0, f.a1, f.a2, f.r_squared, f.converged)
         for f in fits],
    )
    write_json(os.path.join(args.out, "temporal_curves.json"),
               "temporal_curves", _curves_payload(tc))

    tokens = traj.tokens
    actual = traj.mean_losses
    fitted = temporal.fitted_mean_losses(tc, tokens, traj.manifest.seq_len)
    _write_series(
        args.out, "mean_loss_curve", "mean_loss_curve", args.format,
        ["tokens_trained", "actual_mean_loss", "fitted_mean_loss"],
        list(zip(tokens.astype(int), actual, fitted)),
    )

    report = {
        "temporal_law": r_squared(actual, fitted),
        "hyperbolic_fit_fraction_r2_0.95":
            hyperbolic.fit_quality_fraction(fits, 0.95),
        "n_sep": tc.n_sep,
    }
    for kind in ("power_law", "reciprocal", "logarithmic"):
        try:
            bm = baselines.fit_baseline(kind, tokens, actual)
            report[kind] = r_squared(actual, baselines.eval_baseline(bm, tokens))
            report[f"{kind}_params"] = [float(v) for v in bm.params]
        except TempscaleError as exc:
            report[kind] = None
            report[f"{kind}_error"] = str(exc)
    write_json(os.path.join(args.out, "fit_report.json"), "fit_report", report)
    log.info("whole-curve R^2: %.6f (n_sep=%s)", report["temporal_law"], tc.n_sep)
    return 0


def cmd_predict(args) -> int:
    if not 0 < args.train_frac <= 1:
        raise UsageError("--train-frac must be in (0, 1]")
    traj = _load_trajectory(args)
    manifest = traj.manifest
    n_train = args.train_frac * manifest.n_tot
    prefix_profiles = [p for p in traj.profiles if p.tokens_trained <= n_train]
    if len(prefix_profiles) < 8:
        raise InsufficientDataError(
            f"prefix at train_frac={args.train_frac} has "
            f"{len(prefix_profiles)} checkpoints, need 8"
        )
    from tempscale.loss_log import Trajectory
    prefix = Trajectory(manifest, tuple(prefix_profiles))
    fits = hyperbolic.fit_trajectory(prefix, jobs=args.jobs)
    pc = predictor.predict(fits, manifest, epsilon=args.epsilon)

    if args.grid_cadence:
        grid = np.arange(args.grid_cadence, manifest.n_tot + 1,
                         args.grid_cadence, dtype=float)
        if grid.size == 0 or grid[-1] != manifest.n_tot:
            grid = np.append(grid, float(manifest.n_tot))
    else:
        grid = predictor.default_grid(manifest)
    fc = predictor.forecast(pc, manifest, grid)

    os.makedirs(args.out, exist_ok=True)
    _write_series(
        args.out, "forecast", "forecast", args.format,
        ["tokens_trained", "predicted_mean_loss", "provenance"],
        list(zip(fc.tokens.astype(int), fc.predicted_mean_loss, fc.provenance)),
    )
    report = {
        "situation": pc.situation.value,
        "n_sep_estimate": pc.n_sep,
        "n_train": pc.n_train,
        "degraded": pc.degraded,
        "eps4": pc.eps4,
        "eps7": pc.eps7,
        "fit_quality": {k: (None if v is None else float(v))
                        for k, v in pc.fit_quality.items()},
    }

    # Held-out evaluation when the supplied log extends past the prefix.
    held_tokens = traj.tokens[traj.tokens > pc.n_train]
    if held_tokens.size >= 2:
        actual = traj.mean_losses[traj.tokens > pc.n_train]
        ours = predictor.forecast(pc, manifest, held_tokens).predicted_mean_loss
        report["heldout"] = {
            "temporal_law": {"mse": mse(actual, ours),
                             "r_squared": r_squared(actual, ours)},
        }
        prefix_tokens = prefix.tokens
        prefix_losses = prefix.mean_losses
        for kind in ("power_law", "reciprocal", "logarithmic"):
            try:
                bm = baselines.fit_baseline(kind, prefix_tokens, prefix_losses)
                vals = baselines.eval_baseline(bm, held_tokens)
                report["heldout"][kind] = {
                    "mse": mse(actual, vals),
                    "r_squared": r_squared(actual, vals),
                }
            except TempscaleError as exc:
                report["heldout"][kind] = {"error": str(exc)}
    write_json(os.path.join(args.out, "predict_report.json"),
               "predict_report", report)
    log.info("situation %s, n_sep estimate %s", pc.situation.value, pc.n_sep)
    return 0


def cmd_rerank(args) -> int:
    candidate_dirs = sorted(
        d for d in os.listdir(args.candidates)
        if os.path.isdir(os.path.join(args.candidates, d))
    )
    candidates = []
    for label in candidate_dirs:
        base = os.path.join(args.candidates, label)
        traj = parse_trajectory(os.path.join(base, "manifest.json"),
                                os.path.join(base, "losses.jsonl"))
        if args.train_frac < 1.0:
            limit = args.train_frac * traj.manifest.n_tot
            from tempscale.loss_log import Trajectory
            traj = Trajectory(
                traj.manifest,
                tuple(p for p in traj.profiles if p.tokens_trained <= limit),
            )
        candidates.append(rerank.CandidateRun(label=label, trajectory=traj))
    ranked = rerank.rerank(candidates, epsilon=args.epsilon)
    os.makedirs(args.out, exist_ok=True)
    _write_series(
        args.out, "ranking", "ranking", args.format,
        ["rank", "label", "predicted_final_loss", "situation", "n_sep",
         "fit_r_squared", "error"],
        [(i + 1, c.label,
          "" if c.predicted_final_loss is None else c.predicted_final_loss,
          c.situation or "", c.n_sep or "",
          "" if c.fit_r_squared is None else c.fit_r_squared,
          c.error or "")
         for i, c in enumerate(ranked)],
    )
    log.info("best candidate: %s", ranked[0].label)
    return 0


def cmd_diag(args) -> int:
    traj = _load_trajectory(args)
    if args.n_sep is not None:
        n_sep = args.n_sep
    else:
        fits = hyperbolic.fit_trajectory(traj, jobs=args.jobs)
        tc = temporal.fit_temporal(traj, fits, epsilon=args.epsilon)
        if tc.n_sep is None:
            raise InsufficientSpanError(
                "no separation point found; pass --n-sep explicitly"
            )
        n_sep = tc.n_sep
    report = diagnostics.uniformity_report(traj, n_sep,
                                           window_frac=args.window_frac)
    os.makedirs(args.out, exist_ok=True)
    for name, profile in (("early", report.early), ("late", report.late)):
        _write_series(
            args.out, f"delta_{name}", "delta_profile", args.format,
            ["position", "delta"],
            list(enumerate(profile.delta_by_position, start=1)),
        )
    write_json(os.path.join(args.out, "uniformity.json"), "uniformity", {
        "n_sep": n_sep,
        "early_window": [report.early.n_from, report.early.n_to],
        "late_window": [report.late.n_from, report.late.n_to],
        "early_flatness": report.early.flatness,
        "late_flatness": report.late.flatness,
        "uniformity_improved": report.uniformity_improved,
    })
    log.info("flatness early=%s late=%s", report.early.flatness,
             report.late.flatness)
    return 0


# --------------------------------------------------------------------------
# Argument parsing and dispatch
# --------------------------------------------------------------------------

class UsageError(TempscaleError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempscale",
        description="Fit and extrapolate per-position loss trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_input=True):
        if with_input:
            p.add_argument("--manifest", required=True)
            p.add_argument("--log", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--epsilon", type=float, default=temporal.DEFAULT_EPSILON,
                       help="gradient threshold, nats per token")
        p.add_argument("--format", choices=("tabular", "structured"),
                       default="tabular")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("synth", help="generate a synthetic run")
    p.add_argument("--config", help="generator spec JSON")
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a full trajectory")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="extrapolate from a training prefix")
    common(p)
    p.add_argument("--train-frac", type=float, required=True)
    p.add_argument("--grid-cadence", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rerank", help="rank candidate runs by predicted loss")
    common(p, with_input=False)
    p.add_argument("--candidates", required=True,
                   help="directory of per-candidate subdirectories")
    p.add_argument("--train-frac", type=float, default=0.1)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("diag", help="loss-decrease uniformity report")
    common(p)
    p.add_argument("--n-sep", type=int, default=None)
    p.add_argument("--window-frac", type=float, default=0.05)
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("TEMPSCALE_LOG_LEVEL", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except (LogParseError, FileNotFoundError) as exc:
        log.error("parse: %s", exc)
        return EXIT_PARSE
    except (InsufficientDataError, InsufficientSpanError,
            MissingCheckpointError) as exc:
        log.error("insufficient data: %s", exc)
        return EXIT_INSUFFICIENT_DATA
    except (SolverError, NonFiniteModelError) as exc:
        log.error("solver: %s", exc)
        return EXIT_SOLVER
    except TempscaleError as exc:
        log.error("internal: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
