"""Candidate-run comparator: rank runs by predicted final loss.

Each candidate supplies a prefix trajectory; the predictor extrapolates
its mean loss to the end of training and candidates are ranked ascending
by the predicted final value. This is the rerank stage of a two-stage
hyperparameter selection pipeline (the small-model retrieval stage is out
of scope).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tempscale.errors import InsufficientDataError, TempscaleError
from tempscale.hyperbolic import fit_trajectory
from tempscale.loss_log import Trajectory
from tempscale.predictor import LossForecast, default_grid, forecast, predict
from tempscale.temporal import DEFAULT_EPSILON


@dataclass
class CandidateRun:
    """One candidate hyperparameter setting with its prefix logs."""

    label: str
    trajectory: Trajectory
    forecast: LossForecast | None = None
    predicted_final_loss: float | None = None
    situation: str | None = None
    n_sep: int | None = None
    fit_r_squared: float | None = None
    error: str | None = None


def _predict_candidate(candidate: CandidateRun, epsilon: float) -> None:
    traj = candidate.trajectory
    fits = fit_trajectory(traj)
    pc = predict(fits, traj.manifest, epsilon=epsilon)
    grid = default_grid(traj.manifest)
    fc = forecast(pc, traj.manifest, grid)
    candidate.forecast = fc
    candidate.predicted_final_loss = float(fc.predicted_mean_loss[-1])
    candidate.situation = pc.situation.value
    candidate.n_sep = pc.n_sep
    candidate.fit_r_squared = pc.fit_quality.get("a2_log")


def rerank(candidates: list[CandidateRun],
           epsilon: float = DEFAULT_EPSILON) -> list[CandidateRun]:
    """Rank candidates ascending by predicted final loss.

    All candidates must share n_tot and seq_len. Ties break by label so
    the ranking is invariant under input order. A candidate whose
    prediction fails is ranked last with the error recorded instead of
    aborting the batch.
    """
    if len(candidates) < 2:
        raise InsufficientDataError("reranking needs at least 2 candidates")
    n_tots = {c.trajectory.manifest.n_tot for c in candidates}
    seq_lens = {c.trajectory.manifest.seq_len for c in candidates}
    if len(n_tots) != 1 or len(seq_lens) != 1:
        raise ValueError("candidates must share n_tot and seq_len")
    for candidate in candidates:
        try:
            _predict_candidate(candidate, epsilon)
        except TempscaleError as exc:
            candidate.error = str(exc)
            candidate.predicted_final_loss = None

    def key(c: CandidateRun):
        failed = c.predicted_final_loss is None
        return (failed, np.inf if failed else c.predicted_final_loss, c.label)

    return sorted(candidates, key=key)
