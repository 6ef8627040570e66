"""Loss-trajectory analysis toolkit.

Fits the per-position hyperbolic loss law to pre-training checkpoints,
models the temporal evolution of its parameters, and extrapolates the
remaining loss curve from an early training prefix.
"""

from tempscale.loss_log import (
    RunManifest,
    TokenLossProfile,
    Trajectory,
    mean_loss,
    parse_trajectory,
    perplexity,
)
from tempscale.fitkit import FitResult, mse, nls_fit, r_squared
from tempscale.hyperbolic import (
    HyperbolicParams,
    aggregate_mean_loss,
    eval_position_loss,
    fit_checkpoint,
    fit_trajectory,
)
from tempscale.temporal import ParamSeries, TemporalCurves, eval_curves, fit_temporal
from tempscale.predictor import LossForecast, PredictedCurves, fit_prefix, forecast
from tempscale.baselines import BaselineModel, eval_baseline, fit_baseline

__all__ = [
    "RunManifest",
    "TokenLossProfile",
    "Trajectory",
    "mean_loss",
    "parse_trajectory",
    "perplexity",
    "FitResult",
    "mse",
    "nls_fit",
    "r_squared",
    "HyperbolicParams",
    "aggregate_mean_loss",
    "eval_position_loss",
    "fit_checkpoint",
    "fit_trajectory",
    "ParamSeries",
    "TemporalCurves",
    "eval_curves",
    "fit_temporal",
    "LossForecast",
    "PredictedCurves",
    "fit_prefix",
    "forecast",
    "BaselineModel",
    "eval_baseline",
    "fit_baseline",
]

__version__ = "0.1.0"
