"""Tail-trimmed and robust estimation of GARCH(1,1) models under heavy tails."""

__version__ = "0.1.0"

from .api import TailGarch, check_series
from .estimators import (
    ESTIMATORS,
    FitConfig,
    FitResult,
    default_config,
    fit,
    log_lad_fit,
    mnwm_fit,
    pqml_fit,
    pqmttl_fit,
    qml_fit,
    qmttl_fit,
    wlqml_fit,
)
from .exceptions import (
    InvalidConfigError,
    InvalidDataError,
    InvalidInputError,
    InvalidRestrictionError,
    NumericalRankError,
    OptimizationError,
    ParseError,
    TailGarchError,
)
from .inference import ScaleEstimate, WaldResult, ks_normality, mnwm_scale, qmttl_scale, wald_test
from .io import ReturnsSeries, load_returns
from .model import ErrorDist, GarchParams, VolPath, iterate_volatility, sample_error, simulate_garch
from .montecarlo import ExperimentSpec, McReport, run_experiment, run_replication, summarize
from .optimize import OptimizerConfig
from .trimming import (
    Redescender,
    TrimPlan,
    fractile_schedule,
    pareto_balance_k1,
    trim_indicators,
)

__all__ = [
    "ESTIMATORS", "ErrorDist", "ExperimentSpec", "FitConfig", "FitResult", "GarchParams",
    "InvalidConfigError", "InvalidDataError", "InvalidInputError", "InvalidRestrictionError",
    "McReport", "NumericalRankError", "OptimizationError", "OptimizerConfig", "ParseError",
    "Redescender", "ReturnsSeries", "ScaleEstimate", "TailGarch", "TailGarchError",
    "TrimPlan", "VolPath", "WaldResult", "check_series", "default_config", "fit",
    "fractile_schedule", "iterate_volatility", "ks_normality", "load_returns", "log_lad_fit",
    "mnwm_fit", "mnwm_scale", "pareto_balance_k1", "pqml_fit", "pqmttl_fit", "qml_fit",
    "qmttl_fit", "qmttl_scale", "run_experiment", "run_replication", "sample_error",
    "simulate_garch", "summarize", "trim_indicators", "wald_test", "wlqml_fit",
]
