"""scikit-learn style wrapper around the fit routines.

>>> from tailgarch import TailGarch, GarchParams, ErrorDist, simulate_garch
>>> y = simulate_garch(GarchParams(0.05, 0.05, 0.9), ErrorDist.gaussian(), 400, seed=3)
>>> model = TailGarch(estimator="qmttl").fit(y)
>>> model.predict(y).shape
(400,)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimators import FitConfig, _canonical, _Data, default_restarts, fit, pqmttl_schedule
from .exceptions import InvalidInputError
from .inference import mnwm_scale, qmttl_scale
from .model import GarchParams
from .optimize import OptimizerConfig
from .trimming import Redescender, fractile_schedule

__all__ = ["TailGarch", "check_series"]


def check_series(X) -> np.ndarray:
    """Validate a returns series given as ``(n,)`` or ``(n, 1)``; returns a 1-D float array."""
    arr = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise InvalidInputError(f"expected one column of returns, got {arr.shape[1]}")
        arr = arr[:, 0]
    if arr.size < 2:
        raise InvalidInputError("need at least two observations")
    return arr


class TailGarch(TransformerMixin, BaseEstimator):
    """GARCH(1,1) fitted by one of the robust criteria.

    Parameters
    ----------
    estimator : str
        ``qmttl``, ``mnwm``, ``qml``, ``loglad``, ``wlqml``, ``pqml`` or ``pqmttl``.
    trim_mode : str
        ``strong``, ``weak`` or ``symmetric`` fractile multiplier.
    lam : float
        Fractile rate, ``k2 = max(1, [lam n / ln n])``.
    exclusive : bool
        Trim exactly ``k`` per tail instead of ``k - 1`` (closed interval).
    redescender : str
        MNWM transform: ``simple``, ``hampel``, ``tukey`` or ``exponential``.
    pqml_index : float
        Power-law index of the PQML criteria.
    method : str
        ``nelder-mead`` or ``projected-gradient``.
    restarts : int, optional
        Optimizer restarts; ``None`` picks the estimator's default.
    seed : int
        Seed of the restart perturbations.
    h_init : {"sample", "omega"} or float
        Start value of the volatility recursion.
    theta_init : tuple, optional
        Starting ``(omega, alpha, beta)``.

    Attributes
    ----------
    params_ : GarchParams
    result_ : FitResult
    n_obs_ : int
    """

    def __init__(self, estimator="qmttl", trim_mode="strong", lam=0.025, exclusive=False,
                 redescender="simple", pqml_index=3.5, method="nelder-mead", restarts=None,
                 seed=0, h_init="sample", theta_init=None):
        self.estimator = estimator
        self.trim_mode = trim_mode
        self.lam = lam
        self.exclusive = exclusive
        self.redescender = redescender
        self.pqml_index = pqml_index
        self.method = method
        self.restarts = restarts
        self.seed = seed
        self.h_init = h_init
        self.theta_init = theta_init

    def _config(self, n: int) -> FitConfig:
        name = _canonical(self.estimator)
        plan = None
        if name == "qmttl":
            plan = fractile_schedule(n, lam=self.lam, mode=self.trim_mode,
                                     exclusive=self.exclusive)
        elif name == "mnwm":
            plan = fractile_schedule(n, lam=self.lam, mode="symmetric", exclusive=self.exclusive)
        elif name == "pqmttl":
            plan = pqmttl_schedule(n, self.trim_mode, lam=self.lam).with_convention(self.exclusive)
        start = None if self.theta_init is None else GarchParams(*self.theta_init)
        restarts = default_restarts(name) if self.restarts is None else self.restarts
        return FitConfig(
            plan=plan, redescender=Redescender.parse(self.redescender),
            pqml_index=self.pqml_index, theta_init=start, h_init=self.h_init,
            optimizer=OptimizerConfig(method=self.method, restarts=restarts, seed=self.seed),
        )

    def fit(self, X, y=None):
        """Fit to the returns ``X``; ``y`` is ignored."""
        series = check_series(X)
        self.result_ = fit(self.estimator, series, self._config(series.size))
        self.params_ = self.result_.theta_hat
        self.n_obs_ = series.size
        self._train = series
        return self

    def predict(self, X=None) -> np.ndarray:
        """Conditional variance path ``h_t`` of ``X`` (the training series by default)."""
        check_is_fitted(self, "params_")
        series = self._train if X is None else check_series(X)
        return _Data(series, self.h_init).h(self.params_.to_array())

    def transform(self, X) -> np.ndarray:
        """Standardized residuals ``y_t / sqrt(h_t)``."""
        series = check_series(X)
        return series / np.sqrt(self.predict(series))

    def score(self, X, y=None) -> float:
        """Mean Gaussian log-likelihood (up to a constant) of ``X`` at the fit."""
        series = check_series(X)
        h = self.predict(series)
        return float(-0.5 * np.mean(np.log(h[1:]) + series[1:] ** 2 / h[1:]))

    def standard_errors(self) -> np.ndarray:
        """Self-normalized standard errors; QMTTL and MNWM fits only."""
        check_is_fitted(self, "params_")
        name = self.result_.estimator
        if name == "qmttl":
            return qmttl_scale(self.result_, self._train).se
        if name == "mnwm":
            return mnwm_scale(self.result_, self._train).se
        raise InvalidInputError(f"no scale estimator for {name}")
