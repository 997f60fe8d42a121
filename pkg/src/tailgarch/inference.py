"""Self-normalized scale estimates, standard errors and Wald tests.

The QMTTL scale is

    V_n = n * [(1/n) sum (eps_t**2 - 1)**2 I_t]**-1 * (1/n) sum s_t s_t'

and the MNWM scale replaces the trimmed fourth moment by
``(1/n) sum psi_t**4 - 1`` and the score outer product by its centered
version.  ``V_n**(1/2) (theta_hat - theta0)`` is approximately standard
normal whatever the convergence rate, so ``V_n**-1`` serves as the
covariance of the estimate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimators import (
    FitResult,
    _Data,
    _mnwm_parts,
    _qmttl_mask,
    _y_keep,
)
from .exceptions import (
    InvalidDataError,
    InvalidInputError,
    InvalidRestrictionError,
    NumericalRankError,
)
from .trimming import fractile_schedule

__all__ = [
    "KS_CRIT_5PCT",
    "ScaleEstimate",
    "WaldResult",
    "ks_normality",
    "linear_restriction",
    "mnwm_scale",
    "qmttl_scale",
    "wald_test",
]

#: Asymptotic one-sample Kolmogorov-Smirnov 5% constant; the critical value is this over sqrt(R).
KS_CRIT_5PCT = 1.358

_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class ScaleEstimate:
    """Scale matrix ``v_hat``, the implied covariance ``v_hat**-1`` and standard errors.

    ``floored`` is set when an eigenvalue of ``v_hat`` had to be raised to
    ``1e-12 * trace`` before inversion.
    """

    v_hat: np.ndarray
    cov_theta: np.ndarray
    se: np.ndarray
    floored: bool = False

    def t_ratio(self, theta_hat, value, index: int = 2) -> float:
        """``(theta_hat[index] - value) / se[index]``."""
        return (float(np.asarray(theta_hat)[index]) - value) / float(self.se[index])

    def confidence_interval(self, theta_hat, index: int = 2, level: float = 0.95):
        z = stats.norm.ppf(0.5 + level / 2)
        c = float(np.asarray(theta_hat)[index])
        return c - z * self.se[index], c + z * self.se[index]


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    df: int
    p_value: float


def _sym_inverse(a: np.ndarray):
    """Inverse of a symmetric matrix with eigenvalues floored at ``1e-12 * trace``."""
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    floor = _EIG_FLOOR * abs(np.trace(a))
    floored = bool(np.any(w < floor))
    if floored:
        warnings.warn("near-singular scale matrix; eigenvalues floored before inversion",
                      RuntimeWarning, stacklevel=3)
        w = np.maximum(w, floor)
    return (v / w) @ v.T, v @ np.diag(w) @ v.T, floored


def _check_rank(m: np.ndarray, what: str):
    if not np.all(np.isfinite(m)) or np.linalg.matrix_rank(m) < m.shape[0]:
        raise NumericalRankError(f"{what} is rank deficient")


def _finish(v_hat: np.ndarray) -> ScaleEstimate:
    cov, v_hat, floored = _sym_inverse(v_hat)
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.diag(cov))
    return ScaleEstimate(v_hat, cov, se, floored)


def _prepare(fit: FitResult, series, expect: str):
    if fit.estimator != expect:
        raise InvalidInputError(f"expected a {expect} fit, got {fit.estimator}")
    if not fit.converged:
        raise InvalidInputError("fit did not converge; scale estimate undefined")
    config = fit.config
    data = _Data(series, config.h_init if config is not None else "sample")
    if data.n != fit.n:
        raise InvalidInputError(f"series length {data.n} differs from fitted n={fit.n}")
    theta = fit.theta
    h = data.h(theta)
    if h is None:
        raise InvalidDataError("volatility non-positive at the estimate")
    s = data.grad(theta, h)[1:] / h[1:, None]
    return data, config, theta, h, s


def qmttl_scale(fit: FitResult, series) -> ScaleEstimate:
    """Scale of the tail-trimmed QML estimate.

    Parameters
    ----------
    fit : FitResult
        Converged ``qmttl`` fit.
    series : array_like
        The series the fit was computed on.

    Returns
    -------
    ScaleEstimate

    Notes
    -----
    With no trimming the scale reduces to the classic QML form
    ``n * (m4 - 2 m2 + 1)**-1 * S`` where ``m_j`` are residual moments and
    ``S`` is the mean score outer product.
    """
    data, config, theta, h, s = _prepare(fit, series, "qmttl")
    plan = config.plan
    if data.n <= plan.k1 + plan.k2 + 3:
        raise InvalidInputError(f"n={data.n} too small for k1={plan.k1}, k2={plan.k2}")
    e = data.y2[1:] / h[1:] - 1.0
    ykeep = _y_keep(data, plan, config)
    if plan.enabled:
        mask, _, _ = _qmttl_mask(data, data.y2 / h, plan, ykeep)
    else:
        mask = ykeep[1:]
    n = data.n
    m4 = float(np.sum(e * e * mask)) / n
    S = s.T @ s / n
    _check_rank(S, "score outer product")
    if not m4 > 0:
        raise NumericalRankError("trimmed fourth moment of residuals is zero")
    return _finish(n * S / m4)


def mnwm_scale(fit: FitResult, series) -> ScaleEstimate:
    """Scale of the MNWM estimate, ``n g**2 var(psi**2)**-1 cov(s)``.

    ``var(psi**2)`` is the variance of the re-centered moment and
    ``g = mean(psi psi' eps)`` its derivative factor, both over the
    transformed residuals.  Untransformed, ``g = mean eps**2 = 1`` and the
    scale is ``n (mean eps**4 - 1)**-1 cov(s)``; smooth redescenders shrink
    both terms, and dropping ``g`` would overstate precision.  The score
    covariance uses centered scores ``s_t - mean(s)``.
    """
    data, config, theta, h, s = _prepare(fit, series, "mnwm")
    plan = config.plan or fractile_schedule(data.n, mode="symmetric")
    if data.n <= plan.k2 + 3:
        raise InvalidInputError(f"n={data.n} too small for k={plan.k2}")
    ykeep = _y_keep(data, plan, config)
    dev, _, c, psi, _ = _mnwm_parts(data, theta, plan, config.redescender, ykeep)
    eps = data.y[1:] / np.sqrt(h[1:])
    n = data.n
    g = float(np.sum(psi * config.redescender.dpsi(eps, c) * eps * ykeep[1:])) / n
    m4 = float(dev @ dev) / n
    sc = s - s.mean(axis=0)
    S = sc.T @ sc / n
    _check_rank(S, "centered score covariance")
    if not m4 > 0 or g == 0:
        raise NumericalRankError("transformed squared residuals carry no information")
    return _finish(n * g * g * S / m4)


def linear_restriction(index: int, value: float):
    """Callbacks for the single restriction ``theta[index] = value``."""
    d = np.zeros((1, 3))
    d[0, index] = 1.0
    return (lambda th: np.array([th[index] - value]), lambda th: d)


def wald_test(fit: FitResult, scale: ScaleEstimate, restriction, gradient=None) -> WaldResult:
    """Wald statistic ``R' (D V**-1 D')**-1 R`` with a chi-square(J) p-value.

    Parameters
    ----------
    fit : FitResult
    scale : ScaleEstimate
    restriction : callable or tuple
        ``R(theta) -> (J,)``; or a pair ``(R, D)``.
    gradient : callable, optional
        ``D(theta) -> (J, 3)``; required unless ``restriction`` is a pair.
    """
    if gradient is None:
        if not isinstance(restriction, tuple) or len(restriction) != 2:
            raise InvalidRestrictionError("restriction gradient D is required")
        restriction, gradient = restriction
    theta = fit.theta
    r = np.atleast_1d(np.asarray(restriction(theta), dtype=float))
    D = np.atleast_2d(np.asarray(gradient(theta), dtype=float))
    J = r.size
    if D.shape != (J, 3):
        raise InvalidRestrictionError(f"D has shape {D.shape}, expected ({J}, 3)")
    if np.linalg.matrix_rank(D) < J:
        raise InvalidRestrictionError("restriction gradient is not of full row rank")
    M = D @ scale.cov_theta @ D.T
    stat = float(r @ np.linalg.solve(M, r))
    stat = max(stat, 0.0)
    return WaldResult(stat, J, float(stats.chi2.sf(stat, J)))


def ks_normality(standardized_estimates) -> float:
    """Kolmogorov-Smirnov distance to N(0, 1) over the 5% critical value.

    The input is re-centered and scaled by its empirical mean and standard
    deviation (divisor ``R``) first.  A ratio above one rejects normality at
    the 5% level.

    Examples
    --------
    >>> from scipy.stats import norm
    >>> q = norm.ppf((np.arange(1, 1001) - 0.5) / 1000)
    >>> ks_normality(q) < 1
    True
    """
    x = np.asarray(standardized_estimates, dtype=float).ravel()
    x = x[np.isfinite(x)]
    R = x.size
    if R < 30:
        raise InvalidInputError(f"need at least 30 values, got {R}")
    sd = x.std()
    if not sd > 0:
        raise InvalidDataError("zero empirical variance")
    z = (x - x.mean()) / sd
    d = stats.kstest(z, "norm").statistic
    return float(d / (KS_CRIT_5PCT / math.sqrt(R)))
