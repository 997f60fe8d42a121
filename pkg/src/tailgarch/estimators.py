"""Fit routines for the GARCH(1,1) parameter vector.

Seven criteria share one box-constrained optimizer:

* ``qmttl``  -- Gaussian QML with summands removed at extremes of ``eps**2 - 1``
* ``mnwm``   -- method of moments on re-centered redescending transforms
* ``qml``    -- untrimmed Gaussian QML
* ``loglad`` -- least absolute deviations of ``ln y**2`` from ``ln h``
* ``wlqml``  -- weighted Laplace QML with past-extreme down-weighting
* ``pqml``   -- power-law QML, ``f(u) ~ (1 + |u|)**-index``
* ``pqmttl`` -- power-law QML trimmed on ``|eps|/(1+|eps|) - 1/index``

Every criterion sums over observations ``t = 2..n``; the trimming indicators
are recomputed from the residuals at each trial parameter.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidConfigError, InvalidDataError, InvalidInputError
from .model import (
    IOTA,
    OMEGA_MAX,
    GarchParams,
    _check_series,
    _lagged_sq,
    _volatility,
    _volatility_grad,
    resolve_h_init,
)
from .optimize import OptimizerConfig, optimize
from .trimming import (
    Redescender,
    TrimDiagnostics,
    TrimPlan,
    fractile_schedule,
    trim_by_lag_y,
    two_sided_trim,
)

__all__ = [
    "ESTIMATORS",
    "FitConfig",
    "FitResult",
    "default_config",
    "fit",
    "log_lad_fit",
    "mnwm_fit",
    "pqml_fit",
    "pqmttl_fit",
    "qml_fit",
    "qmttl_fit",
    "wlqml_fit",
    "wlqml_weights",
]

ESTIMATORS = ("qmttl", "mnwm", "qml", "loglad", "wlqml", "pqml", "pqmttl")

#: PQMTTL left-tail multipliers ``k1 / k2`` on the u-scale.
PQMTTL_MODES = {"strong": 9, "weak": 5, "symmetric": 1}
#: ``(alpha, beta)`` profiles tried alongside the QML warm start when no start is given.
START_PROFILES = ((0.05, 0.90), (0.10, 0.80), (0.15, 0.60))
#: Smallest allowed eigenvalue ratio of the MNWM moment correlation matrix.
_MNWM_RANK_TOL = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Settings for one fit.

    ``plan`` is the trimming plan; when ``None`` the strong asymmetric
    schedule for the sample size is used (symmetric for MNWM, which reads
    ``plan.k2`` as its two-tailed fractile).  ``theta_init=None`` runs the
    optimizer from a short QML fit and from ``START_PROFILES`` and keeps the
    lowest criterion.  ``omega_max=None`` widens the default box
    ``omega <= 2`` to ``10 * var(y)`` when the data are on a larger scale.
    """

    plan: TrimPlan | None = None
    redescender: Redescender = field(default_factory=Redescender)
    pqml_index: float = 3.5
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    theta_init: GarchParams | None = None
    use_y_trim: bool = True
    omega_max: float | None = None
    h_init: str | float = "sample"
    mnwm_weighting: str = "self-normalized"

    def __post_init__(self):
        if self.mnwm_weighting not in ("self-normalized", "identity"):
            raise InvalidConfigError(
                f"mnwm_weighting={self.mnwm_weighting!r} must be 'self-normalized' or 'identity'")
        if not self.pqml_index > 1:
            raise InvalidConfigError(f"pqml_index={self.pqml_index} must exceed 1")
        if not isinstance(self.redescender, Redescender):
            object.__setattr__(self, "redescender", Redescender.parse(self.redescender))

    def replace(self, **kw) -> "FitConfig":
        return replace(self, **kw)


@dataclass
class FitResult:
    """Outcome of a fit; ``theta_hat`` always lies in the parameter box."""

    estimator: str
    theta_hat: GarchParams
    criterion_value: float
    trim: TrimDiagnostics | None
    converged: bool
    iterations: int
    objective_trace: list = field(default_factory=list, repr=False)
    n: int = 0
    nfev: int = 0
    config: FitConfig | None = field(default=None, repr=False)

    @property
    def theta(self) -> np.ndarray:
        return self.theta_hat.to_array()


def default_config(estimator: str, n: int, **kw) -> FitConfig:
    """Simulation-study defaults for ``estimator`` at sample size ``n``."""
    estimator = _canonical(estimator)
    if "plan" not in kw:
        if estimator == "mnwm":
            kw["plan"] = fractile_schedule(n, mode="symmetric")
        elif estimator == "pqmttl":
            kw["plan"] = pqmttl_schedule(n, "weak")
        elif estimator == "qmttl":
            kw["plan"] = fractile_schedule(n, mode="strong")
    if "optimizer" not in kw:
        kw["optimizer"] = OptimizerConfig(restarts=default_restarts(estimator))
    return FitConfig(**kw)


def default_restarts(estimator: str) -> int:
    """Nelder-Mead restarts used by default for ``estimator``.

    The MNWM threshold is an order statistic, so its criterion is a step
    function that keeps improving in small jumps for a few more restarts.
    """
    return 6 if _canonical(estimator) == "mnwm" else 3


def pqmttl_schedule(n: int, mode: str = "weak", lam: float = 0.025) -> TrimPlan:
    """Fractiles on the u-scale: ``k2 = max(1, [lam n / ln n])``, ``k1 = 9, 5 or 1 times k2``."""
    base = fractile_schedule(n, lam=lam, mode="symmetric")
    mode = {"sa": "strong", "wa": "weak", "s": "symmetric"}.get(mode.lower(), mode.lower())
    if mode not in PQMTTL_MODES:
        raise InvalidConfigError(f"unknown PQMTTL mode {mode!r}")
    plan = TrimPlan(PQMTTL_MODES[mode] * base.k2, base.k2, base.k_y, "custom")
    plan.check(n)
    return plan


# ---------------------------------------------------------------------------
# data preparation


class _Data:
    """Series plus the arrays every criterion reuses."""

    def __init__(self, series, h_init="sample"):
        y = _check_series(series)
        if np.all(y == y[0]):
            raise InvalidDataError("series is constant; volatility is not identified")
        self.h1 = resolve_h_init(h_init, y)
        self.y = y
        self.n = y.size
        self.y2 = y * y
        self.y2lag = _lagged_sq(y)
        self.absy = np.abs(y)
        self.var = float(np.mean(self.y2))

    def grad(self, theta, h):
        return _volatility_grad(theta[2], h, self.y2lag, self.h1 is not None)

    def h(self, theta):
        h = _volatility(theta, self.y2lag, self.h1)
        if not np.all(np.isfinite(h)) or h.min() <= 0:
            return None
        return h


def _bounds(data: _Data, config: FitConfig):
    omax = config.omega_max
    if omax is None:
        omax = max(OMEGA_MAX, 10.0 * data.var)
    return [(IOTA, omax), (IOTA, 1 - IOTA), (IOTA, 1 - IOTA)]


def _heuristic_start(data: _Data) -> np.ndarray:
    return np.array([max(0.1 * data.var, 1e-8), 0.05, 0.85])


def _y_keep(data: _Data, plan: TrimPlan | None, config: FitConfig) -> np.ndarray:
    if not config.use_y_trim or plan is None or plan.k_y <= 0:
        return np.ones(data.n, dtype=bool)
    return trim_by_lag_y(data.y, plan.k_y, plan.exclusive)


# ---------------------------------------------------------------------------
# criteria; each returns a callable theta -> float (inf where undefined)


def _gaussian_terms(data, theta):
    h = data.h(theta)
    if h is None:
        return None, None
    e2 = data.y2 / h
    return np.log(h) + e2, e2


def _qml_objective(data: _Data):
    def f(theta):
        terms, _ = _gaussian_terms(data, theta)
        if terms is None:
            return math.inf
        return terms[1:].sum() / data.n

    return f


def _qmttl_mask(data, e2, plan, ykeep):
    keep, lo, hi = two_sided_trim(e2[1:] - 1.0, plan.k1, plan.k2, plan.exclusive)
    return keep & ykeep[1:], lo, hi


def _qmttl_objective(data: _Data, plan: TrimPlan, ykeep):
    if not plan.enabled and ykeep.all():
        return _qml_objective(data)

    def f(theta):
        terms, e2 = _gaussian_terms(data, theta)
        if terms is None:
            return math.inf
        mask, _, _ = _qmttl_mask(data, e2, plan, ykeep)
        return terms[1:] @ mask / data.n

    return f


def _qmttl_gradient(data: _Data, plan: TrimPlan, ykeep):
    """Almost-sure gradient ``-(1/n) sum (eps**2 - 1) s_t I_t``."""

    def g(theta):
        h = data.h(theta)
        e2 = data.y2 / h
        s = data.grad(theta, h) / h[:, None]
        if plan.enabled:
            mask, _, _ = _qmttl_mask(data, e2, plan, ykeep)
        else:
            mask = ykeep[1:]
        return -((e2[1:] - 1.0) * mask) @ s[1:] / data.n

    return g


def _mnwm_parts(data: _Data, theta, plan: TrimPlan, r: Redescender, ykeep):
    h = data.h(theta)
    if h is None:
        return None
    eps = data.y / np.sqrt(h)
    a = np.abs(eps[1:])
    k = plan.k2
    if k > 0:
        c = float(-np.partition(-a, k - 1)[k - 1])
        psi = r.psi(eps[1:], c) if c > 0 else np.zeros_like(a)
        if plan.exclusive:
            psi = np.where(a < c, psi, 0.0)
    else:
        c = math.inf
        psi = eps[1:].copy()
    psi = psi * ykeep[1:]
    psi2 = psi * psi
    dev = psi2 - psi2.mean()
    s = data.grad(theta, h)[1:] / h[1:, None]
    return dev, s, c, psi, h


def _mnwm_objective(data: _Data, plan: TrimPlan, r: Redescender, ykeep,
                    weighting: str = "self-normalized"):
    """Quadratic form in the summed moments.

    The re-centered moments are unchanged along ``(c omega, c alpha, beta)``
    (the residuals only rescale), so they fix ``beta`` and ``alpha / omega``
    but not the volatility level.  ``"identity"`` is the bare ``|m_bar|**2``,
    which shrinks like ``1 / c**2`` and so drifts toward large ``c``.
    ``"self-normalized"`` uses ``m_bar' S**-1 m_bar`` (``S`` the moment outer
    product; free of ``c``) plus ``(mean eps**2 - 1)**2`` to set the level.
    """

    def f(theta):
        parts = _mnwm_parts(data, theta, plan, r, ykeep)
        if parts is None:
            return math.inf
        dev, s = parts[0], parts[1]
        m = dev @ s / data.n
        if weighting == "identity":
            return float(m @ m)
        mt = dev[:, None] * s
        S = mt.T @ mt / data.n
        # the form is free of column scale, so work with the correlation
        # matrix; collinear moments (alpha -> 0) leave the form undefined
        d = np.sqrt(np.diag(S))
        if not np.all(d > 0):
            return math.inf
        w, v = np.linalg.eigh(S / np.outer(d, d))
        if not w[0] > _MNWM_RANK_TOL * w[-1]:
            return math.inf
        proj = v.T @ (m / d)
        shape = float(np.sum(proj * proj / w))
        level = float(np.mean(data.y2[1:] / parts[4][1:])) - 1.0
        return shape + level * level

    return f


def _loglad_objective(data: _Data):
    nz = data.y[1:] != 0
    logy2 = np.log(data.y2[1:][nz])

    def f(theta):
        h = data.h(theta)
        if h is None:
            return math.inf
        return np.abs(logy2 - np.log(h[1:][nz])).sum() / data.n

    return f


def wlqml_weights(series, frac: float = 0.10, power: float = 9.0,
                  threshold: float | None = None) -> np.ndarray:
    """Weights ``w_t = max(1, C**-1 sum_i i**-9 |y_{t-i}| 1{|y_{t-i}| > C})**-4``.

    ``C`` is the ``[frac n]``-th largest ``|y|`` unless ``threshold`` is
    given.  Returns before the sample start count as zero, so the lag sum
    stops at ``i = t - 1``.

    >>> float(wlqml_weights([0, 0, 0, 0, 10, 0], threshold=2.0)[5])
    0.0016
    """
    y = np.asarray(series, dtype=float)
    n = y.size
    a = np.abs(y)
    if threshold is None:
        k = max(1, int(math.floor(frac * n + 0.5)))
        C = float(-np.partition(-a, k - 1)[k - 1])
    else:
        C = float(threshold)
    if C <= 0:
        return np.ones(n)
    z = np.where(a > C, a, 0.0)
    kern = np.arange(1, n, dtype=float) ** (-power)
    # lagsum[t] = sum_{i=1}^{t} kern[i-1] * z[t-i]  (0-based t)
    lagsum = np.zeros(n)
    if n > 1:
        lagsum[1:] = np.convolve(z, kern)[: n - 1]
    return np.maximum(1.0, lagsum / C) ** -4.0


def _wlqml_objective(data: _Data, w):
    def f(theta):
        h = data.h(theta)
        if h is None:
            return math.inf
        terms = 0.5 * np.log(h[1:]) + data.absy[1:] / np.sqrt(h[1:])
        return terms @ w[1:] / data.n

    return f


def _pqml_terms(data, theta, index):
    h = data.h(theta)
    if h is None:
        return None, None
    absu = data.absy / np.sqrt(h)
    return 0.5 * np.log(h) + index * np.log1p(absu), absu


def _pqml_objective(data: _Data, index: float, shift: float = 0.0):
    def f(theta):
        terms, _ = _pqml_terms(data, theta, index)
        if terms is None:
            return math.inf
        return terms[1:].sum() / data.n + shift

    return f


def _pqmttl_mask(absu, index, plan, ykeep):
    u = absu[1:] / (1.0 + absu[1:]) - 1.0 / index
    keep, lo, hi = two_sided_trim(u, plan.k1, plan.k2, plan.exclusive)
    return keep & ykeep[1:], lo, hi


def _pqmttl_objective(data: _Data, index: float, plan: TrimPlan, ykeep):
    if not plan.enabled and ykeep.all():
        return _pqml_objective(data, index)

    def f(theta):
        terms, absu = _pqml_terms(data, theta, index)
        if terms is None:
            return math.inf
        mask, _, _ = _pqmttl_mask(absu, index, plan, ykeep)
        return terms[1:] @ mask / data.n

    return f


# ---------------------------------------------------------------------------
# driver


def _canonical(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace("_", "")
    alias = {"loglad": "loglad", "lad": "loglad", "qmttlsa": "qmttl", "mnwmi": "mnwm"}
    key = alias.get(key, key)
    if key not in ESTIMATORS:
        raise InvalidConfigError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
    return key


def _warm_start(data: _Data, config: FitConfig) -> np.ndarray:
    if config.theta_init is not None:
        return config.theta_init.to_array()
    quick = OptimizerConfig(restarts=1, tol=1e-6, maxfev=600, seed=config.optimizer.seed)
    res = optimize(_qml_objective(data), _heuristic_start(data), _bounds(data, config), quick)
    return res.x


def _start_points(data: _Data, config: FitConfig) -> list:
    """The QML warm start plus fixed ``(alpha, beta)`` profiles at the sample variance."""
    starts = [_warm_start(data, config)]
    for a, b in START_PROFILES:
        starts.append(np.array([max(data.var * (1.0 - a - b), 1e-8), a, b]))
    return starts


def _run(name, data, config, objective, gradient=None, diagnose=None, x0=None):
    bounds = _bounds(data, config)
    if x0 is not None or config.theta_init is not None:
        x0 = _warm_start(data, config) if x0 is None else x0
        res = optimize(objective, x0, bounds, config.optimizer, gradient)
    else:
        # trimmed criteria have several local minima; keep the lowest
        runs = [optimize(objective, x, bounds, config.optimizer, gradient)
                for x in _start_points(data, config)]
        res = min(runs, key=lambda r: r.fun)
    theta = GarchParams.from_array(res.x, clip=True)
    trim = diagnose(theta.to_array()) if diagnose is not None else None
    return FitResult(name, theta, res.fun, trim, res.converged, res.iterations,
                     res.trace, data.n, res.nfev, config)


def _check_room(data: _Data, plan: TrimPlan, extra: int = 2):
    if data.n <= plan.k1 + plan.k2 + extra:
        raise InvalidConfigError(
            f"sample of {data.n} too small for k1={plan.k1}, k2={plan.k2}"
        )


def qml_fit(series, config: FitConfig | None = None) -> FitResult:
    """Untrimmed Gaussian QML: minimize ``(1/n) sum (ln h_t + y_t**2 / h_t)``."""
    config = config or FitConfig()
    data = _Data(series, config.h_init)
    x0 = config.theta_init.to_array() if config.theta_init else _heuristic_start(data)
    return _run("qml", data, config, _qml_objective(data), x0=x0)


def qmttl_fit(series, config: FitConfig | None = None) -> FitResult:
    """Tail-trimmed QML.

    Minimizes ``(1/n) sum (ln h_t + y_t**2/h_t) * I_t * Iy_{t-1}`` where
    ``I_t`` keeps ``eps_t**2 - 1`` between its ``k1``-th negative and
    ``k2``-th positive order statistic and ``Iy`` drops observations that
    follow a lagged-return extreme.
    """
    config = config or FitConfig()
    data = _Data(series, config.h_init)
    plan = config.plan or fractile_schedule(data.n, mode="strong")
    config = config.replace(plan=plan)
    _check_room(data, plan)
    ykeep = _y_keep(data, plan, config)

    def diagnose(theta):
        _, e2 = _gaussian_terms(data, theta)
        mask, lo, hi = _qmttl_mask(data, e2, plan, np.ones(data.n, dtype=bool))
        e = e2[1:] - 1.0
        return TrimDiagnostics(lo, hi, int(np.count_nonzero(~mask & (e < 0))),
                               int(np.count_nonzero(~mask & (e >= 0))),
                               int(np.count_nonzero(~ykeep[1:])))

    x0 = None
    if not plan.enabled and ykeep.all():
        # identical criterion to QML, so start from the same point
        x0 = config.theta_init.to_array() if config.theta_init else _heuristic_start(data)
    return _run("qmttl", data, config, _qmttl_objective(data, plan, ykeep),
                _qmttl_gradient(data, plan, ykeep), diagnose, x0=x0)


def qmttl_criterion(series, theta, plan: TrimPlan, use_y_trim: bool = True,
                    h_init="sample"):
    """``(Q_n(theta), grad)`` of the tail-trimmed QML criterion, gradient almost sure."""
    config = FitConfig(plan=plan, use_y_trim=use_y_trim, h_init=h_init)
    data = _Data(series, config.h_init)
    ykeep = _y_keep(data, plan, config)
    theta = np.asarray(theta, dtype=float)
    return (_qmttl_objective(data, plan, ykeep)(theta),
            _qmttl_gradient(data, plan, ykeep)(theta))


def mnwm_fit(series, config: FitConfig | None = None) -> FitResult:
    """Method of negligibly weighted moments.

    Minimizes a quadratic form in ``(1/n) sum_t (psi_t**2 - mean psi**2) s_t`` with
    ``psi_t = psi(eps_t, c)``, ``c`` the ``k``-th largest ``|eps_t|``
    (``k = plan.k2``) and ``s_t = dh_t / h_t``; ``config.mnwm_weighting``
    picks the weighting of the form.
    """
    config = config or FitConfig()
    data = _Data(series, config.h_init)
    plan = config.plan or fractile_schedule(data.n, mode="symmetric")
    config = config.replace(plan=plan)
    if data.n <= plan.k2 + 2:
        raise InvalidConfigError(f"sample of {data.n} too small for k={plan.k2}")
    ykeep = _y_keep(data, plan, config)
    r = config.redescender

    def diagnose(theta):
        dev, s, c, psi, _ = _mnwm_parts(data, theta, plan, r, np.ones(data.n, dtype=bool))
        eps = data.y[1:] / np.sqrt(data.h(theta)[1:])
        out = np.abs(eps) > c if not plan.exclusive else np.abs(eps) >= c
        return TrimDiagnostics(-c, c, int(np.count_nonzero(out & (eps < 0))),
                               int(np.count_nonzero(out & (eps >= 0))),
                               int(np.count_nonzero(~ykeep[1:])))

    return _run("mnwm", data, config,
                _mnwm_objective(data, plan, r, ykeep, config.mnwm_weighting),
                diagnose=diagnose)


def mnwm_moments(series, theta, plan: TrimPlan, redescender="simple",
                 use_y_trim: bool = True, h_init="sample") -> np.ndarray:
    """Re-centered moment contributions ``(psi_t**2 - mean psi**2) s_t``, shape ``(n-1, 3)``."""
    config = FitConfig(plan=plan, use_y_trim=use_y_trim, h_init=h_init)
    data = _Data(series, config.h_init)
    dev, s, _, _, _ = _mnwm_parts(data, np.asarray(theta, dtype=float), plan,
                               Redescender.parse(redescender), _y_keep(data, plan, config))
    return dev[:, None] * s


def log_lad_fit(series, config: FitConfig | None = None) -> FitResult:
    """Log-LAD: minimize ``sum |ln y_t**2 - ln h_t|``; zero returns are dropped."""
    config = config or FitConfig()
    if config.optimizer.method != "nelder-mead":
        raise InvalidConfigError("Log-LAD criterion is non-smooth; use nelder-mead")
    data = _Data(series, config.h_init)
    zeros = int(np.count_nonzero(data.y[1:] == 0))
    if zeros > 0.1 * (data.n - 1):
        raise InvalidDataError(f"{zeros} zero returns (> 10%); log criterion undefined")
    if zeros:
        warnings.warn(f"dropping {zeros} zero returns from the Log-LAD criterion",
                      RuntimeWarning, stacklevel=2)
    return _run("loglad", data, config, _loglad_objective(data))


def wlqml_fit(series, config: FitConfig | None = None) -> FitResult:
    """Weighted Laplace QML with weights from :func:`wlqml_weights`."""
    config = config or FitConfig()
    data = _Data(series, config.h_init)
    if data.n < 20:
        raise InvalidDataError(f"WLQML needs at least 20 observations, got {data.n}")
    w = wlqml_weights(data.y)
    return _run("wlqml", data, config, _wlqml_objective(data, w))


def pqml_fit(series, config: FitConfig | None = None, shift: float = 0.0) -> FitResult:
    """Power-law QML: minimize ``sum (ln h_t / 2 + index * ln(1 + |y_t| / sqrt h_t))``.

    ``shift`` adds a constant to the criterion (the dropped density constant)
    and never moves the minimizer.
    """
    config = config or FitConfig()
    data = _Data(series, config.h_init)
    return _run("pqml", data, config, _pqml_objective(data, config.pqml_index, shift))


def pqmttl_fit(series, config: FitConfig | None = None) -> FitResult:
    """Power-law QML trimmed on ``u_t = |eps_t| / (1 + |eps_t|) - 1 / index``."""
    config = config or FitConfig()
    data = _Data(series, config.h_init)
    plan = config.plan if config.plan is not None else pqmttl_schedule(data.n, "weak")
    config = config.replace(plan=plan)
    _check_room(data, plan)
    index = config.pqml_index
    ykeep = _y_keep(data, plan, config)

    def diagnose(theta):
        _, absu = _pqml_terms(data, theta, index)
        mask, lo, hi = _pqmttl_mask(absu, index, plan, np.ones(data.n, dtype=bool))
        u = absu[1:] / (1 + absu[1:]) - 1 / index
        return TrimDiagnostics(lo, hi, int(np.count_nonzero(~mask & (u < 0))),
                               int(np.count_nonzero(~mask & (u >= 0))),
                               int(np.count_nonzero(~ykeep[1:])))

    return _run("pqmttl", data, config, _pqmttl_objective(data, index, plan, ykeep),
                diagnose=diagnose)


_FITTERS = {
    "qmttl": qmttl_fit,
    "mnwm": mnwm_fit,
    "qml": qml_fit,
    "loglad": log_lad_fit,
    "wlqml": wlqml_fit,
    "pqml": pqml_fit,
    "pqmttl": pqmttl_fit,
}


def fit(estimator: str, series, config: FitConfig | None = None) -> FitResult:
    """Dispatch to the named fit routine."""
    return _FITTERS[_canonical(estimator)](series, config)


def _validate_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3,):
        raise InvalidInputError(f"theta must have 3 entries, got {theta.shape}")
    return theta
