"""GARCH(1,1) data generation and the feasible volatility recursion.

The volatility recursion is linear in the lagged squared return, so the
iterated path and its parameter derivatives are computed with IIR filters
instead of Python loops::

    h_1 = omega,              h_t = omega + alpha * y_{t-1}**2 + beta * h_{t-1}
    dh_1 = [1, 0, 0],         dh_t = [1, y_{t-1}**2, h_{t-1}] + beta * dh_{t-1}
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .exceptions import InvalidConfigError, InvalidInputError

__all__ = [
    "IOTA",
    "OMEGA_MAX",
    "ErrorDist",
    "GarchParams",
    "VolPath",
    "iterate_volatility",
    "make_rng",
    "resolve_h_init",
    "sample_error",
    "score_path",
    "simulate_garch",
]

#: Lower edge of the parameter box; alpha and beta also stay below 1 - IOTA.
IOTA = 1e-10
#: Upper edge for omega used by the optimizers.
OMEGA_MAX = 2.0

PARAM_NAMES = ("omega", "alpha", "beta")


@dataclass(frozen=True)
class GarchParams:
    """Parameter point ``(omega, alpha, beta)`` of a GARCH(1,1) model.

    Values outside ``omega >= IOTA`` and ``alpha, beta in [IOTA, 1 - IOTA]``
    are rejected.
    """

    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        vals = (self.omega, self.alpha, self.beta)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidInputError(f"non-finite GARCH parameters {vals}")
        if self.omega < IOTA:
            raise InvalidInputError(f"omega={self.omega} below {IOTA}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not IOTA <= v <= 1 - IOTA:
                raise InvalidInputError(f"{name}={v} outside [{IOTA}, {1 - IOTA}]")
        # store plain floats so equality and hashing behave
        for name, v in zip(PARAM_NAMES, vals):
            object.__setattr__(self, name, float(v))

    @classmethod
    def from_array(cls, theta, clip=False) -> "GarchParams":
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (3,):
            raise InvalidInputError(f"expected 3 parameters, got {theta.shape}")
        if clip:
            theta = np.clip(theta, [IOTA, IOTA, IOTA], [np.inf, 1 - IOTA, 1 - IOTA])
        return cls(*theta)

    def to_array(self) -> np.ndarray:
        return np.array([self.omega, self.alpha, self.beta])

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    def unconditional_variance(self) -> float:
        """``omega / (1 - alpha - beta)``; infinite when not covariance stationary."""
        p = self.persistence
        return self.omega / (1.0 - p) if p < 1 else math.inf


@dataclass(frozen=True)
class ErrorDist:
    """Innovation law, standardized to mean zero.

    ``standardize="variance"`` (default) gives ``E[eps**2] = 1``;
    ``standardize="abs"`` gives ``E|eps| = 1`` instead.  The Pareto variant is
    the symmetric law with ``P(|Z| > a) = (1 + a)**(-kappa)`` before scaling.
    """

    kind: str = "gaussian"
    kappa: float | None = None
    standardize: str = "variance"

    def __post_init__(self):
        if self.kind not in ("gaussian", "laplace", "pareto"):
            raise InvalidConfigError(f"unknown error distribution {self.kind!r}")
        if self.standardize not in ("variance", "abs"):
            raise InvalidConfigError(f"unknown standardization {self.standardize!r}")
        if self.kind == "pareto":
            if self.kappa is None:
                raise InvalidConfigError("pareto errors need a tail index kappa")
            lower = 2.0 if self.standardize == "variance" else 1.0
            if not self.kappa > lower:
                raise InvalidConfigError(
                    f"pareto kappa={self.kappa} must exceed {lower} for "
                    f"{self.standardize} standardization"
                )
        elif self.kappa is not None:
            raise InvalidConfigError(f"{self.kind} errors take no kappa")

    @classmethod
    def gaussian(cls, standardize="variance") -> "ErrorDist":
        return cls("gaussian", None, standardize)

    @classmethod
    def laplace(cls, standardize="variance") -> "ErrorDist":
        return cls("laplace", None, standardize)

    @classmethod
    def pareto(cls, kappa, standardize="variance") -> "ErrorDist":
        return cls("pareto", float(kappa), standardize)

    @classmethod
    def parse(cls, text: str) -> "ErrorDist":
        """Parse ``gaussian``, ``laplace`` or ``pareto:<kappa>`` (``P2.5`` also works)."""
        t = text.strip().lower()
        if t in ("gaussian", "normal", "n"):
            return cls.gaussian()
        if t == "laplace":
            return cls.laplace()
        if t.startswith("pareto:"):
            return cls.pareto(float(t.split(":", 1)[1]))
        if t.startswith("p") and t[1:].replace(".", "", 1).isdigit():
            return cls.pareto(float(t[1:]))
        raise InvalidConfigError(f"cannot parse error distribution {text!r}")

    def __str__(self):
        if self.kind == "pareto":
            return f"pareto:{self.kappa:g}"
        return self.kind

    def raw_scale(self) -> float:
        """Factor dividing the raw draw so the chosen moment equals one."""
        if self.kind == "gaussian":
            return 1.0 if self.standardize == "variance" else math.sqrt(2 / math.pi)
        if self.kind == "laplace":
            # raw draw is standard Laplace(0, 1): E Z^2 = 2, E|Z| = 1
            return math.sqrt(2.0) if self.standardize == "variance" else 1.0
        k = self.kappa
        if self.standardize == "variance":
            return math.sqrt(2.0 / ((k - 1.0) * (k - 2.0)))
        return 1.0 / (k - 1.0)


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a ``SeedSequence`` or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _raw_draws(dist: ErrorDist, rng: np.random.Generator, n: int) -> np.ndarray:
    if dist.kind == "gaussian":
        return rng.standard_normal(n)
    if dist.kind == "laplace":
        return rng.laplace(0.0, 1.0, n)
    u = 1.0 - rng.random(n)  # in (0, 1]
    mag = u ** (-1.0 / dist.kappa) - 1.0
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return sign * mag


def sample_error(dist: ErrorDist, seed, n: int, standardized: bool = True) -> np.ndarray:
    """Draw ``n`` i.i.d. innovations from ``dist``.

    With ``standardized=False`` the raw draw is returned (for the Pareto law
    that is ``P(|Z| > a) = (1 + a)**(-kappa)``).
    """
    if n < 1:
        raise InvalidInputError(f"n={n} must be positive")
    z = _raw_draws(dist, make_rng(seed), int(n))
    return z / dist.raw_scale() if standardized else z


def simulate_garch(
    params: GarchParams,
    dist: ErrorDist,
    n: int,
    seed,
    burn: int | None = None,
    sigma2_init: float | None = None,
) -> np.ndarray:
    """Simulate ``n`` returns from the GARCH(1,1) process.

    ``burn + n`` observations are generated from ``sigma_1**2 = sigma2_init``
    (default ``omega``) and the first ``burn`` discarded; ``burn`` defaults
    to ``19 * n``.
    """
    if n < 2:
        raise InvalidInputError(f"n={n} must be at least 2")
    if params.persistence >= 1:
        warnings.warn(
            f"alpha + beta = {params.persistence:.4f} >= 1: not covariance stationary",
            RuntimeWarning,
            stacklevel=2,
        )
    burn = 19 * n if burn is None else int(burn)
    total = burn + n
    eps = sample_error(dist, seed, total).tolist()
    omega, alpha, beta = params.omega, params.alpha, params.beta
    s2 = params.omega if sigma2_init is None else float(sigma2_init)
    y = [0.0] * total
    for t in range(total):
        if t:
            s2 = omega + (alpha * eps[t - 1] ** 2 + beta) * s2
        y[t] = math.sqrt(s2) * eps[t]
    return np.asarray(y[burn:])


def _check_series(series) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise InvalidInputError(f"series must be one-dimensional, got shape {y.shape}")
    if y.size < 2:
        raise InvalidInputError(f"series needs at least 2 observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("series contains non-finite values")
    return y


def _lagged_sq(y: np.ndarray) -> np.ndarray:
    """``[0, y_1**2, ..., y_{n-1}**2]``."""
    out = np.empty_like(y)
    out[0] = 0.0
    np.square(y[:-1], out=out[1:])
    return out


def _volatility(theta, y2lag: np.ndarray, h1: float | None = None) -> np.ndarray:
    """``h`` from ``h_1 = omega`` (``h1=None``) or from a fixed start value ``h1``."""
    omega, alpha, beta = theta
    x = omega + alpha * y2lag
    if h1 is not None:
        x[0] = h1
    return lfilter([1.0], [1.0, -beta], x)


def _volatility_grad(beta: float, h: np.ndarray, y2lag: np.ndarray,
                     fixed_start: bool = False) -> np.ndarray:
    drivers = np.empty((h.size, 3))
    drivers[:, 0] = 1.0
    drivers[:, 1] = y2lag
    drivers[0, 2] = 0.0
    drivers[1:, 2] = h[:-1]
    if fixed_start:
        drivers[0, 0] = 0.0
    return lfilter([1.0], [1.0, -beta], drivers, axis=0)


def resolve_h_init(h_init, y: np.ndarray) -> float | None:
    """Start value for the recursion: ``None`` means ``h_1 = omega``.

    ``"sample"`` uses the sample mean of ``y**2``; a number is used as is.
    """
    if h_init is None or h_init == "omega":
        return None
    if h_init == "sample":
        v = float(np.mean(np.square(y)))
        if not v > 0:
            raise InvalidInputError("sample second moment is zero; cannot start the recursion")
        return v
    v = float(h_init)
    if not (np.isfinite(v) and v > 0):
        raise InvalidInputError(f"h_init={h_init!r} must be positive")
    return v


@dataclass(frozen=True)
class VolPath:
    """Iterated volatility ``h``, its gradient ``dh`` and derived residuals.

    ``s = dh / h`` is the scaled volatility derivative; ``residuals`` are
    ``y / sqrt(h)`` and ``centered`` is ``residuals**2 - 1``.  Estimation
    criteria use observations ``t = 2..n`` (index 1 onward).
    """

    params: GarchParams
    y: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    dh: np.ndarray = field(repr=False)
    h_init: float | None = None

    @property
    def s(self) -> np.ndarray:
        return self.dh / self.h[:, None]

    @property
    def residuals(self) -> np.ndarray:
        return self.y / np.sqrt(self.h)

    @property
    def centered(self) -> np.ndarray:
        return self.y**2 / self.h - 1.0

    def __len__(self):
        return self.h.size


def iterate_volatility(params: GarchParams, series, h_init="omega") -> VolPath:
    """Run the feasible volatility recursion.

    By default ``h_1 = omega`` and ``dh_1 = [1, 0, 0]``.  With
    ``h_init="sample"`` (or a positive number) ``h_1`` is that fixed value
    and ``dh_1 = 0``.
    """
    y = _check_series(series)
    h1 = resolve_h_init(h_init, y)
    y2lag = _lagged_sq(y)
    theta = params.to_array()
    h = _volatility(theta, y2lag, h1)
    dh = _volatility_grad(params.beta, h, y2lag, fixed_start=h1 is not None)
    return VolPath(params, y, h, dh, h1)


def score_path(path: VolPath) -> np.ndarray:
    """Scaled volatility derivatives ``s_t = dh_t / h_t`` as an ``(n, 3)`` array."""
    return path.s
