"""Box-constrained minimization shared by every estimator.

Nelder-Mead runs in coordinates scaled by the starting point so that omega
(often ~1e-2 or smaller) and beta (~0.9) move on comparable scales.  After
each run the simplex is rebuilt around the best point with a seeded
perturbation and the search restarted; the fit counts as converged when the
last restart no longer improves the criterion by more than ``tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .exceptions import InvalidConfigError, OptimizationError

__all__ = ["OptimizerConfig", "OptimizeResult", "optimize"]


@dataclass(frozen=True)
class OptimizerConfig:
    """``method`` is ``"nelder-mead"`` or ``"projected-gradient"``."""

    method: str = "nelder-mead"
    restarts: int = 3
    tol: float = 1e-8
    maxfev: int = 3000
    seed: int = 0

    def __post_init__(self):
        m = self.method.lower().replace("_", "-")
        if m in ("nm", "neldermead", "simplex"):
            m = "nelder-mead"
        if m in ("pg", "gradient", "projected-gradient", "gradientdescentwithprojection"):
            m = "projected-gradient"
        if m not in ("nelder-mead", "projected-gradient"):
            raise InvalidConfigError(f"unknown optimizer {self.method!r}")
        object.__setattr__(self, "method", m)
        if not self.tol > 0:
            raise InvalidConfigError(f"tol={self.tol} must be positive")
        if self.restarts < 1:
            raise InvalidConfigError(f"restarts={self.restarts} must be at least 1")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    nfev: int
    trace: list = field(default_factory=list)


class _Tracked:
    """Objective wrapper that maps non-finite values to +inf and remembers the best point."""

    def __init__(self, fun, scale):
        self.fun = fun
        self.scale = scale
        self.best_f = math.inf
        self.best_x = None
        self.nfev = 0
        self.finite = 0

    def __call__(self, z):
        x = z * self.scale
        self.nfev += 1
        try:
            f = float(self.fun(x))
        except (FloatingPointError, ZeroDivisionError, OverflowError):
            f = math.inf
        if not math.isfinite(f):
            return math.inf
        self.finite += 1
        if f < self.best_f:
            self.best_f, self.best_x = f, x.copy()
        return f


def _simplex(z0, lo, hi, step, rng, jitter):
    d = z0.size
    sim = np.tile(z0, (d + 1, 1))
    for i in range(d):
        delta = step * (1.0 + jitter * rng.uniform(-0.5, 0.5))
        up = z0[i] + delta
        # step inward when the vertex would leave the box
        sim[i + 1, i] = up if up <= hi[i] else z0[i] - delta
    return np.clip(sim, lo, hi)


def optimize(objective, x0, bounds, config: OptimizerConfig | None = None,
             gradient=None) -> OptimizeResult:
    """Minimize ``objective`` over the box ``bounds`` starting from ``x0``.

    ``bounds`` is a sequence of ``(low, high)`` pairs.  ``gradient`` is only
    used by the projected-gradient method.  Raises :class:`OptimizationError`
    when the objective is non-finite at every probe.
    """
    config = config or OptimizerConfig()
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
    scale = np.maximum(np.abs(x0), 1e-8)
    zlo, zhi = lo / scale, hi / scale
    fn = _Tracked(objective, scale)
    trace: list[float] = []
    rng = np.random.default_rng(config.seed)

    if config.method == "projected-gradient":
        if gradient is None:
            raise InvalidConfigError("projected-gradient needs an analytic gradient")

        def jac(z):
            return np.asarray(gradient(z * scale), dtype=float) * scale

        res = minimize(fn, x0 / scale, jac=jac, method="L-BFGS-B",
                       bounds=list(zip(zlo, zhi)),
                       options={"ftol": config.tol, "gtol": 1e-10,
                                "maxfun": config.maxfev},
                       callback=lambda z: trace.append(fn.best_f))
        if fn.best_x is None:
            raise OptimizationError("objective non-finite at every probe", trace)
        return OptimizeResult(fn.best_x, fn.best_f, bool(res.success),
                              int(res.nit), fn.nfev, trace)

    z = x0 / scale
    iterations = 0
    converged = False
    prev = math.inf
    for r in range(config.restarts):
        step = 0.1 if r == 0 else 0.05
        sim = _simplex(z, zlo, zhi, step, rng, jitter=0.0 if r == 0 else 1.0)
        res = minimize(
            fn, z, method="Nelder-Mead", bounds=list(zip(zlo, zhi)),
            callback=lambda zk: trace.append(fn.best_f),
            options={"initial_simplex": sim, "xatol": 1e-7, "fatol": config.tol,
                     "maxfev": config.maxfev, "adaptive": False},
        )
        iterations += int(res.nit)
        if fn.best_x is None:
            raise OptimizationError("objective non-finite at every probe", trace)
        z = fn.best_x / scale
        improvement = prev - fn.best_f
        prev = fn.best_f
        if r > 0 and improvement <= config.tol * (1.0 + abs(fn.best_f)):
            converged = bool(res.success) or res.status == 0
            break
        if config.restarts == 1:
            converged = bool(res.success)
    return OptimizeResult(fn.best_x, fn.best_f, converged, iterations, fn.nfev, trace)
