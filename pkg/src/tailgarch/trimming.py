"""Order-statistic trimming, fractile schedules and redescending transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import bisect

from .exceptions import InvalidConfigError, InvalidInputError

__all__ = [
    "TRIM_MODES",
    "Redescender",
    "TrimDiagnostics",
    "TrimPlan",
    "fractile_schedule",
    "implied_k2",
    "pareto_balance_k1",
    "rate_diagnostics",
    "redescend_weight",
    "round_half_up",
    "thin_tail_schedule",
    "trim_by_lag_y",
    "trim_indicators",
    "two_sided_trim",
]

#: Left-tail multiplier ``k1 / k2`` per named mode.
TRIM_MODES = {"strong": 35, "weak": 10, "symmetric": 1}

_MODE_ALIASES = {
    "sa": "strong",
    "strong_asym": "strong",
    "strongasym": "strong",
    "wa": "weak",
    "weak_asym": "weak",
    "weakasym": "weak",
    "s": "symmetric",
    "sym": "symmetric",
}


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _canonical_mode(mode: str) -> str:
    m = str(mode).strip().lower()
    m = _MODE_ALIASES.get(m, m)
    if m not in TRIM_MODES and m != "custom":
        raise InvalidConfigError(f"unknown trimming mode {mode!r}")
    return m


@dataclass(frozen=True)
class TrimPlan:
    """Fractiles for two-sided error trimming plus trimming by lagged ``|y|``.

    ``k1`` counts the left (negative) tail, ``k2`` the right tail, ``k_y`` the
    lagged-return order statistic.  A zero fractile disables that side.
    ``exclusive=False`` keeps observations equal to the order statistic (the
    closed interval), so continuous data lose ``k - 1`` points per side;
    ``exclusive=True`` removes exactly ``k``.
    """

    k1: int
    k2: int
    k_y: int = 0
    mode: str = "custom"
    exclusive: bool = False

    def __post_init__(self):
        for name in ("k1", "k2", "k_y"):
            if getattr(self, name) < 0:
                raise InvalidConfigError(f"{name}={getattr(self, name)} is negative")
        object.__setattr__(self, "mode", _canonical_mode(self.mode))

    @property
    def enabled(self) -> bool:
        return self.k1 > 0 or self.k2 > 0

    def check(self, n: int) -> None:
        if self.k1 + self.k2 >= n:
            raise InvalidConfigError(
                f"k1 + k2 = {self.k1 + self.k2} leaves nothing of a sample of {n}"
            )

    def with_convention(self, exclusive: bool) -> "TrimPlan":
        return replace(self, exclusive=bool(exclusive))

    @classmethod
    def disabled(cls) -> "TrimPlan":
        return cls(0, 0, 0, "custom")


def fractile_schedule(
    n: int,
    lam: float = 0.025,
    mode: str = "strong",
    y_lam: float = 0.1,
    exclusive: bool = False,
) -> TrimPlan:
    """Simulation-study fractiles ``k2 = max(1, [lam n / ln n])``, ``k1 = m k2``.

    ``m`` is 35, 10 or 1 for the strong asymmetric, weak asymmetric and
    symmetric modes; ``k_y = max(1, [y_lam ln n])``.  Brackets round half up.

    >>> p = fractile_schedule(800)
    >>> (p.k1, p.k2, p.k_y)
    (105, 3, 1)
    """
    if n < 10:
        raise InvalidInputError(f"n={n} too small for a fractile schedule (need >= 10)")
    mode = _canonical_mode(mode)
    if mode == "custom":
        raise InvalidConfigError("custom plans are built directly with TrimPlan(...)")
    k2 = max(1, round_half_up(lam * n / math.log(n)))
    k1 = TRIM_MODES[mode] * k2
    k_y = max(1, round_half_up(y_lam * math.log(n)))
    plan = TrimPlan(k1, k2, k_y, mode, exclusive)
    plan.check(n)
    return plan


def thin_tail_schedule(n: int, lam: float = 0.025, y_lam: float = 0.1,
                       exclusive: bool = False) -> TrimPlan:
    """Symmetric ``k1 = k2 = max(1, [lam sqrt(n)])``, an o(sqrt n) rule for thin tails."""
    if n < 10:
        raise InvalidInputError(f"n={n} too small for a fractile schedule (need >= 10)")
    k = max(1, round_half_up(lam * math.sqrt(n)))
    k_y = max(1, round_half_up(y_lam * math.log(n)))
    return TrimPlan(k, k, k_y, "symmetric", exclusive)


def _balance_residual(x: float, kappa: float, n: int, k2: float) -> float:
    lhs = (k2 / n) ** (1.0 - 2.0 / kappa)
    rhs = 0.5 * (kappa - 2.0) * (-1.0 + (1.0 - x) ** (-2.0 / kappa)) + x
    return rhs - lhs


def implied_k2(kappa: float, n: int, k1: float) -> float:
    """Right-tail fractile that balances a given ``k1`` under Pareto errors."""
    rhs = _balance_residual(k1 / n, kappa, n, 0.0)
    return n * rhs ** (kappa / (kappa - 2.0))


def pareto_balance_k1(kappa: float, n: int, k2: int, method: str = "exact") -> int:
    """Left-tail fractile ``k1`` that balances ``k2`` under ``(1 + a)**-kappa`` tails.

    Solves

        (k2/n)**(1 - 2/kappa)
            = (kappa-2)/2 * (-1 + (1 - k1/n)**(-2/kappa) + 2/(kappa-2) * k1/n)

    by bisection over ``k1 in [k2, n - k2]`` and returns the integer with the
    smallest absolute residual.  ``method="asymptotic"`` uses the first-order
    simplification ``(k2/n)**(1-2/kappa) = 2 (kappa-1)/kappa * k1/n`` instead.
    """
    if not 2.0 < kappa < 4.0:
        raise InvalidInputError(f"kappa={kappa} must lie in (2, 4)")
    if not 1 <= k2 < n:
        raise InvalidInputError(f"k2={k2} must lie in [1, n)")
    if method == "asymptotic":
        x = (k2 / n) ** (1.0 - 2.0 / kappa) * kappa / (2.0 * (kappa - 1.0))
        lo, hi = math.floor(x * n), math.ceil(x * n)
        resid = lambda k: abs(k / n - x)  # noqa: E731
    elif method == "exact":
        lo_x, hi_x = k2 / n, (n - k2) / n
        f_lo = _balance_residual(lo_x, kappa, n, k2)
        f_hi = _balance_residual(hi_x, kappa, n, k2)
        if f_lo * f_hi > 0:
            raise InvalidInputError(
                f"balance residual has no sign change on [{k2}, {n - k2}] "
                f"({f_lo:.4g}, {f_hi:.4g}); the balance is not monotone-bracketed here"
            )
        x = bisect(_balance_residual, lo_x, hi_x, args=(kappa, n, k2), xtol=1e-12)
        lo, hi = math.floor(x * n), math.ceil(x * n)
        resid = lambda k: abs(_balance_residual(k / n, kappa, n, k2))  # noqa: E731
    else:
        raise InvalidConfigError(f"unknown balance method {method!r}")
    cands = [k for k in (lo, hi) if k2 <= k <= n - k2] or [max(k2, min(lo, n - k2))]
    return min(cands, key=resid)


def rate_diagnostics(kappa: float, n: int, k: float, d: float = 1.0) -> dict:
    """Convergence-rate diagnostics for right-tail fractile ``k``.

    Returns the asymptotic trimmed second moment of ``eps**2 - 1``, the
    scale rate ``V_ii**0.5 / (E s_i**2)**0.5`` of the tail-trimmed estimator,
    the QML rate ``n**(1 - 2/kappa)`` and ``sqrt(n)`` for comparison.  ``d``
    is the tail constant in ``P(|eps| > a) ~ d a**-kappa``.
    """
    if kappa <= 2:
        raise InvalidInputError(f"kappa={kappa} must exceed 2")
    out = {"kappa": kappa, "n": n, "k": k, "root_n": math.sqrt(n)}
    if kappa > 4:
        out["trimmed_second_moment"] = math.nan  # finite: E[eps^4] - 1
        out["scale_rate"] = math.sqrt(n)
        out["qml_rate"] = math.sqrt(n)
    elif kappa == 4:
        out["trimmed_second_moment"] = d * math.log(n)
        out["scale_rate"] = math.sqrt(n / math.log(n)) / math.sqrt(d)
        out["qml_rate"] = math.sqrt(n)
    else:
        out["trimmed_second_moment"] = (
            kappa / (4 - kappa) * d ** (4 / kappa) * (n / k) ** (4 / kappa - 1)
        )
        out["scale_rate"] = (
            math.sqrt(n) * (k / n) ** (2 / kappa - 0.5) * d ** (-2 / kappa)
            * math.sqrt((4 - kappa) / kappa)
        )
        out["qml_rate"] = n ** (1 - 2 / kappa)
    return out


@dataclass(frozen=True)
class TrimDiagnostics:
    """Thresholds and counts from one trimming pass."""

    neg_threshold: float
    pos_threshold: float
    trimmed_neg: int
    trimmed_pos: int
    trimmed_y: int = 0

    @property
    def trimmed_total(self) -> int:
        return self.trimmed_neg + self.trimmed_pos

    def as_dict(self) -> dict:
        return {
            "neg_threshold": self.neg_threshold,
            "pos_threshold": self.pos_threshold,
            "trimmed_neg": self.trimmed_neg,
            "trimmed_pos": self.trimmed_pos,
            "trimmed_y": self.trimmed_y,
        }


def two_sided_trim(values: np.ndarray, k1: int, k2: int, exclusive: bool = False):
    """Keep-mask for ``values`` between its ``k1``-th negative and ``k2``-th positive order statistic.

    The negative part ``v * (v < 0)`` is ranked ascending and the positive
    part ``v * (v >= 0)`` descending, zero padded, as in tail-trimmed
    estimation.  Returns ``(keep, lower, upper)``.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if k1 + k2 >= n:
        raise InvalidConfigError(f"k1 + k2 = {k1 + k2} must be below the sample size {n}")
    keep = np.ones(n, dtype=bool)
    lower, upper = -np.inf, np.inf
    if k1 > 0:
        neg = np.minimum(v, 0.0)
        lower = float(np.partition(neg, k1 - 1)[k1 - 1])
        if exclusive:
            # exactly the k1 most negative, earliest index first among ties
            order = np.argsort(v, kind="stable")[:k1]
            keep[order[v[order] < 0]] = False
        else:
            keep &= v >= lower
    if k2 > 0:
        pos = np.maximum(v, 0.0)
        upper = float(-np.partition(-pos, k2 - 1)[k2 - 1])
        if exclusive:
            order = np.argsort(-v, kind="stable")[:k2]
            keep[order[v[order] > 0]] = False
        else:
            keep &= v <= upper
    return keep, lower, upper


def trim_indicators(centered, plan: TrimPlan):
    """Trimming indicator for centered squared residuals ``eps**2 - 1``.

    Returns ``(indicator, diagnostics)`` where the indicator is 1 for kept
    observations.  The lagged-return side of ``plan`` is ignored here; see
    :func:`trim_by_lag_y`.
    """
    e = np.asarray(centered, dtype=float)
    plan.check(e.size)
    keep, lo, hi = two_sided_trim(e, plan.k1, plan.k2, plan.exclusive)
    diag = TrimDiagnostics(
        neg_threshold=lo,
        pos_threshold=hi,
        trimmed_neg=int(np.count_nonzero(~keep & (e < 0))),
        trimmed_pos=int(np.count_nonzero(~keep & (e >= 0))),
    )
    return keep, diag


def trim_by_lag_y(series, k_y: int, exclusive: bool = False) -> np.ndarray:
    """Indicator that ``|y_{t-1}|`` does not exceed the ``k_y``-th largest ``|y|``.

    Position ``t`` carries the indicator of its lag, and the first position is
    always kept.  Under the default closed convention ``k_y = 1`` trims
    nothing and ``k_y = 2`` trims the successor of the sample maximum.
    """
    a = np.abs(np.asarray(series, dtype=float))
    n = a.size
    out = np.ones(n, dtype=bool)
    if k_y <= 0:
        return out
    if k_y > n:
        raise InvalidConfigError(f"k_y={k_y} exceeds the sample size {n}")
    if exclusive:
        order = np.argsort(-a, kind="stable")[:k_y]
        lag_keep = np.ones(n, dtype=bool)
        lag_keep[order] = False
    else:
        thr = -np.partition(-a, k_y - 1)[k_y - 1]
        lag_keep = a <= thr
    out[1:] = lag_keep[:-1]
    return out


_REDESCENDER_ALIASES = {
    "simple": "simple",
    "trim": "simple",
    "i": "simple",
    "indicator": "simple",
    "simpletrim": "simple",
    "hampel": "hampel",
    "h": "hampel",
    "tukey": "tukey",
    "bisquare": "tukey",
    "t": "tukey",
    "tukeybisquare": "tukey",
    "exponential": "exponential",
    "exp": "exponential",
    "e": "exponential",
}


@dataclass(frozen=True)
class Redescender:
    """Redescending transform ``psi(u, c) = u * w(u, c) * 1{|u| <= c}``.

    ``kind`` is one of ``simple`` (``w = 1``), ``hampel`` (three-part, inner
    thresholds ``a = a_ratio c`` and ``b = b_ratio c``), ``tukey``
    (``w = (1 - (u/c)**2)**2``) or ``exponential`` (``w = exp(-|u|/c)``).
    """

    kind: str = "simple"
    a_ratio: float = 0.25
    b_ratio: float = 0.5

    def __post_init__(self):
        kind = _REDESCENDER_ALIASES.get(str(self.kind).strip().lower())
        if kind is None:
            raise InvalidConfigError(f"unknown redescender {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "hampel" and not 0 < self.a_ratio < self.b_ratio < 1:
            raise InvalidConfigError(
                f"hampel needs 0 < a_ratio < b_ratio < 1, got {self.a_ratio}, {self.b_ratio}"
            )

    @classmethod
    def parse(cls, text) -> "Redescender":
        return text if isinstance(text, cls) else cls(str(text))

    def __str__(self):
        return self.kind

    def weight(self, u, c):
        """``w(u, c) * 1{|u| <= c}``, always in ``[0, 1]``."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        inside = au <= c
        if self.kind == "simple":
            w = np.ones_like(au)
        elif self.kind == "tukey":
            w = (1.0 - (u / c) ** 2) ** 2
        elif self.kind == "exponential":
            w = np.exp(-au / c)
        else:
            a, b = self.a_ratio * c, self.b_ratio * c
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(
                    au <= a,
                    1.0,
                    np.where(au <= b, a / au, a * (c - au) / (au * (c - b))),
                )
        return np.where(inside, w, 0.0)

    def psi(self, u, c):
        u = np.asarray(u, dtype=float)
        return u * self.weight(u, c)

    def dpsi(self, u, c):
        """``d psi / d u`` where it exists; zero outside ``|u| <= c``."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        if self.kind == "simple":
            d = np.ones_like(au)
        elif self.kind == "tukey":
            r2 = (u / c) ** 2
            d = (1.0 - r2) * (1.0 - 5.0 * r2)
        elif self.kind == "exponential":
            d = np.exp(-au / c) * (1.0 - au / c)
        else:
            a, b = self.a_ratio * c, self.b_ratio * c
            d = np.where(au <= a, 1.0, np.where(au <= b, 0.0, -a / (c - b)))
        return np.where(au <= c, d, 0.0)


def redescend_weight(u, c, r: Redescender | str = "simple"):
    """Transformed value ``psi(u, c)`` for redescender ``r``.

    >>> float(redescend_weight(1.0, 2.0, "tukey"))
    0.5625
    """
    if not np.all(np.asarray(c) > 0):
        raise InvalidInputError("threshold c must be positive")
    out = Redescender.parse(r).psi(u, c)
    return out[()] if out.ndim == 0 else out
