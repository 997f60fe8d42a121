"""Monte Carlo replication harness.

Each replication ``r`` draws its own seed stream from
``SeedSequence(seed, spawn_key=(r,))``, simulates one sample and fits every
configured estimator.  Replications share nothing, so a parallel run gives
the same report as a serial one.
"""

from __future__ import annotations

import hashlib
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .estimators import (
    PQMTTL_MODES,
    FitConfig,
    _canonical,
    default_restarts,
    fit,
    pqmttl_schedule,
)
from .exceptions import InvalidConfigError, InvalidDataError, TailGarchError
from .inference import ks_normality, mnwm_scale, qmttl_scale
from .model import ErrorDist, GarchParams, simulate_garch
from .optimize import OptimizerConfig
from .trimming import TRIM_MODES, Redescender, fractile_schedule

__all__ = [
    "EstimatorSpec",
    "EstimatorRow",
    "ExperimentResult",
    "ExperimentSpec",
    "McReport",
    "MIN_COMPLETE",
    "load_spec",
    "parse_spec",
    "run_experiment",
    "run_replication",
    "summarize",
]

#: Fewest non-missing replications for a full summary row.
MIN_COMPLETE = 30

_Z975 = float(stats.norm.ppf(0.975))

_MODE_TAGS = {"strong": "SA", "weak": "WA", "symmetric": "S"}
_PSI_TAGS = {"simple": "I", "hampel": "H", "tukey": "T", "exponential": "E"}


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator column of an experiment.

    ``option`` is the trimming mode for ``qmttl``/``pqmttl`` and the
    redescender for ``mnwm``; it is ignored elsewhere.
    """

    name: str
    option: str | None = None
    exclusive: bool = False
    method: str = "nelder-mead"

    def __post_init__(self):
        object.__setattr__(self, "name", _canonical(self.name))
        object.__setattr__(self, "method", OptimizerConfig(method=self.method).method)
        if self.option is not None:
            opt = self.option.lower()
            if self.name in ("qmttl", "pqmttl"):
                opt = {"sa": "strong", "wa": "weak", "s": "symmetric"}.get(opt, opt)
                valid = TRIM_MODES if self.name == "qmttl" else PQMTTL_MODES
                if opt not in valid:
                    raise InvalidConfigError(f"unknown trim mode {self.option!r} for {self.name}")
            elif self.name == "mnwm":
                opt = Redescender.parse(opt).kind
            object.__setattr__(self, "option", opt)

    @classmethod
    def parse(cls, token: str, exclusive: bool = False, method: str = "nelder-mead"):
        """``name`` or ``name:option``, e.g. ``qmttl:strong`` or ``mnwm:tukey``."""
        name, _, opt = token.strip().partition(":")
        return cls(name, opt or None, exclusive, method)

    @property
    def label(self) -> str:
        if self.name in ("qmttl", "pqmttl"):
            default = "strong" if self.name == "qmttl" else "weak"
            return f"{self.name.upper()}-{_MODE_TAGS[self.option or default]}"
        if self.name == "mnwm":
            return f"MNWM-{_PSI_TAGS[self.option or 'simple']}"
        return {"loglad": "Log-LAD"}.get(self.name, self.name.upper())

    def config(self, n: int, theta_init: GarchParams | None, seed: int = 0) -> FitConfig:
        kw = {"theta_init": theta_init,
              "optimizer": OptimizerConfig(method=self.method, seed=seed,
                                           restarts=default_restarts(self.name))}
        if self.name == "qmttl":
            kw["plan"] = fractile_schedule(n, mode=self.option or "strong",
                                           exclusive=self.exclusive)
        elif self.name == "mnwm":
            kw["plan"] = fractile_schedule(n, mode="symmetric", exclusive=self.exclusive)
            kw["redescender"] = Redescender(self.option or "simple")
        elif self.name == "pqmttl":
            kw["plan"] = pqmttl_schedule(n, self.option or "weak").with_convention(self.exclusive)
        return FitConfig(**kw)


@dataclass(frozen=True)
class ExperimentSpec:
    """Design of a simulation experiment.

    ``start="true"`` starts every fit at ``theta0``; ``start="warm"`` uses
    the estimator's own data-driven start.  ``with_se`` also computes
    analytic standard errors for QMTTL and MNWM fits.
    """

    n: int
    R: int
    dist: ErrorDist
    theta0: GarchParams = GarchParams(0.05, 0.05, 0.90)
    estimators: tuple = (EstimatorSpec("qmttl"),)
    hypotheses: tuple = (0.9, 0.7, 0.5)
    seed: int = 0
    start: str = "true"
    with_se: bool = False

    def __post_init__(self):
        if self.R < 1:
            raise InvalidConfigError(f"R={self.R} must be at least 1")
        if self.n < 20:
            raise InvalidConfigError(f"n={self.n} must be at least 20")
        if self.start not in ("true", "warm"):
            raise InvalidConfigError(f"start={self.start!r} must be 'true' or 'warm'")
        ests = tuple(e if isinstance(e, EstimatorSpec) else EstimatorSpec.parse(e)
                     for e in self.estimators)
        if not ests:
            raise InvalidConfigError("no estimators configured")
        object.__setattr__(self, "estimators", ests)
        hyp = tuple(float(h) for h in self.hypotheses)
        if not any(math.isclose(h, self.theta0.beta) for h in hyp):
            hyp = (self.theta0.beta,) + hyp
        object.__setattr__(self, "hypotheses", hyp)

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.estimators]

    def to_text(self) -> str:
        """Canonical ``key = value`` form; :func:`parse_spec` reads it back."""
        th = self.theta0
        ests = []
        for e in self.estimators:
            ests.append(e.name + (f":{e.option}" if e.option else ""))
        method = self.estimators[0].method
        lines = [
            f"n = {self.n}",
            f"R = {self.R}",
            f"dist = {self.dist}",
            f"theta0 = {th.omega!r}, {th.alpha!r}, {th.beta!r}",
            f"estimators = {', '.join(ests)}",
            f"hypotheses = {', '.join(repr(h) for h in self.hypotheses)}",
            f"seed = {self.seed}",
            f"start = {self.start}",
            f"exclusive = {str(self.estimators[0].exclusive).lower()}",
            f"method = {method}",
            f"with_se = {str(self.with_se).lower()}",
        ]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        """SHA-256 of :meth:`to_text`."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()


_KEYS = {"n", "r", "reps", "dist", "theta0", "estimators", "hypotheses", "seed",
         "start", "exclusive", "method", "with_se"}


def _bool(key, v):
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidConfigError(f"{key}: cannot read {v!r} as a boolean")


def parse_spec(text: str) -> ExperimentSpec:
    """Read an experiment from ``key = value`` lines; ``#`` starts a comment.

    Keys: ``n``, ``R`` (or ``reps``), ``dist``, ``theta0``, ``estimators``,
    ``hypotheses``, ``seed``, ``start``, ``exclusive``, ``method``,
    ``with_se``.  Errors name the offending key.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise InvalidConfigError(f"unknown key {key!r} on line {lineno}")
        raw["r" if key == "reps" else key] = value
    for req in ("n", "r", "dist"):
        if req not in raw:
            raise InvalidConfigError(f"missing required key {req!r}")

    def conv(key, fn):
        try:
            return fn(raw[key])
        except TailGarchError as exc:
            raise InvalidConfigError(f"{key}: {exc}") from exc
        except (ValueError, TypeError) as exc:
            raise InvalidConfigError(f"{key}: cannot parse {raw[key]!r}") from exc

    def floats(v):
        return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())

    exclusive = conv("exclusive", lambda v: _bool("exclusive", v)) if "exclusive" in raw else False
    method = raw.get("method", "nelder-mead")
    kw = {
        "n": conv("n", int),
        "R": conv("r", int),
        "dist": conv("dist", ErrorDist.parse),
    }
    if "theta0" in raw:
        kw["theta0"] = conv("theta0", lambda v: GarchParams(*floats(v)))
    if "estimators" in raw:
        kw["estimators"] = conv("estimators", lambda v: tuple(
            EstimatorSpec.parse(t, exclusive, method) for t in v.split(",") if t.strip()))
    else:
        try:
            kw["estimators"] = (EstimatorSpec("qmttl", None, exclusive, method),)
        except TailGarchError as exc:
            raise InvalidConfigError(f"method: {exc}") from exc
    if "hypotheses" in raw:
        kw["hypotheses"] = conv("hypotheses", floats)
    if "seed" in raw:
        kw["seed"] = conv("seed", int)
    if "start" in raw:
        kw["start"] = raw["start"].lower()
    if "with_se" in raw:
        kw["with_se"] = conv("with_se", lambda v: _bool("with_se", v))
    try:
        return ExperimentSpec(**kw)
    except TailGarchError as exc:
        raise InvalidConfigError(str(exc)) from exc


_BUNDLED = Path(__file__).parent / "specs"


def load_spec(path_or_name) -> ExperimentSpec:
    """Read a spec file, or a bundled spec by name (e.g. ``table1_gaussian_n800_r1000``)."""
    p = Path(path_or_name)
    if not p.exists():
        bundled = _BUNDLED / f"{path_or_name}.spec"
        if not bundled.exists():
            raise InvalidConfigError(f"no spec file or bundled spec named {path_or_name!r}")
        p = bundled
    return parse_spec(p.read_text())


def bundled_specs() -> list[str]:
    return sorted(p.stem for p in _BUNDLED.glob("*.spec"))


@dataclass
class Replication:
    """Estimates of one replication; NaN rows mark failed or non-converged fits."""

    r: int
    theta: np.ndarray
    se: np.ndarray
    converged: np.ndarray


def run_replication(spec: ExperimentSpec, r: int) -> Replication:
    """Simulate sample ``r`` and fit every estimator; deterministic in ``(spec, r)``."""
    if not 0 <= r < spec.R:
        raise InvalidConfigError(f"replication index {r} outside [0, {spec.R})")
    ss = np.random.SeedSequence(spec.seed, spawn_key=(r,))
    y = simulate_garch(spec.theta0, spec.dist, spec.n, ss)
    E = len(spec.estimators)
    theta = np.full((E, 3), np.nan)
    se = np.full((E, 3), np.nan)
    conv = np.zeros(E, dtype=bool)
    start = spec.theta0 if spec.start == "true" else None
    for j, est in enumerate(spec.estimators):
        cfg = est.config(spec.n, start, seed=r)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                res = fit(est.name, y, cfg)
            except TailGarchError:
                continue
            if not res.converged:
                continue
            conv[j] = True
            theta[j] = res.theta
            if spec.with_se and est.name in ("qmttl", "mnwm"):
                scale_fn = qmttl_scale if est.name == "qmttl" else mnwm_scale
                try:
                    se[j] = scale_fn(res, y).se
                except TailGarchError:
                    pass
    return Replication(r, theta, se, conv)


@dataclass
class EstimatorRow:
    label: str
    bias: float
    rmse: float
    ks_ratio: float
    rejection: dict
    n_used: int
    n_missing: int
    complete: bool
    coverage: float = math.nan
    note: str = ""

    def as_dict(self) -> dict:
        d = {"estimator": self.label, "bias": self.bias, "rmse": self.rmse,
             "ks_ratio": self.ks_ratio, "n_used": self.n_used,
             "n_missing": self.n_missing, "complete": self.complete,
             "coverage": self.coverage, "note": self.note}
        for h, v in self.rejection.items():
            d[f"reject_{h!r}"] = v
        return d


@dataclass
class McReport:
    rows: list
    spec: ExperimentSpec | None = None

    def row(self, label: str) -> EstimatorRow:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(label)

    def to_text(self) -> str:
        out = [f"{'estimator':<12}{'bias':>10}{'rmse':>10}{'ks':>8}  rejections"]
        for r in self.rows:
            rej = "  ".join(f"{h:g}:{v:.3f}" for h, v in r.rejection.items())
            flag = "" if r.complete else "  (incomplete)"
            out.append(f"{r.label:<12}{r.bias:>10.4f}{r.rmse:>10.4f}{r.ks_ratio:>8.2f}  {rej}{flag}")
        return "\n".join(out)


def _row(label, est, theta0, hypotheses, se=None) -> EstimatorRow:
    est = np.asarray(est, dtype=float)
    ok = np.isfinite(est)
    x = est[ok]
    missing = int(est.size - x.size)
    nan_rej = {h: math.nan for h in hypotheses}
    if x.size == 0:
        return EstimatorRow(label, math.nan, math.nan, math.nan, nan_rej, 0, missing,
                            False, note="no usable replications")
    err = x - theta0
    bias = float(err.mean())
    rmse = float(math.sqrt(np.mean(err * err)))
    sd = float(x.std())
    complete = x.size >= MIN_COMPLETE
    note = ""
    ks = math.nan
    rej = dict(nan_rej)
    if not complete:
        note = f"only {x.size} usable replications"
    elif not sd > 0:
        note = "invalid-data: zero empirical variance"
    else:
        try:
            ks = ks_normality(x)
        except InvalidDataError as exc:
            note = f"invalid-data: {exc}"
        rej = {h: float(np.mean(np.abs(x - h) / sd > _Z975)) for h in hypotheses}
    coverage = math.nan
    if se is not None:
        s = np.asarray(se, dtype=float)[ok]
        good = np.isfinite(s) & (s > 0)
        if good.any():
            coverage = float(np.mean(np.abs(x[good] - theta0) <= _Z975 * s[good]))
    return EstimatorRow(label, bias, rmse, ks, rej, int(x.size), missing, complete,
                        coverage, note)


def summarize(estimates, spec: ExperimentSpec, se=None) -> McReport:
    """Bias, RMSE, KS ratio and t-test rejection rates of the beta estimates.

    Parameters
    ----------
    estimates : array_like, shape (R, E)
        Beta estimates, one column per estimator; NaN marks missing values.
    spec : ExperimentSpec
    se : array_like, shape (R, E), optional
        Analytic standard errors; adds the coverage of the 95% interval.

    Notes
    -----
    The t-tests standardize by the cross-replication standard deviation
    (divisor ``R``) and reject at the two-sided 5% level.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[:, None]
    if est.shape[1] != len(spec.estimators):
        raise InvalidConfigError(f"{est.shape[1]} columns for {len(spec.estimators)} estimators")
    se_arr = None if se is None else np.asarray(se, dtype=float).reshape(est.shape)
    rows = []
    for j, label in enumerate(spec.labels):
        rows.append(_row(label, est[:, j], spec.theta0.beta, spec.hypotheses,
                         None if se_arr is None else se_arr[:, j]))
    return McReport(rows, spec)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    theta: np.ndarray = field(repr=False)
    se: np.ndarray = field(repr=False)
    report: McReport = None


def _threads(threads):
    if threads is None:
        env = os.environ.get("TAILGARCH_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise InvalidConfigError(f"TAILGARCH_THREADS={env!r} is not an integer") from exc
        else:
            threads = os.cpu_count() or 1
    return max(1, int(threads))


def _chunk(args):
    spec, rs = args
    return [run_replication(spec, r) for r in rs]


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> ExperimentResult:
    """Run all replications, in worker processes when ``threads > 1``.

    ``threads=None`` reads ``TAILGARCH_THREADS`` and falls back to the CPU
    count.  Results are ordered by replication index either way.
    """
    workers = min(_threads(threads), spec.R)
    if workers == 1:
        reps = [run_replication(spec, r) for r in range(spec.R)]
    else:
        chunks = [(spec, list(range(i, spec.R, workers))) for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_chunk, chunks))
        reps = sorted((x for p in parts for x in p), key=lambda x: x.r)
    theta = np.stack([x.theta for x in reps])
    se = np.stack([x.se for x in reps])
    report = summarize(theta[:, :, 2], spec, se[:, :, 2] if spec.with_se else None)
    return ExperimentResult(spec, theta, se, report)
