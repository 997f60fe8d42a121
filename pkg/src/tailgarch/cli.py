"""Command-line interface: ``tailgarch fit|simulate|montecarlo|balance``.

Exit codes: 0 success, 1 usage or malformed experiment spec, 2 data error,
3 non-convergence.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import FitConfig, _canonical, default_restarts, fit, pqmttl_schedule
from .exceptions import (
    InvalidConfigError,
    InvalidDataError,
    InvalidInputError,
    NumericalRankError,
    OptimizationError,
    ParseError,
)
from .inference import mnwm_scale, qmttl_scale
from .io import (
    file_hash,
    format_float,
    load_returns,
    write_metadata,
    write_series,
    write_table,
)
from .model import ErrorDist, GarchParams, simulate_garch
from .montecarlo import load_spec, run_experiment
from .optimize import OptimizerConfig
from .trimming import Redescender, fractile_schedule, pareto_balance_k1, rate_diagnostics

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tailgarch", description="Tail-trimmed GARCH(1,1) estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit one estimator to a returns or prices file")
    f.add_argument("--data", required=True)
    f.add_argument("--column")
    f.add_argument("--mode", choices=("prices", "returns"), default="returns")
    f.add_argument("--estimator", default="qmttl")
    f.add_argument("--trim-mode", default="strong")
    f.add_argument("--lambda", dest="lam", type=float, default=0.025)
    f.add_argument("--redescender", default="simple")
    f.add_argument("--pqml-index", type=float, default=3.5)
    f.add_argument("--seed", type=int, default=0, help="optimizer restart seed")
    f.add_argument("--out", help="report path (CSV); a .meta.json sidecar is written next to it")
    f.add_argument("--human", action="store_true", help="print a readable table")

    s = sub.add_parser("simulate", help="simulate a GARCH(1,1) returns file")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--kappa", type=float, help="Pareto tail index; Gaussian errors if omitted")
    s.add_argument("--dist", help="gaussian, laplace or pareto:<kappa>")
    s.add_argument("--theta", default="0.05,0.05,0.90", help="omega,alpha,beta")
    s.add_argument("--out", required=True)

    m = sub.add_parser("montecarlo", help="run a simulation experiment from a spec file")
    m.add_argument("spec", help="spec file path or bundled spec name")
    m.add_argument("--n", type=int)
    m.add_argument("--reps", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--out", required=True, help="report path prefix")
    m.add_argument("--human", action="store_true")

    b = sub.add_parser("balance", help="Pareto fractile balance and rate diagnostics")
    b.add_argument("--kappa", type=float, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k2", type=int, help="right-tail fractile; default from --lambda")
    b.add_argument("--lambda", dest="lam", type=float, default=0.025)
    b.add_argument("--out")
    return p


def _fit_config(args, n: int) -> FitConfig:
    name = _canonical(args.estimator)
    kw = {"optimizer": OptimizerConfig(seed=args.seed, restarts=default_restarts(name)),
          "pqml_index": args.pqml_index,
          "redescender": Redescender.parse(args.redescender)}
    if name == "qmttl":
        kw["plan"] = fractile_schedule(n, lam=args.lam, mode=args.trim_mode)
    elif name == "mnwm":
        kw["plan"] = fractile_schedule(n, lam=args.lam, mode="symmetric")
    elif name == "pqmttl":
        kw["plan"] = pqmttl_schedule(n, args.trim_mode, lam=args.lam)
    return FitConfig(**kw)


def cmd_fit(args) -> int:
    try:
        name = _canonical(args.estimator)
    except InvalidConfigError as exc:
        raise _UsageError(f"--estimator: {exc}") from None
    series = load_returns(args.data, args.column, args.mode)
    y = series.values
    config = _fit_config(args, y.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = fit(name, y, config)
    se = np.full(3, math.nan)
    if res.converged and name in ("qmttl", "mnwm"):
        try:
            se = (qmttl_scale if name == "qmttl" else mnwm_scale)(res, y).se
        except NumericalRankError:
            pass

    rows = [{"field": k, "value": v} for k, v in zip(("omega", "alpha", "beta"), res.theta)]
    rows += [{"field": f"se_{k}", "value": v} for k, v in zip(("omega", "alpha", "beta"), se)]
    rows += [
        {"field": "criterion", "value": res.criterion_value},
        {"field": "converged", "value": res.converged},
        {"field": "iterations", "value": res.iterations},
        {"field": "nfev", "value": res.nfev},
        {"field": "n", "value": res.n},
    ]
    if res.trim is not None:
        rows += [{"field": k, "value": v} for k, v in res.trim.as_dict().items()]
    if args.human or not args.out:
        print(f"{res.estimator.upper()} on {series.label} (n={res.n})")
        for k, v, e in zip(("omega", "alpha", "beta"), res.theta, se):
            print(f"  {k:<6} {v:10.6f}  ({e:.6f})")
        print(f"  converged={res.converged} iterations={res.iterations}")
        if res.trim is not None:
            d = res.trim
            print(f"  trimmed: {d.trimmed_neg} left, {d.trimmed_pos} right, {d.trimmed_y} by lagged y")
    if args.out:
        out = write_table(args.out, rows, ["field", "value"])
        settings = {
            "command": "fit", "estimator": name, "data_sha256": file_hash(args.data),
            "column": args.column, "mode": args.mode, "trim_mode": args.trim_mode,
            "lambda": args.lam, "redescender": args.redescender,
            "pqml_index": args.pqml_index,
        }
        write_metadata(out, settings, args.seed)
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_simulate(args) -> int:
    if args.dist and args.kappa is not None:
        raise _UsageError("give --kappa or --dist, not both")
    dist = ErrorDist.parse(args.dist) if args.dist else (
        ErrorDist.pareto(args.kappa) if args.kappa is not None else ErrorDist.gaussian())
    try:
        theta = GarchParams(*(float(x) for x in args.theta.split(",")))
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"--theta: {exc}") from None
    y = simulate_garch(theta, dist, args.n, args.seed)
    out = write_series(args.out, y)
    write_metadata(out, {"command": "simulate", "n": args.n, "dist": str(dist),
                         "theta": [theta.omega, theta.alpha, theta.beta]}, args.seed)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    spec = load_spec(args.spec)
    over = {k: v for k, v in (("n", args.n), ("R", args.reps), ("seed", args.seed)) if v is not None}
    if over:
        spec = replace(spec, **over)
    result = run_experiment(spec)
    rep = result.report
    prefix = Path(args.out)
    summary_rows, rej_rows = [], []
    for row in rep.rows:
        summary_rows.append({"estimator": row.label, "bias": row.bias, "rmse": row.rmse,
                             "ks_ratio": row.ks_ratio, "coverage": row.coverage,
                             "n_used": row.n_used, "n_missing": row.n_missing,
                             "complete": row.complete, "note": row.note})
        for h, v in row.rejection.items():
            rej_rows.append({"estimator": row.label, "hypothesis": h,
                             "is_true": math.isclose(h, spec.theta0.beta), "rejection": v})
    t1 = write_table(prefix.with_name(prefix.name + "_summary.csv"), summary_rows)
    t2 = write_table(prefix.with_name(prefix.name + "_rejections.csv"), rej_rows,
                     ["estimator", "hypothesis", "is_true", "rejection"])
    settings = {"command": "montecarlo", "spec": spec.to_text(), "spec_hash": spec.digest()}
    for t in (t1, t2):
        write_metadata(t, settings, spec.seed)
    if args.human:
        print(rep.to_text())
    return EXIT_OK


def cmd_balance(args) -> int:
    k2 = args.k2
    if k2 is None:
        k2 = fractile_schedule(args.n, lam=args.lam, mode="symmetric").k2
    k1 = pareto_balance_k1(args.kappa, args.n, k2)
    k1_asym = pareto_balance_k1(args.kappa, args.n, k2, method="asymptotic")
    diag = rate_diagnostics(args.kappa, args.n, k2)
    rows = [{"quantity": "k2", "value": k2}, {"quantity": "k1", "value": k1},
            {"quantity": "k1_asymptotic", "value": k1_asym}]
    rows += [{"quantity": k, "value": v} for k, v in diag.items() if k not in ("kappa", "n", "k")]
    for r in rows:
        v = r["value"]
        print(f"{r['quantity']:<22} {v if isinstance(v, int) else format_float(v)}")
    if args.out:
        out = write_table(args.out, rows, ["quantity", "value"])
        write_metadata(out, {"command": "balance", "kappa": args.kappa, "n": args.n,
                             "k2": k2}, None)
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "montecarlo": cmd_montecarlo,
             "balance": cmd_balance}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidDataError, ParseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OptimizationError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (InvalidConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
