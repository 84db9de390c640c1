"""Command-line front end.

Verbs: simulate, fit, cv, experiment, finfty, hawkes-support.
Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .dantzig import cross_validate_lambda, default_lambda_grid, fit_to_dict
from .diagnostics import estimate_f_infinity
from .errors import (DegenerateVarianceError, DomainError, NuisanceError,
                     RankError, StationarityError)
from .scores import build_regression_score, lagged_design
from .simulate import (bin_counts, read_series_csv, simulate_hawkes, simulate_inar,
                       simulate_minar1, simulate_ou, spec_from_dict, write_series_csv,
                       InarSpec, Minar1Spec, OuSpec, HawkesSpec, SeriesSample)
from .twostep import estimate_diffusion_sigma2, two_step_fit, two_step_to_dict

CONFIG_ERROR = 2
NUMERIC_ERROR = 3


def _load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_out(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_simulate(args) -> int:
    spec = spec_from_dict(_load_json(args.config))
    if isinstance(spec, InarSpec):
        sample = simulate_inar(spec, args.n, args.seed)
    elif isinstance(spec, Minar1Spec):
        sample = simulate_minar1(spec, args.n, args.seed)
    elif isinstance(spec, OuSpec):
        sample = simulate_ou(spec, args.seed)
    elif isinstance(spec, HawkesSpec):
        events = simulate_hawkes(spec, args.seed)
        if args.bin_delta:
            sample = bin_counts(events, args.bin_delta, spec.horizon)
        else:
            _write_out("\n".join(repr(t) for t in events) + "\n", args.out)
            return 0
    else:
        raise ValueError("unsupported spec type")
    write_series_csv(sample, args.out)
    return 0


def _cmd_fit(args) -> int:
    if args.model == "diffusion":
        path = read_series_csv(args.series, kind="reals", delta=args.delta)
        design = path.values[:-1, :]
        dx = np.diff(path.values[:, 0])
        nuis = estimate_diffusion_sigma2(path)
        fit = two_step_fit(design, dx, args.lam, args.tau, model_tag="diffusion",
                           delta=path.delta, nuisance=nuis)
    else:
        series = read_series_csv(args.series, kind="counts")
        design, response = lagged_design(series, args.order)
        fit = two_step_fit(design, response, args.lam, args.tau,
                           centered=not args.raw)
    out = two_step_to_dict(fit)
    out["first_step"] = fit_to_dict(fit.first_step)
    out["theta_first"] = fit.theta_first.tolist()
    _write_out(json.dumps(out, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _cmd_cv(args) -> int:
    series = read_series_csv(args.series, kind="counts")
    design, response = lagged_design(series, args.order)
    if args.grid:
        lo, hi, num = args.grid.split(",")
        grid = np.geomspace(float(lo), float(hi), int(num))
    else:
        zc = design[:, 1:] - design[:, 1:].mean(axis=0)
        grid = default_lambda_grid(zc.T @ (response - response.mean()) / response.size)
    report = cross_validate_lambda(design, response, grid, folds=args.folds)
    out = {"grid": report.grid.tolist(), "cv_loss": report.cv_loss.tolist(),
           "chosen_lambda": report.chosen_lambda, "folds": report.folds}
    _write_out(json.dumps(out, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _cmd_experiment(args) -> int:
    if args.config:
        config = harness.CaseConfig.from_dict(_load_json(args.config))
    else:
        config = harness.builtin_case(args.case, n=args.n, reps=args.reps,
                                      base_seed=args.seed, tau=args.tau,
                                      lambda_value=args.lam,
                                      lambda_mode="fixed" if args.lam is not None else None)
    if args.reps:
        config.reps = args.reps
    if args.seed is not None:
        config.base_seed = args.seed
    report = harness.run_case(config, jobs=args.jobs)
    _write_out(harness.report_to_json(report), args.out)
    if args.hist:
        stats = [r["proj_stat"] for r in report.per_rep if not r["failed"]]
        harness.emit_histogram(stats, args.bins, args.hist)
    if args.per_rep:
        harness.write_per_rep_csv(report, args.per_rep)
    return 0


def _cmd_finfty(args) -> int:
    series = read_series_csv(args.series, kind="counts")
    design, _ = lagged_design(series, args.order)
    zc = design[:, 1:] - design[:, 1:].mean(axis=0)
    gram = zc.T @ zc / zc.shape[0]
    support = [int(s) for s in args.support.split(",")]
    est = estimate_f_infinity(gram, support, args.samples, args.seed,
                              method=args.method)
    out = {"value": est.value, "method": est.method,
           "samples": est.samples, "support": list(est.support)}
    _write_out(json.dumps(out, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _cmd_hawkes_support(args) -> int:
    if args.config:
        config = harness.CaseConfig.from_dict(_load_json(args.config))
    else:
        config = harness.builtin_case("hawkes", n=args.n, reps=args.reps,
                                      base_seed=args.seed, tau=args.tau)
    if args.reps:
        config.reps = args.reps
    if args.seed is not None:
        config.base_seed = args.seed
    report = harness.run_hawkes_support(config, jobs=args.jobs)
    _write_out(harness.report_to_json(report), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparseproc",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a model spec to a series CSV")
    p_sim.add_argument("--config", required=True, help="model spec JSON")
    p_sim.add_argument("--n", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--bin-delta", type=float, default=None,
                       help="bin width for Hawkes event output")
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=_cmd_simulate)

    p_fit = sub.add_parser("fit", help="two-step fit of a series CSV")
    p_fit.add_argument("--series", required=True)
    p_fit.add_argument("--model", choices=["inar", "diffusion"], default="inar")
    p_fit.add_argument("--order", type=int, default=10)
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True)
    p_fit.add_argument("--tau", type=float, default=0.05)
    p_fit.add_argument("--delta", type=float, default=None)
    p_fit.add_argument("--raw", action="store_true", help="skip mean-centering")
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(func=_cmd_fit)

    p_cv = sub.add_parser("cv", help="cross-validate the constraint level")
    p_cv.add_argument("--series", required=True)
    p_cv.add_argument("--order", type=int, default=10)
    p_cv.add_argument("--grid", default=None, help="lo,hi,num (log-spaced)")
    p_cv.add_argument("--folds", type=int, default=5)
    p_cv.add_argument("--out", default=None)
    p_cv.set_defaults(func=_cmd_cv)

    p_exp = sub.add_parser("experiment", help="run a Monte Carlo case")
    p_exp.add_argument("--case", default="case1",
                       choices=["case1", "case2", "case3", "case4", "ou"])
    p_exp.add_argument("--config", default=None, help="CaseConfig JSON overrides --case")
    p_exp.add_argument("--reps", type=int, default=None)
    p_exp.add_argument("--n", type=int, default=None)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--lambda", dest="lam", type=float, default=None)
    p_exp.add_argument("--tau", type=float, default=0.05)
    p_exp.add_argument("--jobs", type=int, default=1)
    p_exp.add_argument("--out", default=None)
    p_exp.add_argument("--hist", default=None, help="histogram CSV of projected statistics")
    p_exp.add_argument("--bins", type=int, default=30)
    p_exp.add_argument("--per-rep", default=None, help="per-replication CSV")
    p_exp.set_defaults(func=_cmd_experiment)

    p_f = sub.add_parser("finfty", help="cone compatibility factor of a series design")
    p_f.add_argument("--series", required=True)
    p_f.add_argument("--order", type=int, default=10)
    p_f.add_argument("--support", required=True, help="comma-separated indices")
    p_f.add_argument("--samples", type=int, default=20000)
    p_f.add_argument("--seed", type=int, default=0)
    p_f.add_argument("--method", choices=["cone_sampling", "grid_oracle"],
                     default="cone_sampling")
    p_f.add_argument("--out", default=None)
    p_f.set_defaults(func=_cmd_finfty)

    p_h = sub.add_parser("hawkes-support", help="binned Hawkes support recovery")
    p_h.add_argument("--config", default=None)
    p_h.add_argument("--reps", type=int, default=None)
    p_h.add_argument("--n", type=int, default=None, help="horizon in time units")
    p_h.add_argument("--seed", type=int, default=None)
    p_h.add_argument("--tau", type=float, default=0.05)
    p_h.add_argument("--jobs", type=int, default=1)
    p_h.add_argument("--out", default=None)
    p_h.set_defaults(func=_cmd_hawkes_support)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RankError, NuisanceError, DegenerateVarianceError, DomainError,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR
    except (StationarityError, ValueError, KeyError, TypeError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
