"""Command-line interface: estimate from CSV, run sweeps, check stationarity.

Exit codes: 0 success (or stationary), 1 input error, 2 non-termination,
3 not stationary.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from functools import partial

import numpy as np

from . import __version__
from .core import (
    JOINT,
    MEAN_BOUNDED,
    MEAN_IDENTITY,
    REGRESSION,
    TASKS,
    NonTerminationError,
    ParameterError,
    QuasigradError,
    StalledGradientError,
    TaskObjective,
    TotalCollapseError,
    WeightedDataset,
)
from .landscape import (
    HYPER,
    MEAN,
    build_breakdown_example,
    build_hyper_counterexample,
    hyper_ratio_1d,
    stationarity_check,
)
from .sim import ADVERSARIES, GENERATORS, ScenarioSpec, make_objective, solve_cell, sweep
from .solvers import FILTER, MWU, SolverConfig, prune_and_center, solve

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONTERMINATION = 2
EXIT_NOT_STATIONARY = 3

SEED_ENV = "QUASIGRAD_SEED"
DEFAULT_TASK = {"gaussian": MEAN_BOUNDED, "heavy_tail": MEAN_BOUNDED, "regression": REGRESSION, "joint": JOINT}


class InputError(QuasigradError, ValueError):
    """Malformed command-line input (CSV, flags, config file)."""


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- CSV ----------------------------------------------------------------------

def parse_csv(text, header=False):
    """Parse comma-separated numeric text into (matrix, header names).

    Raises InputError naming the offending line for ragged rows, non-numeric
    fields and NaN/Inf values. Blank lines are skipped.
    """
    rows, names, width = [], None, None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not f.strip() for f in row):
            continue
        if header and names is None:
            names = [f.strip() for f in row]
            width = len(names)
            continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InputError(f"line {lineno}: expected {width} fields, found {len(row)}")
        try:
            vals = [float(f) for f in row]
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"line {lineno}: NaN or infinite value")
        rows.append(vals)
    if not rows:
        raise InputError("no data rows")
    return np.asarray(rows, dtype=float), names


def format_csv(matrix, names=None):
    """Inverse of parse_csv; floats are written with shortest round-trip repr."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    if names is not None:
        w.writerow(names)
    for row in np.atleast_2d(matrix):
        w.writerow([repr(float(v)) for v in row])
    return out.getvalue()


def read_csv(path, header=False):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise InputError(f"{path} is not UTF-8 text") from None
    return parse_csv(text, header)


# -- JSON ---------------------------------------------------------------------

def to_jsonable(obj):
    """Convert numpy values to plain Python; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dump_document(doc):
    # json writes floats with their shortest round-trip repr, so parsing is lossless
    return json.dumps(to_jsonable(doc), indent=2, allow_nan=False) + "\n"


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# -- shared flag handling -----------------------------------------------------

def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path}: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(cfg, dict):
        raise InputError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _merge(args, defaults):
    """Apply config-file values, then defaults, to flags left unset."""
    cfg = _load_config(getattr(args, "config", None))
    known = vars(args)
    for key in cfg:
        if key not in known:
            raise InputError(f"unknown config key {key!r}")
    for key, val in known.items():
        if val is None and key in cfg:
            setattr(args, key, cfg[key])
    for key, val in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    if getattr(args, "seed", None) is None:
        env = os.environ.get(SEED_ENV)
        try:
            args.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return args


def _task_params(args, task):
    """Task constants from --sigma/--kappa/--tau/--rho; names the missing flag."""
    def need(flag):
        val = getattr(args, flag)
        if val is None:
            raise InputError(f"task {task} needs --{flag}")
        val = float(val)
        if not val > 0:
            raise InputError(f"--{flag} must be positive")
        return val

    if task == MEAN_BOUNDED:
        return {"sigma2": need("sigma") ** 2}
    if task == MEAN_IDENTITY:
        p = {"tau": need("tau"), "rho": float(args.rho or 0.0)}
        if args.c1 is not None:
            p["c1"] = float(args.c1)
        return p
    if task == REGRESSION:
        return {"kappa2": need("kappa") ** 2, "sigma2": need("sigma") ** 2}
    return {"kappa2": need("kappa") ** 2}


def _threshold(args, task):
    if task == REGRESSION:
        if args.xi is None and args.xi_f1 is None:
            return None
        out = {}
        if args.xi is not None:
            out["sigma_prime_sq"] = float(args.xi)
        if args.xi_f1 is not None:
            out["kappa_prime_sq"] = float(args.xi_f1)
        return out
    return None if args.xi is None else float(args.xi)


def _solver_config(args):
    return SolverConfig(
        algorithm=args.algorithm,
        max_iters=args.max_iters,
        eta_scale=float(args.eta_scale),
        seed=int(args.seed),
        gamma=float(args.gamma),
        restarts=int(args.restarts),
        sigma_form=args.sigma_form,
    )


def _add_solver_flags(p):
    p.add_argument("--task", choices=TASKS, help="estimation task")
    p.add_argument("--sigma", type=float, help="noise scale sigma (mean_bounded, regression)")
    p.add_argument("--kappa", type=float, help="hypercontractivity constant kappa (regression, joint)")
    p.add_argument("--tau", type=float, help="covariance closeness tau (mean_identity)")
    p.add_argument("--rho", type=float, help="mean resilience rho (mean_identity)")
    p.add_argument("--c1", type=float, help="constant in the identity-covariance threshold")
    p.add_argument("--algorithm", choices=(FILTER, MWU), help="filter (default) or mwu")
    p.add_argument("--xi", type=float, help="threshold override (regression: noise threshold)")
    p.add_argument("--xi-f1", type=float, help="regression hypercontractivity threshold override")
    p.add_argument("--max-iters", type=int, help="iteration cap")
    p.add_argument("--eta-scale", type=float, help="MWU step scale eta in (0, 1]")
    p.add_argument("--gamma", type=float, help="power-method precision")
    p.add_argument("--restarts", type=int, help="random restarts of the quartic ascent")
    p.add_argument("--sigma-form", choices=("statement", "proof"), help="regression noise-threshold formula")
    p.add_argument("--no-prune", dest="prune", action="store_false", default=None,
                   help="skip naive pruning before the MWU solver")
    p.add_argument("--alpha", type=float, help="naive-pruning confidence parameter (default 0.5)")
    p.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV}, then 0)")
    p.add_argument("--config", help="JSON file of flag values; explicit flags take precedence")
    p.add_argument("--output", "-o", help="output path (default stdout)")


SOLVER_DEFAULTS = {
    "task": MEAN_BOUNDED,
    "algorithm": FILTER,
    "eta_scale": 1.0,
    "gamma": 0.01,
    "restarts": 16,
    "sigma_form": "statement",
    "prune": True,
    "alpha": 0.5,
}


# -- estimate -----------------------------------------------------------------

def _prune_for_mwu(data, epsilon, args, params, task):
    """Naive pruning plus recentering for the MWU solvers (needs 0 < eps)."""
    if not (args.prune and args.algorithm == MWU and epsilon > 0 and task in (MEAN_BOUNDED, MEAN_IDENTITY)):
        return data, None
    sigma = math.sqrt(params["sigma2"]) if task == MEAN_BOUNDED else 1.0
    return prune_and_center(data, epsilon, float(args.alpha), sigma)


def _trace_summary(trace, full):
    out = {
        "iterations": len(trace.iterations) - 1 if trace.iterations else 0,
        "objective": [r.objective for r in trace.iterations],
    }
    subs = [r.sub_objective for r in trace.iterations]
    if any(s is not None for s in subs):
        out["sub_objective"] = subs
    if full:
        out["records"] = [r.to_dict(full=False) for r in trace.iterations]
        out["notes"] = list(trace.notes)
    return out


def cmd_estimate(args):
    args = _merge(args, {**SOLVER_DEFAULTS, "header": False})
    if args.epsilon is None:
        raise InputError("estimate needs --epsilon")
    task = args.task
    if task == MEAN_IDENTITY:
        args.algorithm = MWU
    if args.algorithm == MWU and task in (REGRESSION, JOINT):
        raise InputError(f"--algorithm mwu is not available for task {task}")
    t0 = time.perf_counter()
    M, names = read_csv(args.input, bool(args.header))
    if task == REGRESSION:
        if M.shape[1] < 2:
            raise InputError("regression input needs at least two columns (features, then y)")
        data = WeightedDataset(M[:, :-1], M[:, -1])
    else:
        data = WeightedDataset(M)
    params = _task_params(args, task)
    objective = TaskObjective(task, float(args.epsilon), params, _threshold(args, task))
    config = _solver_config(args)
    work, pruned = _prune_for_mwu(data, objective.epsilon, args, params, task)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "task": task,
        "epsilon": objective.epsilon,
        "algorithm": config.algorithm,
        "config": {
            "input": args.input,
            "n": data.n,
            "d": data.d,
            "params": params,
            "solver": config.to_dict(),
            "prune": None,
        },
    }
    if pruned is not None:
        doc["config"]["prune"] = {
            "alpha": float(args.alpha),
            "radius": pruned.radius,
            "kept": int(pruned.keep.size),
            "center": pruned.center,
        }
    try:
        report, trace = solve(work, objective, config)
    except (NonTerminationError, StalledGradientError) as exc:
        doc["status"] = "non_termination"
        doc["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if exc.trace is not None:
            doc["trace"] = _trace_summary(exc.trace, bool(args.trace))
        _finish_timing(doc, args, t0)
        _emit(dump_document(doc), args.output)
        print(f"quasigrad: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION
    est = dict(report.estimate)
    weights = np.asarray(report.weights)
    if pruned is not None:
        full = np.zeros(data.n)
        full[pruned.keep] = weights
        weights = full
        if "mean" in est:
            est["mean"] = np.asarray(est["mean"]) + pruned.center
    doc["config"]["threshold"] = report.threshold
    doc["status"] = "ok"
    doc["result"] = {
        "estimate": est,
        "final_objective": report.final_objective,
        "iterations": report.iterations,
        "weights": weights,
        "threshold": report.threshold,
        "warnings": report.warnings,
    }
    doc["metrics"] = report.metrics
    doc["trace"] = _trace_summary(trace, bool(args.trace))
    _finish_timing(doc, args, t0)
    _emit(dump_document(doc), args.output)
    return EXIT_OK


def _finish_timing(doc, args, t0):
    # timing is opt-in so that identical invocations give identical bytes
    if getattr(args, "timing", False):
        doc["timing"] = {"seconds": time.perf_counter() - t0}


# -- bench --------------------------------------------------------------------

def _parse_grid(text):
    if text is None:
        return None
    key, sep, vals = text.partition("=")
    if not sep or key.strip() not in ("eps", "epsilon"):
        raise InputError(f"--grid must look like 'eps=0.05,0.1,0.2', got {text!r}")
    try:
        out = [float(v) for v in vals.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--grid has a non-numeric value: {vals!r}") from None
    if not out:
        raise InputError("--grid lists no values")
    return out


def _parse_kv(items, flag):
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise InputError(f"{flag} expects key=value, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _prune_cell(data, spec, alpha, sigma):
    work, _ = prune_and_center(data, spec.epsilon, alpha, sigma)
    return work


BENCH_COLUMNS = [
    "task", "epsilon", "seed", "algorithm", "iterations", "status", "generator", "adversary", "n", "d",
    "corrupted", "final_objective", "tv_to_uniform_good", "mean_error", "mahalanobis_error",
    "mahalanobis_pinv", "covariance_relative_error", "excess_loss", "theta_error",
]


def format_table(rows, timing=False):
    cols = BENCH_COLUMNS + (["seconds"] if timing else [])
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        line = []
        for c in cols:
            v = r.get(c, "")
            if isinstance(v, float):
                v = repr(v)
            line.append(v)
        w.writerow(line)
    return out.getvalue()


def cmd_bench(args):
    args = _merge(args, {**SOLVER_DEFAULTS, "task": None, "generator": "gaussian", "adversary": "none",
                         "n": 1000, "d": 5, "epsilon": 0.1, "seeds": 1, "jobs": 1, "init": "uniform"})
    task = args.task or DEFAULT_TASK[args.generator]
    if task == MEAN_IDENTITY:
        args.algorithm = MWU
    epsilons = _parse_grid(args.grid) or [float(args.epsilon)]
    if int(args.seeds) < 1:
        raise InputError("--seeds must be at least 1")
    if int(args.jobs) < 1:
        raise InputError("--jobs must be at least 1")
    params = _task_params(args, task)
    base = ScenarioSpec(args.generator, args.adversary, int(args.n), int(args.d), epsilons[0], int(args.seed),
                        _parse_kv(args.gen, "--gen"), _parse_kv(args.adv, "--adv"))
    specs = []
    for eps in epsilons:
        for s in range(int(args.seeds)):
            specs.append(ScenarioSpec(base.generator, base.adversary, base.n, base.d, eps, base.seed + s,
                                      base.gen, base.adv))
    config = _solver_config(args)
    factory = partial(make_objective, task=task, params=params, threshold=_threshold(args, task))
    solver = partial(solve_cell, config=config, init=args.init)
    preprocess = None
    if args.prune and config.algorithm == MWU and task in (MEAN_BOUNDED, MEAN_IDENTITY) and min(epsilons) > 0:
        sigma = math.sqrt(params["sigma2"]) if task == MEAN_BOUNDED else 1.0
        preprocess = partial(_prune_cell, alpha=float(args.alpha), sigma=sigma)
    rows = sweep(specs, factory, solver, preprocess, int(args.jobs))
    for r in rows:
        r.setdefault("task", task)
        r.setdefault("algorithm", config.algorithm)
    _emit(format_table(rows, bool(args.timing)), args.output)
    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        for r, spec in zip(rows, specs):
            doc = {"schema_version": SCHEMA_VERSION, "command": "bench", "scenario": spec.to_dict(),
                   "config": {"params": params, "solver": config.to_dict(), "init": args.init}, "row": r}
            if not args.timing:
                doc["row"] = {k: v for k, v in r.items() if k != "seconds"}
            path = os.path.join(args.report_dir, f"cell_{r['index']:04d}.json")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(dump_document(doc))
    return EXIT_OK


# -- landscape ----------------------------------------------------------------

def cmd_landscape(args):
    args = _merge(args, {"tol": 1e-8, "objective": None, "header": False, "delete_from": "zero"})
    if args.epsilon is None:
        raise InputError("landscape needs --epsilon")
    eps = float(args.epsilon)
    doc = {"schema_version": SCHEMA_VERSION, "command": "landscape", "epsilon": eps}
    if args.example is not None:
        if args.input is not None:
            raise InputError("give either --example or an input CSV, not both")
        if args.a is None:
            raise InputError(f"--example {args.example} needs --a")
        if args.example == "breakdown":
            c = build_breakdown_example(eps, float(args.a))
            objective = args.objective or MEAN
            info = dict(c.info)
        else:
            if args.delta is None or args.b is None:
                raise InputError("--example hyper needs --delta and --b")
            c = build_hyper_counterexample(eps, float(args.delta), float(args.a), float(args.b), args.delete_from)
            objective = args.objective or HYPER
            info = dict(c.info)
        data, q = c.data, c.q
        doc["example"] = {"name": args.example, **info}
    else:
        if args.input is None or args.weights is None:
            raise InputError("landscape needs --example, or an input CSV with --weights")
        M, _ = read_csv(args.input, bool(args.header))
        W, _ = read_csv(args.weights, False)
        q = W.reshape(-1)
        if q.size != M.shape[0]:
            raise InputError(f"weights file has {q.size} values for {M.shape[0]} points")
        data = WeightedDataset(M)
        objective = args.objective or MEAN
    rep = stationarity_check(data, q, eps, float(args.tol), objective, int(args.seed))
    doc["objective"] = objective
    doc["report"] = rep.to_dict()
    if objective == HYPER and data.d == 1:
        doc["report"]["F1_q"] = hyper_ratio_1d(data.points, q)
    doc["config"] = {"tol": float(args.tol), "seed": int(args.seed), "n": data.n, "d": data.d}
    _emit(dump_document(doc), args.output)
    return EXIT_OK if rep.is_stationary else EXIT_NOT_STATIONARY


# -- entry point --------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="quasigrad", description="Outlier-robust estimation by sample reweighting.")
    parser.add_argument("--version", action="version", version=f"quasigrad {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("estimate", help="estimate from a CSV file")
    p.add_argument("input", help="CSV of n rows; regression: features then y")
    p.add_argument("--epsilon", type=float, help="corruption fraction in [0, 1/2)")
    p.add_argument("--header", action="store_true", default=None, help="first CSV row is a header")
    p.add_argument("--trace", action="store_true", help="include per-iteration records")
    p.add_argument("--timing", action="store_true", help="include wall-clock timing")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_estimate)

    for name in ("bench", "simulate"):
        p = sub.add_parser(name, help="simulate scenarios over an epsilon grid and emit a CSV table")
        p.add_argument("--generator", choices=GENERATORS)
        p.add_argument("--adversary", choices=ADVERSARIES)
        p.add_argument("--n", type=int)
        p.add_argument("--d", type=int)
        p.add_argument("--epsilon", type=float, help="single epsilon when --grid is absent")
        p.add_argument("--grid", help="epsilon grid, e.g. 'eps=0.05,0.1,0.2'")
        p.add_argument("--seeds", type=int, help="number of seeds per cell, counting up from --seed")
        p.add_argument("--gen", action="append", metavar="KEY=VALUE", help="generator parameter")
        p.add_argument("--adv", action="append", metavar="KEY=VALUE", help="adversary parameter")
        p.add_argument("--init", choices=("uniform", "adversarial"),
                       help="MWU start: uniform, or the scenario's bad candidate weights")
        p.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
        p.add_argument("--report-dir", help="also write one JSON report per cell here")
        p.add_argument("--timing", action="store_true", help="add a seconds column")
        _add_solver_flags(p)
        p.set_defaults(func=cmd_bench)

    p = sub.add_parser("landscape", help="check first-order stationarity of given or constructed weights")
    p.add_argument("input", nargs="?", help="CSV of points (with --weights)")
    p.add_argument("--weights", help="file with one weight per line")
    p.add_argument("--example", choices=("breakdown", "hyper"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--delete-from", choices=("zero", "a"), help="hyper example: atom losing the deleted mass")
    p.add_argument("--objective", choices=(MEAN, HYPER))
    p.add_argument("--tol", type=float)
    p.add_argument("--header", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_landscape)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NonTerminationError, StalledGradientError, TotalCollapseError) as exc:
        print(f"quasigrad: {exc}", file=sys.stderr)
        return EXIT_NONTERMINATION
    except QuasigradError as exc:
        print(f"quasigrad: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
