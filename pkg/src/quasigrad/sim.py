"""Scenario generators, adversaries, error metrics and parameter sweeps."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    MEAN_BOUNDED,
    REGRESSION,
    EstimateReport,
    NonTerminationError,
    ParameterError,
    QuasigradError,
    TaskObjective,
    WeightedDataset,
    tv_discrete,
    uniform,
    uniform_on,
    weighted_moments,
)
from .landscape import build_breakdown_example, build_hyper_counterexample
from .objectives import ols_theta
from .solvers import solve

GENERATORS = ("gaussian", "heavy_tail", "regression", "joint")
ADVERSARIES = ("none", "far_cluster", "label_flip", "heavy_direction", "breakdown_atoms", "hyper_atoms")


@dataclass
class ScenarioSpec:
    """A data generator, an adversary and their parameters.

    Generator parameters (``gen``):
      gaussian: mean (scalar or d-vector, default 0), scale (scalar or d-vector
        of standard deviations, default 1)
      heavy_tail: k (finite moments of order < k + 1, default 4); coordinates are
        Student t with k + 1 degrees of freedom rescaled to unit variance
      regression: theta (default ones / sqrt(d)), noise (default 0.1),
        covariates ("gaussian" or "heavy_tail")
      joint: mean, scale as for gaussian, profile ("gaussian" or "t"), df

    Adversary parameters (``adv``):
      far_cluster: distance, spread (default 0), direction (default random)
      label_flip: flip y to -y on the corrupted points
      heavy_direction: direction (default e_1), magnitude; points alternate
        between base + magnitude u and base - magnitude u
      far_cluster and heavy_direction use the generator mean as base
      breakdown_atoms: a
      hyper_atoms: delta, a, b
      all: fraction (defaults to epsilon, must not exceed it)
    """

    generator: str = "gaussian"
    adversary: str = "none"
    n: int = 1000
    d: int = 5
    epsilon: float = 0.1
    seed: int = 0
    gen: dict = field(default_factory=dict)
    adv: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ParameterError(f"unknown generator {self.generator!r}")
        if self.adversary not in ADVERSARIES:
            raise ParameterError(f"unknown adversary {self.adversary!r}")
        if not (0.0 <= self.epsilon < 0.5):
            raise ParameterError("epsilon must lie in [0, 1/2)")
        frac = self.adv.get("fraction", self.epsilon)
        if not (0.0 <= frac <= self.epsilon + 1e-12):
            raise ParameterError("corrupted fraction must lie in [0, epsilon]")
        if self.n < 1 or self.d < 1:
            raise ParameterError("n and d must be positive")

    @property
    def corrupted(self):
        """Number of replaced points, floor(fraction * n)."""
        if self.adversary == "none":
            return 0
        frac = self.adv.get("fraction", self.epsilon)
        return int(math.floor(frac * self.n + 1e-9))

    def to_dict(self):
        return asdict(self)


def _vec(x, d):
    x = np.asarray(x, dtype=float)
    return np.full(d, float(x)) if x.ndim == 0 else x.reshape(d)


def _unit(rng, d, direction=None):
    if direction is not None:
        u = _vec(direction, d)
    else:
        u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def _heavy(rng, n, d, k):
    df = k + 1.0
    return rng.standard_t(df, size=(n, d)) / math.sqrt(df / (df - 2.0))


def _good_part(spec, rng):
    n, d, g = spec.n, spec.d, spec.gen
    y = None
    extra = {}
    if spec.generator in ("gaussian", "joint"):
        mean = _vec(g.get("mean", 0.0), d)
        scale = _vec(g.get("scale", 1.0), d)
        if spec.generator == "joint" and g.get("profile", "gaussian") == "t":
            df = float(g.get("df", 8.0))
            Z = rng.standard_t(df, size=(n, d)) / math.sqrt(df / (df - 2.0))
        else:
            Z = rng.standard_normal((n, d))
        X = mean + Z * scale
    elif spec.generator == "heavy_tail":
        X = _heavy(rng, n, d, float(g.get("k", 4.0))) * _vec(g.get("scale", 1.0), d)
        X = X + _vec(g.get("mean", 0.0), d)
    else:
        theta = _vec(g.get("theta", 1.0 / math.sqrt(d)), d)
        noise = float(g.get("noise", 0.1))
        if g.get("covariates", "gaussian") == "heavy_tail":
            X = _heavy(rng, n, d, float(g.get("k", 4.0)))
        else:
            X = rng.standard_normal((n, d))
        y = X @ theta + noise * rng.standard_normal(n)
        extra["theta"] = theta
    return X, y, extra


def generate(spec):
    """Draw the good sample, then overwrite floor(fraction * n) seeded positions.

    The replaced positions are chosen by a seeded permutation. The returned
    dataset carries the good set; ``dataset.scenario`` records the spec, the
    corrupted count and generator extras such as the planted theta.
    """
    if spec.adversary == "breakdown_atoms":
        c = build_breakdown_example(spec.epsilon, float(spec.adv.get("a", 1.0)))
        data = c.data
        data.scenario = {"spec": spec.to_dict(), "corrupted": c.info["counts"][2], "candidate_q": c.q}
        return data
    if spec.adversary == "hyper_atoms":
        a = spec.adv
        c = build_hyper_counterexample(spec.epsilon, float(a.get("delta", 0.2)), float(a.get("a", 1.0)), float(a.get("b", 10.0)))
        data = c.data
        data.scenario = {"spec": spec.to_dict(), "corrupted": c.info["counts"][2], "candidate_q": c.q}
        return data
    rng = np.random.default_rng(spec.seed)
    X, y, extra = _good_part(spec, rng)
    n, d, m = spec.n, spec.d, spec.corrupted
    adv_rng = np.random.default_rng([spec.seed, 1])
    bad = np.sort(adv_rng.permutation(n)[:m]) if m else np.zeros(0, dtype=np.int64)
    a = spec.adv
    base = np.zeros(d) if spec.generator == "regression" else _vec(spec.gen.get("mean", 0.0), d)
    if m and spec.adversary == "far_cluster":
        u = _unit(adv_rng, d, a.get("direction"))
        dist = float(a.get("distance", 10.0))
        spread = float(a.get("spread", 0.0))
        X[bad] = base + dist * u + spread * adv_rng.standard_normal((m, d))
        if y is not None:
            y[bad] = X[bad] @ extra["theta"]
    elif m and spec.adversary == "label_flip":
        if y is None:
            raise ParameterError("label_flip needs the regression generator")
        y[bad] = -y[bad]
    elif m and spec.adversary == "heavy_direction":
        u = _unit(adv_rng, d, a.get("direction", np.eye(d)[0]))
        mag = float(a.get("magnitude", 10.0))
        signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
        X[bad] = base + np.outer(signs * mag, u)
        if y is not None:
            y[bad] = -(X[bad] @ extra["theta"])
    good = np.setdiff1d(np.arange(n), bad)
    data = WeightedDataset(X, y, good)
    data.scenario = {"spec": spec.to_dict(), "corrupted": int(m), **extra}
    return data


def error_metrics(report, data):
    """Errors of a solver report measured against the good set of ``data``."""
    if data.good_set is None:
        raise ParameterError("error metrics need a good set")
    S = data.good_set
    pS = uniform_on(S, data.n)
    q = np.asarray(report.weights, dtype=float)
    out = {"tv_to_uniform_good": tv_discrete(q, pS)}
    est = report.estimate
    if "mean" in est:
        muS, covS = weighted_moments(data, pS)
        mu = np.asarray(est["mean"], dtype=float)
        diff = mu - muS
        out["mean_error"] = float(np.linalg.norm(diff))
        lam, U = np.linalg.eigh(covS)
        tr = float(np.trace(covS))
        keep = lam > 1e-10 * max(tr, 1e-300)
        out["mahalanobis_pinv"] = bool(not np.all(keep))
        if np.any(keep):
            inv_half = (U[:, keep] / np.sqrt(lam[keep])) @ U[:, keep].T
            out["mahalanobis_error"] = float(np.linalg.norm(inv_half @ diff))
            cov = est.get("covariance")
            if cov is not None:
                M = inv_half @ np.asarray(cov, dtype=float) @ inv_half
                P = U[:, keep] @ U[:, keep].T
                out["covariance_relative_error"] = float(np.linalg.norm(P - M, 2))
    if "theta" in est and data.responses is not None:
        X, y = data.points[S], data.responses[S]
        theta_S = ols_theta(data, pS)
        th = np.asarray(est["theta"], dtype=float)
        loss_q = float(np.mean((y - X @ th) ** 2))
        loss_S = float(np.mean((y - X @ theta_S) ** 2))
        out["excess_loss"] = loss_q - loss_S
        out["theta_error"] = float(np.linalg.norm(th - theta_S))
    return out


def _partial_report(task, data, q):
    """Estimate built from the last iterate of a run that did not terminate."""
    if task == REGRESSION:
        est = {"theta": ols_theta(data, q)}
    else:
        mu, cov = weighted_moments(data, q)
        est = {"mean": mu, "covariance": cov}
    return EstimateReport(task, est, math.nan, 0, q)


def make_objective(spec, task=MEAN_BOUNDED, params=None, threshold=None):
    """Objective for a scenario cell; use with functools.partial to build a factory."""
    return TaskObjective(task, spec.epsilon, dict(params or {}), threshold)


def solve_cell(data, objective, config=None, init="uniform", mix=0.01):
    """Run the solver on one cell.

    ``init="adversarial"`` starts the low-regret solver from the scenario's
    candidate weights mixed with ``mix`` of the uniform weights, so that
    deleted coordinates can regain mass.
    """
    start = None
    if init == "adversarial":
        cand = (data.scenario or {}).get("candidate_q")
        if cand is None:
            raise ParameterError("adversarial init needs a breakdown_atoms or hyper_atoms scenario")
        start = (1.0 - mix) * np.asarray(cand) + mix * uniform(data.n)
    elif init != "uniform":
        raise ParameterError(f"unknown init {init!r}")
    return solve(data, objective, config, start)


def _run_cell(args):
    spec, objective_factory, solver, preprocess, index = args
    row = {"index": index, "epsilon": spec.epsilon, "seed": spec.seed, "generator": spec.generator,
           "adversary": spec.adversary, "n": spec.n, "d": spec.d}
    t0 = time.perf_counter()
    work = None
    try:
        data = generate(spec)
        row["n"], row["d"] = data.n, data.d
        row["corrupted"] = data.scenario["corrupted"]
        work = preprocess(data, spec) if preprocess is not None else data
        objective = objective_factory(spec)
        row["task"] = objective.task
        report, trace = solver(work, objective)
        row["algorithm"] = trace.algorithm
        row["iterations"] = report.iterations
        row["final_objective"] = report.final_objective
        row.update(error_metrics(report, work))
        row["status"] = "ok"
    except NonTerminationError as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
        recs = exc.trace.iterations if exc.trace is not None else []
        if recs and recs[-1].q is not None and work is not None:
            row["algorithm"] = exc.trace.algorithm
            row["iterations"] = recs[-1].index
            row["final_objective"] = recs[-1].objective
            row.update(error_metrics(_partial_report(row["task"], work, recs[-1].q), work))
    except QuasigradError as exc:
        row["status"] = f"{type(exc).__name__}: {exc}"
    row["seconds"] = time.perf_counter() - t0
    return row


def expand_grid(base, epsilons, seeds, **overrides):
    """Specs for every (epsilon, seed) pair; ``overrides`` may map epsilon to adversary params."""
    out = []
    for eps in epsilons:
        for s in seeds:
            spec = replace(base, epsilon=float(eps), seed=int(s))
            adv_fn = overrides.get("adv")
            if adv_fn is not None:
                spec = replace(spec, adv={**base.adv, **adv_fn(float(eps))})
            out.append(spec)
    return out


def sweep(specs, objective_factory: Callable, solver: Callable, preprocess: Optional[Callable] = None, jobs=1):
    """Run generate -> solve -> error_metrics for each spec.

    Errors are recorded per row in the ``status`` column; a run that hits its
    iteration cap still reports the metrics of its last iterate. Rows come back
    in grid order regardless of ``jobs``. With ``jobs > 1`` the callables must
    be picklable (module-level functions or functools.partial of them).
    """
    args = [(s, objective_factory, solver, preprocess, i) for i, s in enumerate(specs)]
    if not args:
        return []
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_run_cell, args))
    else:
        rows = [_run_cell(a) for a in args]
    return sorted(rows, key=lambda r: r["index"])


def aggregate(rows, metric, key="epsilon"):
    """Median of ``metric`` over successful rows, grouped by ``key``."""
    groups = {}
    for r in rows:
        if r.get("status") == "ok" and metric in r:
            groups.setdefault(r[key], []).append(r[metric])
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}
