"""Naive pruning, the filter and explicit low-regret solvers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .core import (
    JOINT,
    MEAN_BOUNDED,
    MEAN_IDENTITY,
    REGRESSION,
    EstimateReport,
    IterationRecord,
    NonTerminationError,
    ParameterError,
    PruningCollapseError,
    RunTrace,
    StalledGradientError,
    TaskObjective,
    as_weights,
    in_deleted_simplex,
    tv_discrete,
    uniform,
    uniform_on,
    weighted_moments,
)
from .geometry import project_kl_deleted_simplex, renormalize
from .objectives import (
    F1,
    F2,
    eval_joint,
    eval_mean_bounded,
    eval_mean_identity,
    eval_regression,
)

FILTER = "filter"
MWU = "mwu"
STALL_TOL = 1e-14


@dataclass
class SolverConfig:
    """Solver settings.

    ``gamma`` is the power-method precision, ``restarts`` the number of random
    restarts of the quartic ascent, ``c1`` the constant in the identity-covariance
    threshold and ``sigma_form`` selects which noise threshold formula the
    regression filter uses ("statement" or "proof").
    """

    algorithm: str = FILTER
    max_iters: Optional[int] = None
    eta_scale: float = 1.0
    seed: int = 0
    record_trace: bool = True
    threshold_override: Optional[object] = None
    gamma: float = 0.01
    restarts: int = 16
    c1: float = 32.0
    sigma_form: str = "statement"

    def __post_init__(self):
        if self.algorithm not in (FILTER, MWU):
            raise ParameterError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")
        if not (0.0 < self.eta_scale <= 1.0):
            raise ParameterError("eta_scale must lie in (0, 1]")

    def to_dict(self):
        return asdict(self)


# -- thresholds ---------------------------------------------------------------

def xi_mwu_bounded(epsilon, sigma2, eta=1.0):
    """((2 eta + 7) / (3 (1 - (3 + eta) eps)))^2 sigma^2."""
    den = 1.0 - (3.0 + eta) * epsilon
    if den <= 0:
        raise ParameterError(f"low-regret threshold needs epsilon < 1/(3+eta) = {1 / (3 + eta):.6g}")
    return ((2.0 * eta + 7.0) / (3.0 * den)) ** 2 * sigma2


def xi_filter_bounded(epsilon, sigma2):
    """2 (1 - eps) / (1 - 2 eps)^2 sigma^2."""
    return 2.0 * (1.0 - epsilon) / (1.0 - 2.0 * epsilon) ** 2 * sigma2


def mean_error_bound(epsilon, sigma):
    """4 sigma sqrt(eps) / (1 - 2 eps)^{3/2}, the filter's mean error guarantee."""
    return 4.0 * sigma * math.sqrt(epsilon) / (1.0 - 2.0 * epsilon) ** 1.5


def kappa_prime_sq(epsilon, kappa2):
    """2 kappa^2 / (1 - 2 kappa^2 eps)."""
    den = 1.0 - 2.0 * kappa2 * epsilon
    if den <= 0:
        raise ParameterError("kappa'^2 undefined: need 2 kappa^2 eps < 1")
    return 2.0 * kappa2 / den


def sigma_prime_sq(epsilon, kappa2, sigma2, form="statement"):
    """Noise threshold of the regression filter.

    statement: 4 s^2 (1 + 2 k' sqrt(e(1-e))) / ((1-2e)^3 - 20 k'^3 e (1-e))
    proof:     4 s^2 (1 - 2e + 2 k' sqrt(e(1-e))) / (same denominator)
    """
    kp = math.sqrt(kappa_prime_sq(epsilon, kappa2))
    root = math.sqrt(epsilon * (1.0 - epsilon))
    den = (1.0 - 2.0 * epsilon) ** 3 - 20.0 * kp ** 3 * epsilon * (1.0 - epsilon)
    if den <= 0:
        raise ParameterError(
            "sigma'^2 undefined: (1-2e)^3 - 20 k'^3 e(1-e) <= 0; pass an explicit threshold"
        )
    if form == "statement":
        num = 1.0 + 2.0 * kp * root
    elif form == "proof":
        num = 1.0 - 2.0 * epsilon + 2.0 * kp * root
    else:
        raise ParameterError(f"unknown form {form!r}")
    return 4.0 * sigma2 * num / den


def xi_joint(kappa2):
    """kappa'^2 with kappa' = 7 kappa."""
    return 49.0 * kappa2


def xi_identity(epsilon, tau, rho=0.0, beta=0.5, gamma=0.01, c1=32.0):
    """1 + c1 (tau + eps rho^2 + eps) / (1 - 3 (1 + beta tau / (1 - gamma eps)) eps)^2."""
    den = 1.0 - 3.0 * (1.0 + beta * tau / (1.0 - gamma * epsilon)) * epsilon
    if den <= 0:
        raise ParameterError("identity-covariance threshold undefined for this epsilon")
    return 1.0 + c1 * (tau + epsilon * rho * rho + epsilon) / den ** 2


def default_threshold(objective, config):
    """Threshold xi from the theorem formulas, or the configured override."""
    over = config.threshold_override if config.threshold_override is not None else objective.threshold
    task, eps = objective.task, objective.epsilon
    if task == REGRESSION:
        kappa2, sigma2 = objective.require("kappa2", "sigma2")
        k = kappa_prime_sq(eps, kappa2)
        if over is not None:
            if isinstance(over, dict):
                k = float(over.get("kappa_prime_sq", k))
                s = over.get("sigma_prime_sq")
                s = float(s) if s is not None else sigma_prime_sq(eps, kappa2, sigma2, config.sigma_form)
            else:
                s = float(over)
        else:
            s = sigma_prime_sq(eps, kappa2, sigma2, config.sigma_form)
        return {"kappa_prime_sq": k, "sigma_prime_sq": s}
    if over is not None:
        return float(over)
    if task == MEAN_BOUNDED:
        (sigma2,) = objective.require("sigma2")
        if config.algorithm == MWU:
            return xi_mwu_bounded(eps, sigma2, config.eta_scale)
        return xi_filter_bounded(eps, sigma2)
    if task == JOINT:
        (kappa2,) = objective.require("kappa2")
        return xi_joint(kappa2)
    (tau,) = objective.require("tau")
    p = objective.params
    return xi_identity(eps, tau, p.get("rho", 0.0), p.get("beta", 0.5), config.gamma, p.get("c1", config.c1))


# -- naive pruning ------------------------------------------------------------

@dataclass
class PruneResult:
    keep: np.ndarray
    center: np.ndarray
    radius: float


def naive_prune(data, epsilon, alpha, sigma):
    """Drop points with too few neighbours within 2 sigma sqrt(d/(alpha eps)).

    A point survives when strictly more than n/2 points (itself included) lie
    within the radius. Any two survivors then share a neighbour, so survivors
    have pairwise distance at most twice the radius.
    """
    if not (0.0 < epsilon < 1.0 and 0.0 < alpha < 1.0):
        raise ParameterError("epsilon and alpha must lie in (0, 1)")
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    X = data.points
    n, d = X.shape
    radius = 2.0 * sigma * math.sqrt(d / (alpha * epsilon))
    tree = cKDTree(X)
    counts = np.asarray(tree.query_ball_point(X, radius * (1 + 1e-12), return_length=True))
    keep = np.flatnonzero(counts > n / 2.0)
    if keep.size == 0:
        raise PruningCollapseError("no point survived pruning; sigma is probably too small")
    center = X[keep].mean(axis=0)
    return PruneResult(keep, center, radius)


def prune_and_center(data, epsilon, alpha, sigma):
    """Apply naive pruning and translate the survivors to their mean."""
    res = naive_prune(data, epsilon, alpha, sigma)
    return data.subset(res.keep).shifted(res.center), res


# -- helpers ------------------------------------------------------------------

def _ledger(c, n, good_mask):
    removed = 1.0 / n - c
    return float(removed[good_mask].sum()), float(removed[~good_mask].sum())


def _good_mask(data):
    if data.good_set is None:
        return None
    m = np.zeros(data.n, dtype=bool)
    m[data.good_set] = True
    return m


def _mean_estimate(data, q):
    mu, cov = weighted_moments(data, q)
    return {"mean": mu, "covariance": cov}


def _finish(data, objective, config, xi, q, value, iters, trace, estimate, warnings):
    metrics = {}
    if data.good_set is not None and data.good_set.size:
        metrics["tv_to_uniform_good"] = tv_discrete(q, uniform_on(data.good_set, data.n))
    report = EstimateReport(
        task=objective.task,
        estimate=estimate,
        final_objective=float(value),
        iterations=int(iters),
        weights=q,
        threshold=xi,
        metrics=metrics,
        config=config.to_dict(),
        warnings=list(objective.warnings) + list(warnings),
    )
    trace.final_objective = float(value)
    trace.final_q = q.copy()
    return report, trace


def _record(trace, config, k, ev, step, c=None, q=None, ledger=None, extras=None, g_max=None):
    if not config.record_trace:
        return
    rec = IterationRecord(
        index=k,
        objective=float(ev.value),
        direction=np.asarray(ev.direction, dtype=float).copy(),
        step=float(step),
        g_max=float(np.max(ev.g)) if g_max is None else float(g_max),
        g_mean=float(np.mean(ev.g)),
        sub_objective=ev.sub_objective,
        c=None if c is None else c.copy(),
        q=None if q is None else q.copy(),
        g=np.asarray(ev.g, dtype=float).copy(),
        extras=dict(extras or {}),
    )
    if ledger is not None:
        rec.good_removed, rec.bad_removed = ledger
    trace.iterations.append(rec)


def _quartic_eval(fn, q, threshold, config, strict):
    """Evaluate a quartic objective; when it looks feasible, re-check with 4x restarts."""
    ev = fn(q, config.restarts, config.seed)
    below = ev.value < threshold if strict else ev.value <= threshold
    if below:
        ev2 = fn(q, 4 * config.restarts, config.seed + 1)
        if ev2.value > ev.value:
            ev = ev2
    return ev


# -- filter -------------------------------------------------------------------

def _filter_loop(data, epsilon, evaluate, stop, cap, config, algorithm, warnings):
    n = data.n
    good = _good_mask(data)
    c = np.full(n, 1.0 / n)
    q = uniform(n)
    trace = RunTrace(algorithm)
    for k in range(cap + 1):
        ev = evaluate(q)
        ledger = _ledger(c, n, good) if good is not None else None
        # the max runs over points still carrying weight, so each step zeroes a new one
        gmax = float(np.max(ev.g[c > 0]))
        # the terminal record carries the step that would have been taken
        step = 1.0 / gmax if gmax > STALL_TOL else 1.0
        _record(trace, config, k, ev, step, c, q, ledger, g_max=gmax)
        if stop(ev):
            return q, ev, k, trace
        if gmax <= STALL_TOL:
            raise StalledGradientError(
                f"largest quasi-gradient {gmax:.3g} is numerically zero while the objective "
                f"{ev.value:.6g} is above threshold",
                trace,
            )
        if k == cap:
            break
        c = c * (1.0 - ev.g / gmax)
        c[(ev.g >= gmax) | (c <= 0)] = 0.0
        np.maximum(c, 0.0, out=c)
        q = renormalize(c)
    raise NonTerminationError(f"filter did not terminate within {cap} iterations", trace)


def _filter_cap(config, epsilon, n):
    if config.max_iters is not None:
        return int(config.max_iters)
    return 2 * int(math.ceil(epsilon * n - 1e-9)) + 10


def filter_solve(data, objective, config=None):
    """Filter algorithm for the bounded-covariance mean and joint tasks.

    Keeps unnormalized weights c (starting at 1/n), multiplies them by
    (1 - g_i / g_max) while F(q) exceeds the threshold and renormalizes.
    """
    config = config or SolverConfig()
    eps = objective.epsilon
    data.check_good_set(eps)
    xi = default_threshold(objective, config)
    if objective.task == MEAN_BOUNDED:
        def evaluate(q):
            return eval_mean_bounded(data, q, config.gamma, config.seed)

        def stop(ev):
            return ev.value <= xi
    elif objective.task == JOINT:
        def fn(q, restarts, seed):
            return eval_joint(data, q, restarts, seed)

        def evaluate(q):
            return _quartic_eval(fn, q, xi, config, strict=False)

        def stop(ev):
            return ev.value <= xi
    else:
        raise ParameterError(f"filter_solve handles mean_bounded and joint, not {objective.task}")
    if eps == 0.0:
        return _zero_eps(data, objective, config, xi, evaluate, FILTER, stop)
    cap = _filter_cap(config, eps, data.n)
    q, ev, k, trace = _filter_loop(data, eps, evaluate, stop, cap, config, FILTER, [])
    return _finish(data, objective, config, xi, q, ev.value, k, trace, _mean_estimate(data, q), [])


def regression_solve(data, objective, config=None):
    """Sequential filter for regression: fix hypercontractivity first, then noise."""
    config = config or SolverConfig()
    if data.responses is None:
        raise ParameterError("regression needs responses")
    if objective.task != REGRESSION:
        raise ParameterError("regression_solve needs a regression objective")
    eps = objective.epsilon
    data.check_good_set(eps)
    th = default_threshold(objective, config)
    k1, s2 = th["kappa_prime_sq"], th["sigma_prime_sq"]
    kappa2 = objective.params["kappa2"]
    warnings = []

    def f1(q, restarts, seed):
        return eval_regression(data, q, F1, restarts, seed)

    def evaluate(q):
        ev1 = _quartic_eval(f1, q, k1, config, strict=True)
        if ev1.value >= k1:
            return ev1
        ev2 = eval_regression(data, q, F2)
        ev2.info = {"F1": ev1.value}
        if ev2.value >= s2 and ev1.value > 4.0 * kappa2:
            msg = f"F2 step with F1(q) = {ev1.value:.4g} above 4 kappa^2"
            if msg not in warnings:
                warnings.append(msg)
        return ev2

    def stop(ev):
        return ev.sub_objective == F2 and ev.value < s2

    if eps == 0.0:
        last = {}

        def est0(ev, q):
            last["ev"] = ev
            return {"theta": ev.theta}

        report, trace = _zero_eps(data, objective, config, th, evaluate, FILTER, stop, est0)
        ev = last["ev"]
    else:
        cap = _filter_cap(config, eps, data.n)
        q, ev, k, trace = _filter_loop(data, eps, evaluate, stop, cap, config, FILTER, warnings)
        est = {"theta": ev.theta}
        report, trace = _finish(data, objective, config, th, q, ev.value, k, trace, est, warnings)
    report.metrics["F1"] = float(ev.info["F1"])
    report.metrics["F2"] = float(ev.value)
    return report, trace


# -- explicit low-regret ------------------------------------------------------

def _mwu_loop(data, epsilon, evaluate, xi, eta, bound, cap, config, algorithm, init=None):
    n = data.n
    good = _good_mask(data)
    step = eta / (2.0 * bound)
    q = uniform(n) if init is None else _check_init(init, n, epsilon)
    trace = RunTrace(algorithm)
    for k in range(cap + 1):
        ev = evaluate(q)
        extras = {}
        if good is not None and config.record_trace:
            gs = ev.g[good]
            extras = {
                "E_q_g": float(q @ ev.g),
                "E_pS_g": float(gs.mean()),
                "E_pS_abs_g": float(np.abs(gs).mean()),
            }
        if ev.value <= xi:
            _record(trace, config, k, ev, step, q=q, extras=extras)
            return q, ev, k, trace
        _record(trace, config, k, ev, step, q=q, extras=extras)
        if k == cap:
            break
        q = project_kl_deleted_simplex(q * (1.0 - step * ev.g), epsilon)
    raise NonTerminationError(f"low-regret solver did not terminate within {cap} iterations", trace)


def _check_init(init, n, epsilon):
    q = as_weights(init, n)
    if not in_deleted_simplex(q, epsilon, tol=1e-12):
        raise ParameterError("initial weights must lie in the deleted simplex")
    return q


def _radius_bound(data, base):
    """B = 4 max(R^2, max_i |X_i|^2) where base = 4 R^2 is the theorem's value."""
    r2 = float(np.max(np.sum(data.points ** 2, axis=1)))
    return max(base, 4.0 * r2)


def mwu_solve(data, objective, config=None, init=None):
    """Explicit low-regret algorithm for the bounded-covariance mean task.

    Multiplicative update q_i (1 - eta/(2B) g_i) followed by KL projection onto
    the deleted simplex, stopping once F(q) <= xi. ``init`` replaces the uniform
    starting weights; coordinates started at zero stay at zero.
    """
    config = config or SolverConfig(algorithm=MWU)
    if objective.task == MEAN_IDENTITY:
        return identity_solve(data, objective, config, init)
    if objective.task != MEAN_BOUNDED:
        raise ParameterError("mwu_solve handles the mean tasks")
    if config.algorithm != MWU:
        config = SolverConfig(**{**config.to_dict(), "algorithm": MWU})
    eps = objective.epsilon
    data.check_good_set(eps)
    (sigma2,) = objective.require("sigma2")
    xi = default_threshold(objective, config)
    eta = config.eta_scale

    def evaluate(q):
        return eval_mean_bounded(data, q, config.gamma, config.seed)

    warnings = []
    if eps == 0.0:
        return _zero_eps(data, objective, config, xi, evaluate)
    base = sigma2 * data.d / eps
    bound = _radius_bound(data, base)
    if bound > base:
        warnings.append(f"points exceed the radius sigma sqrt(d/eps)/2; step bound B raised from {base:.6g} to {bound:.6g}")
    theory = math.ceil(data.d / (eta * sigma2) * bound / base)
    cap = int(config.max_iters) if config.max_iters is not None else 10 * max(theory, 1)
    q, ev, k, trace = _mwu_loop(data, eps, evaluate, xi, eta, bound, cap, config, MWU, init)
    trace.notes.append(f"B={bound!r} eta={eta!r}")
    return _finish(data, objective, config, xi, q, ev.value, k, trace, _mean_estimate(data, q), warnings)


def _zero_eps(data, objective, config, xi, evaluate, algorithm=MWU, stop=None, estimate=None):
    # the deleted simplex with eps = 0 is the single point {uniform}
    q = uniform(data.n)
    ev = evaluate(q)
    trace = RunTrace(algorithm)
    _record(trace, config, 0, ev, 1.0, np.full(data.n, 1.0 / data.n), q)
    ok = stop(ev) if stop is not None else ev.value <= xi
    if ok:
        est = estimate(ev, q) if estimate is not None else _mean_estimate(data, q)
        return _finish(data, objective, config, xi, q, ev.value, 0, trace, est, [])
    raise NonTerminationError("epsilon = 0 leaves only the uniform weights, which fail the threshold", trace)


def identity_solve(data, objective, config=None, init=None):
    """Explicit low-regret algorithm for near-identity covariance.

    Uses g_i = (v^T(X_i - mu_q))^2 - 1 and step
    beta tau / (1 + tau/2) * eps / (8 d), i.e. eta / (2B) with B = 4 d / eps.
    """
    config = config or SolverConfig(algorithm=MWU)
    if objective.task != MEAN_IDENTITY:
        raise ParameterError("identity_solve needs a mean_identity objective")
    if config.algorithm != MWU:
        config = SolverConfig(**{**config.to_dict(), "algorithm": MWU})
    eps = objective.epsilon
    data.check_good_set(eps)
    (tau,) = objective.require("tau")
    beta = objective.params.get("beta", 0.5)
    xi = default_threshold(objective, config)

    def evaluate(q):
        return eval_mean_identity(data, q, config.gamma, config.seed)

    if eps == 0.0:
        return _zero_eps(data, objective, config, xi, evaluate)
    warnings = []
    base = 4.0 * data.d / eps
    bound = _radius_bound(data, base)
    if bound > base:
        warnings.append(f"points exceed the radius sqrt(d/eps); step bound B raised from {base:.6g} to {bound:.6g}")
    eta = beta * tau / (1.0 + tau / 2.0)
    theory = 64.0 * data.d / tau ** 2 * bound / base
    cap = int(config.max_iters) if config.max_iters is not None else int(math.ceil(theory))
    q, ev, k, trace = _mwu_loop(data, eps, evaluate, xi, eta, bound, cap, config, MWU, init)
    trace.notes.append(f"B={bound!r} eta={eta!r}")
    return _finish(data, objective, config, xi, q, ev.value, k, trace, _mean_estimate(data, q), warnings)


def solve(data, objective, config=None, init=None):
    """Dispatch to the solver matching the task and algorithm.

    ``init`` (starting weights) is honoured by the low-regret solvers only.
    """
    config = config or SolverConfig()
    if objective.task == REGRESSION:
        return regression_solve(data, objective, config)
    if objective.task == MEAN_IDENTITY:
        return identity_solve(data, objective, config, init)
    if config.algorithm == MWU:
        return mwu_solve(data, objective, config, init)
    return filter_solve(data, objective, config)


# -- monitors -----------------------------------------------------------------

def invariance_monitor(trace, good_set, tol=1e-12):
    """Check the filter's two invariants at every recorded iteration.

    removal_ok: mass removed from good points <= mass removed from bad points.
    good_share_ok: sum_{i in S} q_i g_i <= (1/2) sum_i q_i g_i, evaluated at every
    iteration that took a step (None at the terminal record).
    """
    out = []
    recs = trace.iterations
    if not recs:
        return out
    for j, rec in enumerate(recs):
        if rec.c is None or rec.q is None or rec.g is None:
            raise ParameterError("trace lacks the c, q and g vectors needed by the monitor")
        n = rec.c.size
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(good_set, dtype=np.int64)] = True
        removed = 1.0 / n - rec.c
        good_rm = float(removed[mask].sum())
        bad_rm = float(removed[~mask].sum())
        removal_ok = good_rm <= bad_rm + tol
        good_share_ok = None
        good_qg = total_qg = None
        if j < len(recs) - 1:
            qg = rec.q * rec.g
            good_qg = float(qg[mask].sum())
            total_qg = float(qg.sum())
            good_share_ok = good_qg <= 0.5 * total_qg + tol * max(1.0, abs(total_qg))
        out.append(
            {
                "index": rec.index,
                "removal_ok": bool(removal_ok),
                "good_share_ok": good_share_ok,
                "good_removed": good_rm,
                "bad_removed": bad_rm,
                "good_qg": good_qg,
                "total_qg": total_qg,
            }
        )
    return out


def regret_check(trace, eta, bound, epsilon):
    """Average regret against p_S versus the low-regret bound.

    Returns (lhs, rhs) with lhs = mean over steps of E_q[g] - E_{p_S}[g] and
    rhs = (eta/T) sum E_{p_S}|g| + 2 B eps / (T eta).
    """
    steps = trace.iterations[:-1]
    T = len(steps)
    if T == 0:
        return 0.0, 0.0
    lhs = sum(r.extras["E_q_g"] - r.extras["E_pS_g"] for r in steps) / T
    rhs = eta / T * sum(r.extras["E_pS_abs_g"] for r in steps) + 2.0 * bound * epsilon / (T * eta)
    return lhs, rhs
