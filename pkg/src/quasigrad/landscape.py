"""Stationarity checks, approximation-ratio certificates and counterexample builders."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import (
    DegenerateSupportError,
    ParameterError,
    WeightedDataset,
    as_weights,
    deletion_cap,
    uniform_on,
    weighted_moments,
)
from .geometry import canonical_sign, quartic_ratio_sup

MEAN = "mean"
HYPER = "F1"


@dataclass
class StationarityReport:
    is_stationary: bool
    witness_v: np.ndarray
    worst_violation: float
    alpha_beta: tuple
    tolerance: float
    g: np.ndarray = field(repr=False, default=None)
    multiplicity: int = 1
    objective: str = MEAN
    value: Optional[float] = None

    def to_dict(self):
        return {
            "is_stationary": bool(self.is_stationary),
            "witness_v": np.asarray(self.witness_v).tolist(),
            "worst_violation": float(self.worst_violation),
            "alpha_beta": [float(self.alpha_beta[0]), float(self.alpha_beta[1])],
            "tolerance": float(self.tolerance),
            "multiplicity": int(self.multiplicity),
            "objective": self.objective,
            "value": None if self.value is None else float(self.value),
        }


def min_over_deleted_simplex(g, epsilon):
    """Minimize <g, p> over the deleted simplex by filling the smallest g first.

    Returns (value, p).
    """
    g = np.asarray(g, dtype=float)
    n = g.size
    cap = deletion_cap(n, epsilon)
    order = np.argsort(g, kind="stable")
    p = np.zeros(n)
    left = 1.0
    for i in order:
        take = min(cap, left)
        p[i] = take
        left -= take
        if left <= 0:
            break
    return float(g @ p), p


def deleted_simplex_vertices(n, epsilon):
    """All vertices of the deleted simplex (small n only)."""
    cap = deletion_cap(n, epsilon)
    k = int(math.floor(1.0 / cap + 1e-9))
    rem = 1.0 - k * cap
    out = []
    for full in itertools.combinations(range(n), k):
        if rem <= 1e-12:
            p = np.zeros(n)
            p[list(full)] = cap
            out.append(p)
            continue
        others = [j for j in range(n) if j not in full]
        for j in others:
            p = np.zeros(n)
            p[list(full)] = cap
            p[j] = rem
            out.append(p)
    return out


def _check_membership(q, epsilon):
    cap = deletion_cap(q.size, epsilon)
    if np.any(q > cap * (1 + 1e-9)):
        raise ParameterError("q is not in the deleted simplex (a weight exceeds 1/((1-eps) n))")


def _mean_gradient(Z, v):
    return (Z @ v) ** 2


def _hyper_gradient(X, q, v):
    """Per-point derivative of E_q[(v^T X)^4] / E_q[(v^T X)^2]^2 with v held fixed."""
    t2 = (X @ v) ** 2
    m2 = float(q @ t2)
    m4 = float(q @ (t2 * t2))
    return t2 * t2 / m2 ** 2 - 2.0 * t2 * m4 / m2 ** 3, m4 / m2 ** 2


def stationarity_check(data, q, epsilon, tol=1e-8, objective=MEAN, seed=0, directions=32):
    """First-order stationarity of q over the deleted simplex.

    For the mean objective g_i = (v^T(X_i - mu_q))^2 with v a top eigenvector of
    Sigma_q; q is stationary when max_p <g, q - p> over the deleted simplex is at
    most tol * trace(Sigma_q). When the top eigenvalue is repeated, any direction
    of the top eigenspace passing the test suffices; the eigenbasis and
    ``directions`` random unit vectors in the eigenspace are tried.

    ``objective="F1"`` checks the uncentered hypercontractivity ratio instead,
    with g the derivative of the ratio at the maximizing direction and tol
    scaled by the ratio itself.
    """
    X = data.points
    q = as_weights(q, data.n)
    _check_membership(q, epsilon)
    if objective == HYPER:
        res = quartic_ratio_sup(data, q, center=False, seed=seed)
        g, value = _hyper_gradient(X, q, res.v)
        tol_abs = tol * max(abs(value), 1.0)
        lo, _ = min_over_deleted_simplex(g, epsilon)
        viol = float(g @ q - lo)
        return StationarityReport(
            viol <= tol_abs, res.v, viol, (0.0, max(viol, 0.0)), tol_abs, g, 1, HYPER, value
        )
    if objective != MEAN:
        raise ParameterError(f"unknown objective {objective!r}")
    mu, cov = weighted_moments(data, q)
    Z = X - mu
    lam, U = np.linalg.eigh(cov)
    top = lam[-1]
    tr = float(np.trace(cov))
    tol_abs = tol * tr if tr > 0 else tol
    mult = int(np.sum(lam >= top - 1e-8 * max(abs(top), 1e-300)))
    if mult <= 1 or tr == 0:
        cands = [U[:, -1]]
    else:
        E = U[:, -mult:]
        rng = np.random.default_rng(seed)
        coef = rng.standard_normal((directions, mult))
        cands = [E[:, j] for j in range(mult)] + [E @ (c / np.linalg.norm(c)) for c in coef]
    best = None
    for v in cands:
        v = canonical_sign(v / np.linalg.norm(v))
        g = _mean_gradient(Z, v)
        lo, _ = min_over_deleted_simplex(g, epsilon)
        viol = float(g @ q - lo)
        if best is None or viol < best[1]:
            best = (v, viol, g)
    v, viol, g = best
    return StationarityReport(
        viol <= tol_abs, v, viol, (0.0, max(viol, 0.0)), tol_abs, g, mult, MEAN, float(top)
    )


def brute_force_violation(g, q, epsilon):
    """max over vertices p of <g, q - p> by explicit enumeration (small n)."""
    g = np.asarray(g, dtype=float)
    q = np.asarray(q, dtype=float)
    return max(float(g @ (q - p)) for p in deleted_simplex_vertices(g.size, epsilon))


# -- counterexamples ------------------------------------------------------------

def _as_fraction(x):
    return Fraction(x).limit_denominator(10 ** 9)


def _common_n(masses):
    n = 1
    for m in masses:
        n = n * m.denominator // math.gcd(n, m.denominator)
    return n


@dataclass
class Construction:
    data: WeightedDataset
    q: np.ndarray
    info: dict


def build_breakdown_example(epsilon, a, n=None):
    """Atoms -1 (mass eps), 0 (mass 1 - 2 eps) and a (mass eps).

    The good set is the atoms at -1 and 0; the candidate q deletes the atom at -1.
    n defaults to the smallest count making every mass a multiple of 1/n.
    """
    if not (0.0 < epsilon < 0.5) or not a > 0:
        raise ParameterError("need 0 < eps < 1/2 and a > 0")
    e = _as_fraction(epsilon)
    if n is None:
        n = e.denominator
    k = e * n
    if k.denominator != 1:
        raise ParameterError(f"eps * n = {float(k)} is not an integer for n = {n}")
    k = int(k)
    mid = n - 2 * k
    pts = np.concatenate([np.full(k, -1.0), np.zeros(mid), np.full(k, float(a))])
    good = np.arange(k + mid)
    q = np.zeros(n)
    q[k:] = 1.0 / (n - k)
    data = WeightedDataset(pts, good_set=good)
    info = {"n": n, "counts": [k, mid, k], "threshold_a": (1 - epsilon) / (1 - 3 * epsilon) if epsilon < 1 / 3 else math.inf}
    return Construction(data, q, info)


def hyper_ratio_1d(points, q):
    x2 = points.reshape(-1) ** 2
    return float((q @ (x2 * x2)) / (q @ x2) ** 2)


def build_hyper_counterexample(epsilon, delta, a, b, delete_from="zero"):
    """Three atoms 0, a, b whose delete-eps candidate is F1-stationary with large F1.

    ``delete_from="zero"`` (default): gamma = delta a^2 / b^2 on the atom at b and
    eps of mass is removed from the atom at 0. Then m4/m2 = (a^2 + b^2)/2 under q,
    every kept non-zero point has a negative derivative and the removed points a
    zero one, so q is a KKT point. F1(q) = (1 - eps)(a^2 + b^2) / (4 delta a^2).

    ``delete_from="a"``: gamma = (delta - eps) a^2 / b^2 with eps removed from the
    atom at a, the literal recipe; it is kept for comparison and is not
    stationary.
    """
    if not (0.0 < epsilon < delta < 1.0) or not (0.0 < a < b):
        raise ParameterError("need 0 < eps < delta < 1 and 0 < a < b")
    if delete_from == "zero":
        gamma = delta * a * a / (b * b)
    elif delete_from == "a":
        gamma = (delta - epsilon) * a * a / (b * b)
    else:
        raise ParameterError("delete_from must be 'zero' or 'a'")
    if 1.0 - delta - gamma <= 0:
        raise ParameterError("infeasible: 1 - delta - gamma <= 0")
    if gamma > epsilon:
        raise ParameterError("infeasible: the bad atom outweighs epsilon")
    if delete_from == "zero" and 1.0 - delta - gamma < epsilon:
        raise ParameterError("infeasible: the atom at 0 is lighter than epsilon")
    e, dl, gm = _as_fraction(epsilon), _as_fraction(delta), _as_fraction(gamma)
    z = 1 - dl - gm
    n = _common_n([e, dl, gm, z])
    cz, ca, cb, ce = int(z * n), int(dl * n), int(gm * n), int(e * n)
    pts = np.concatenate([np.zeros(cz), np.full(ca, float(a)), np.full(cb, float(b))])
    good = np.arange(cz + ca)
    q = np.full(n, 1.0)
    if delete_from == "zero":
        q[:ce] = 0.0
    else:
        q[cz:cz + ce] = 0.0
    q /= q.sum()
    data = WeightedDataset(pts, good_set=good)
    f1_q = hyper_ratio_1d(pts, q)
    f1_good = hyper_ratio_1d(pts, uniform_on(good, n))
    info = {
        "n": n,
        "gamma": float(gm),
        "counts": [cz, ca, cb],
        "delete_from": delete_from,
        "F1_q": f1_q,
        "F1_good": f1_good,
        "F1_good_bound": float((1 - gm) / dl),
        "F1_q_formula": (1 - epsilon) * (a * a + b * b) / (4 * float(gm) * b * b),
    }
    return Construction(data, q, info)


# -- certificates -------------------------------------------------------------

@dataclass
class Certificate:
    ratio: Optional[float]
    sigma_q: float
    sigma_good: float
    alpha: float
    beta: float
    landscape_bound: float
    approx_bound: float
    stationarity: StationarityReport = field(repr=False, default=None)

    def holds(self):
        return self.sigma_q <= self.approx_bound * (1 + 1e-9)


def approx_ratio_certificate(data, q, epsilon, c1=12.0, c2=12.0, tol=1e-8):
    """Spectral-norm ratio of q against the good set, with the stationarity slack.

    ``landscape_bound`` is ((1-eps)/(1-3eps))^2 and ``approx_bound`` the
    approximate-stationarity bound (1 + c1 (alpha+eps)/D) |Sigma_S| + c2 beta / D
    with D = (1 - (3+alpha) eps)^2, for the artifact constants c1, c2.
    """
    if data.good_set is None:
        raise ParameterError("certificate needs a good set")
    q = as_weights(q, data.n)
    sq = float(np.linalg.eigvalsh(weighted_moments(data, q)[1])[-1])
    sg = float(np.linalg.eigvalsh(weighted_moments(data, uniform_on(data.good_set, data.n))[1])[-1])
    rep = None
    alpha, beta = 0.0, math.nan
    try:
        rep = stationarity_check(data, q, epsilon, tol)
        alpha, beta = rep.alpha_beta
    except ParameterError:
        pass
    ratio = sq / sg if sg > 0 else None
    land = ((1 - epsilon) / (1 - 3 * epsilon)) ** 2 if epsilon < 1 / 3 else math.inf
    den = (1 - (3 + alpha) * epsilon) ** 2
    approx = (1 + c1 * (alpha + epsilon) / den) * sg + c2 * beta / den if epsilon < 1 / 3 else math.inf
    return Certificate(ratio, sq, sg, alpha, beta, land, approx, rep)


def beta_from_gradient_norm(grad_norm, epsilon, n):
    """Additive slack implied by a gradient-norm bound: sqrt(2 eps / ((1-eps)^2 n)) * |grad|."""
    return math.sqrt(2.0 * epsilon / ((1.0 - epsilon) ** 2 * n)) * grad_norm
