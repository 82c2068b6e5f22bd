"""Task objectives F(q) and their generalized quasi-gradients g(X_i; q)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import scipy.linalg

from .core import ParameterError, WeightedDataset, as_weights, second_moment
from .geometry import (
    SPAN_RTOL,
    generalized_rayleigh_sup,
    quartic_ratio_sup,
    top_eigendirection,
)

F1 = "F1"
F2 = "F2"


@dataclass
class ObjectiveEval:
    value: float
    g: np.ndarray
    direction: np.ndarray
    sub_objective: Optional[str] = None
    theta: Optional[np.ndarray] = None
    info: Any = None


def _check(data):
    if not isinstance(data, WeightedDataset):
        raise ParameterError("expected a WeightedDataset")


def eval_mean_bounded(data, q, gamma=0.01, seed=0):
    """Variance along the (approximate) top eigendirection; g_i = (v^T(X_i - mu_q))^2."""
    _check(data)
    q = as_weights(q, data.n)
    res = top_eigendirection(data, q, gamma, seed)
    z = (data.points - q @ data.points) @ res.v
    g = z * z
    return ObjectiveEval(float(q @ g), g, res.v, info=res)


def eval_mean_identity(data, q, gamma=0.01, seed=0, shift=True):
    """Same direction as the bounded-covariance task, with g shifted down by one."""
    ev = eval_mean_bounded(data, q, gamma, seed)
    if shift:
        ev.g = ev.g - 1.0
    return ev


def ols_theta(data, q):
    """Weighted least squares solution of E_q[X X^T] theta = E_q[X y]."""
    _check(data)
    if data.responses is None:
        raise ParameterError("regression needs responses")
    q = as_weights(q, data.n)
    X, y = data.points, data.responses
    M = second_moment(X, q)
    b = X.T @ (q * y)
    lam, U = np.linalg.eigh(M)
    tr = float(np.trace(M))
    if tr > 0 and lam[0] > SPAN_RTOL * tr:
        return scipy.linalg.solve(M, b, assume_a="pos")
    keep = lam > SPAN_RTOL * max(tr, 0.0)
    if not np.any(keep):
        return np.zeros(data.d)
    Uk = U[:, keep]
    return Uk @ ((Uk.T @ b) / lam[keep])


def residuals(data, theta):
    return data.responses - data.points @ theta


def eval_regression(data, q, which=F1, restarts=16, seed=0):
    """F1: hypercontractivity ratio with g_i = (v^T X_i)^4.

    F2: noise level sup_v E_q[r^2 (v^T X)^2] / E_q[(v^T X)^2] with
    g_i = r_i^2 (v^T X_i)^2, where r are the residuals of theta(q).
    """
    _check(data)
    q = as_weights(q, data.n)
    X = data.points
    if which == F1:
        res = quartic_ratio_sup(data, q, center=False, restarts=restarts, seed=seed)
        g = (X @ res.v) ** 4
        return ObjectiveEval(res.value, g, res.v, F1, info=res)
    if which == F2:
        theta = ols_theta(data, q)
        r = residuals(data, theta)
        res = generalized_rayleigh_sup(data, q, r)
        g = r * r * (X @ res.v) ** 2
        return ObjectiveEval(res.value, g, res.v, F2, theta=theta, info=res)
    raise ParameterError(f"which must be 'F1' or 'F2', got {which!r}")


def eval_joint(data, q, restarts=16, seed=0):
    """Centered hypercontractivity ratio with g_i = (v^T(X_i - mu_q))^4."""
    _check(data)
    q = as_weights(q, data.n)
    res = quartic_ratio_sup(data, q, center=True, restarts=restarts, seed=seed)
    g = ((data.points - q @ data.points) @ res.v) ** 4
    return ObjectiveEval(res.value, g, res.v, info=res)


def quasigradient_condition(g, q, p, alpha=0.0, beta=0.0):
    """Check <g, q - p> <= alpha <|g|, p> + beta.

    Returns (holds, slack) with slack = lhs - rhs, so the condition holds iff
    slack <= 0.
    """
    g = np.asarray(g, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if not (g.shape == q.shape == p.shape):
        raise ParameterError("g, q and p must have equal lengths")
    lhs = float(g @ q - g @ p)
    rhs = float(alpha * (np.abs(g) @ p) + beta)
    slack = lhs - rhs
    return slack <= 0, slack
