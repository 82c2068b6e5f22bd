"""Shared data types, weighted moments and discrete distances."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

WEIGHT_TOL = 1e-9

MEAN_BOUNDED = "mean_bounded"
MEAN_IDENTITY = "mean_identity"
REGRESSION = "regression"
JOINT = "joint"
TASKS = (MEAN_BOUNDED, MEAN_IDENTITY, REGRESSION, JOINT)


class QuasigradError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(QuasigradError, ValueError):
    pass


class ParameterError(QuasigradError, ValueError):
    pass


class WeightError(QuasigradError, ValueError):
    pass


class ZeroWeightError(WeightError):
    pass


class DegenerateSupportError(QuasigradError, ValueError):
    pass


class TotalCollapseError(QuasigradError, RuntimeError):
    pass


class PruningCollapseError(QuasigradError, RuntimeError):
    pass


class PreconditionError(QuasigradError, RuntimeError):
    pass


class StalledGradientError(QuasigradError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonTerminationError(QuasigradError, RuntimeError):
    """Raised when a solver hits its safeguard iteration cap.

    The partial trace is attached as ``self.trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class WeightedDataset:
    """Points X (n x d), optional responses y and an optional good index set."""

    def __init__(self, points, responses=None, good_set=None):
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"points must be a non-empty n x d matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ParameterError("points contain non-finite entries")
        y = None
        if responses is not None:
            y = np.asarray(responses, dtype=float).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise DimensionError(f"responses have length {y.shape[0]}, expected {X.shape[0]}")
            if not np.all(np.isfinite(y)):
                raise ParameterError("responses contain non-finite entries")
        S = None
        if good_set is not None:
            S = np.unique(np.asarray(good_set, dtype=np.int64).reshape(-1))
            if S.size and (S[0] < 0 or S[-1] >= X.shape[0]):
                raise DimensionError("good_set indices out of range")
        self.points = X
        self.responses = y
        self.good_set = S
        self.scenario = None

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def subset(self, idx):
        """Dataset restricted to rows ``idx``; the good set is re-indexed."""
        idx = np.asarray(idx, dtype=np.int64)
        y = None if self.responses is None else self.responses[idx]
        S = None
        if self.good_set is not None:
            S = np.flatnonzero(np.isin(idx, self.good_set))
        out = WeightedDataset(self.points[idx], y, S)
        out.scenario = self.scenario
        return out

    def shifted(self, center):
        """Same dataset with points translated by ``-center``."""
        out = WeightedDataset.__new__(WeightedDataset)
        out.points = self.points - np.asarray(center, dtype=float)
        out.responses = self.responses
        out.good_set = self.good_set
        out.scenario = self.scenario
        return out

    def check_good_set(self, epsilon):
        """Raise if the good set is smaller than ceil((1-eps) n)."""
        if self.good_set is None:
            return
        need = int(np.ceil((1.0 - epsilon) * self.n - 1e-9))
        if self.good_set.size < need:
            raise ParameterError(
                f"good set has {self.good_set.size} points, need at least {need} for epsilon={epsilon}"
            )

    def __repr__(self):
        extra = "" if self.responses is None else ", with responses"
        return f"WeightedDataset(n={self.n}, d={self.d}{extra})"


def as_weights(q, n=None, tol=WEIGHT_TOL):
    """Validate a weight vector and return it as a float array summing to one.

    A sum off by at most ``tol`` is renormalized silently, anything else is an error.
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    if n is not None and q.shape[0] != n:
        raise DimensionError(f"weight vector has length {q.shape[0]}, expected {n}")
    if not np.all(np.isfinite(q)):
        raise WeightError("weights contain non-finite entries")
    if np.any(q < 0):
        raise WeightError("weights must be nonnegative")
    s = q.sum()
    if abs(s - 1.0) > tol:
        raise WeightError(f"weights sum to {s!r}, not 1")
    if s != 1.0:
        q = q / s
    return q


def uniform(n):
    return np.full(n, 1.0 / n)


def uniform_on(S, n):
    """Uniform distribution on the index set S, as a length-n vector."""
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        raise DegenerateSupportError("empty index set")
    q = np.zeros(n)
    q[S] = 1.0 / S.size
    return q


def deletion_cap(n, epsilon):
    """Per-coordinate cap 1/((1-eps) n) of the deleted simplex."""
    return 1.0 / ((1.0 - epsilon) * n)


def in_deleted_simplex(q, epsilon, tol=0.0):
    q = np.asarray(q, dtype=float)
    return bool(
        np.all(q >= -tol)
        and abs(q.sum() - 1.0) <= max(tol, WEIGHT_TOL)
        and np.all(q <= deletion_cap(q.size, epsilon) + tol)
    )


def weighted_moments(data, q):
    """Weighted mean and covariance, computed in two passes."""
    X = data.points if isinstance(data, WeightedDataset) else np.atleast_2d(np.asarray(data, float))
    q = as_weights(q, X.shape[0])
    mu = q @ X
    Z = X - mu
    cov = (Z * q[:, None]).T @ Z
    cov = 0.5 * (cov + cov.T)
    return mu, cov


def second_moment(X, q):
    """Uncentered weighted second moment sum_i q_i X_i X_i^T."""
    M = (X * q[:, None]).T @ X
    return 0.5 * (M + M.T)


def tv_discrete(q, p):
    """Total variation sum_i max(q_i - p_i, 0)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise DimensionError(f"length mismatch {q.shape} vs {p.shape}")
    return float(np.maximum(q - p, 0.0).sum())


def tv_half_l1(q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise DimensionError(f"length mismatch {q.shape} vs {p.shape}")
    return float(0.5 * np.abs(q - p).sum())


def restrict_to_set(q, S):
    """Condition q on the index set S."""
    q = np.asarray(q, dtype=float)
    S = np.asarray(S, dtype=np.int64)
    out = np.zeros_like(q)
    mass = q[S].sum() if S.size else 0.0
    if mass <= 0:
        raise DegenerateSupportError("q puts no mass on S")
    out[S] = q[S] / mass
    return out


@dataclass
class TaskObjective:
    """Task tag, corruption fraction, task constants and optional threshold override.

    ``params`` keys by task:
      mean_bounded: sigma2
      mean_identity: tau, rho, beta, gamma, c1
      regression: kappa2, sigma2
      joint: kappa2
    """

    task: str
    epsilon: float
    params: dict = field(default_factory=dict)
    threshold: Optional[Any] = None
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ParameterError(f"unknown task {self.task!r}")
        eps = float(self.epsilon)
        if not (0.0 <= eps < 0.5):
            raise ParameterError(f"epsilon must lie in [0, 1/2), got {eps}")
        self.epsilon = eps
        self.params = {k: float(v) for k, v in self.params.items()}
        if self.task == REGRESSION:
            k2 = self.params.get("kappa2")
            if k2 is not None and k2 ** 1.5 * eps >= 1.0 / 64:
                self.warnings.append("kappa^3 * epsilon >= 1/64: regression guarantee preconditions not met")
        if self.task == JOINT:
            k2 = self.params.get("kappa2")
            if k2 is not None and k2 * eps > 0.25:
                self.warnings.append("kappa^2 * epsilon > 1/4: joint guarantee preconditions not met")

    def require(self, *names):
        missing = [k for k in names if k not in self.params]
        if missing:
            raise ParameterError(f"task {self.task} needs parameters {missing}")
        return [self.params[k] for k in names]


@dataclass
class IterationRecord:
    index: int
    objective: float
    direction: Any
    step: float
    g_max: float
    g_mean: float
    sub_objective: Optional[str] = None
    c: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    good_removed: Optional[float] = None
    bad_removed: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self, full=True):
        out = {
            "index": self.index,
            "objective": float(self.objective),
            "direction": None if self.direction is None else np.asarray(self.direction).tolist(),
            "step": float(self.step),
            "g_max": float(self.g_max),
            "g_mean": float(self.g_mean),
        }
        if self.sub_objective is not None:
            out["sub_objective"] = self.sub_objective
        if self.good_removed is not None:
            out["good_removed"] = float(self.good_removed)
            out["bad_removed"] = float(self.bad_removed)
        if self.extras:
            out["extras"] = {k: float(v) for k, v in self.extras.items()}
        if full:
            for key in ("c", "q", "g"):
                val = getattr(self, key)
                if val is not None:
                    out[key] = val.tolist()
        return out


@dataclass
class RunTrace:
    algorithm: str
    iterations: list = field(default_factory=list)
    final_objective: Optional[float] = None
    final_q: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    def objectives(self):
        return [r.objective for r in self.iterations]

    def to_dict(self, full=True):
        out = {
            "algorithm": self.algorithm,
            "iterations": [r.to_dict(full) for r in self.iterations],
            "final_objective": None if self.final_objective is None else float(self.final_objective),
            "notes": list(self.notes),
        }
        if full and self.final_q is not None:
            out["final_q"] = self.final_q.tolist()
        return out


@dataclass
class EstimateReport:
    task: str
    estimate: dict
    final_objective: float
    iterations: int
    weights: np.ndarray
    threshold: Any = None
    metrics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def mean(self):
        return self.estimate.get("mean")

    @property
    def theta(self):
        return self.estimate.get("theta")

    def to_dict(self):
        est = {k: np.asarray(v).tolist() for k, v in self.estimate.items()}
        return {
            "task": self.task,
            "estimate": est,
            "final_objective": float(self.final_objective),
            "iterations": int(self.iterations),
            "weights": np.asarray(self.weights).tolist(),
            "threshold": self.threshold,
            "metrics": dict(self.metrics),
            "config": dict(self.config),
            "warnings": list(self.warnings),
        }
