"""Projections onto weight sets and direction-finding subroutines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateSupportError,
    ParameterError,
    TotalCollapseError,
    WeightedDataset,
    ZeroWeightError,
    as_weights,
    deletion_cap,
    second_moment,
)

DEGENERATE_TOL = 1e-14
SPAN_RTOL = 1e-10


@dataclass
class DirectionResult:
    v: np.ndarray
    value: float
    certified_fraction: float
    degenerate: bool = False


def _points(data):
    if isinstance(data, WeightedDataset):
        return data.points
    return np.atleast_2d(np.asarray(data, dtype=float))


def canonical_sign(v, tol=1e-12):
    """Flip v so that its first nonzero coordinate is positive."""
    nz = np.flatnonzero(np.abs(v) > tol)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def project_kl_deleted_simplex(p, epsilon):
    """KL projection of p onto {q : sum q = 1, 0 <= q_i <= 1/((1-eps) n)}.

    The minimizer has the form q_i = min(cap, lam * p_i). Sort p in decreasing
    order, cap the top m entries and rescale the rest; the answer uses the
    smallest m for which no rescaled entry exceeds the cap.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if not (0.0 <= epsilon < 0.5):
        raise ParameterError(f"epsilon must lie in [0, 1/2), got {epsilon}")
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise ZeroWeightError("KL projection needs strictly positive finite weights")
    n = p.size
    cap = deletion_cap(n, epsilon)
    p = p / p.sum()
    order = np.argsort(-p, kind="stable")
    ps = p[order]
    # rest[m] = total mass of entries m..n-1 in sorted order
    rest = np.concatenate([np.cumsum(ps[::-1])[::-1], [0.0]])
    m = np.arange(n + 1)
    free = 1.0 - m * cap
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(rest > 0, free / rest, np.inf)
    head = np.concatenate([ps, [0.0]])
    with np.errstate(invalid="ignore"):
        ok = (free >= -1e-12) & (head * scale <= cap * (1 + 1e-12))
    ok[n] = abs(free[n]) <= 1e-9
    cand = np.flatnonzero(ok)
    if cand.size == 0:
        raise ParameterError("deleted simplex is empty for these parameters")
    k = int(cand[0])
    qs = np.empty(n)
    qs[:k] = cap
    if k < n:
        qs[k:] = ps[k:] * scale[k]
    q = np.empty(n)
    q[order] = qs
    return np.minimum(q, cap)


def renormalize(c):
    """Divide a nonnegative vector by its total."""
    c = np.asarray(c, dtype=float)
    s = c.sum()
    if not s > 0:
        raise TotalCollapseError("all weights have been removed")
    return c / s


def top_eigendirection(data, q, gamma=0.01, seed=0):
    """Approximate top eigenvector of the weighted covariance by power iteration.

    The returned direction attains at least (1 - gamma) of the spectral norm
    with high probability; ``value`` is the variance along it.
    """
    if not (0.0 < gamma <= 0.5):
        raise ParameterError("gamma must lie in (0, 1/2]")
    X = _points(data)
    q = as_weights(q, X.shape[0])
    d = X.shape[1]
    mu = q @ X
    Z = X - mu
    cov = (Z * q[:, None]).T @ Z
    cov = 0.5 * (cov + cov.T)
    e1 = np.zeros(d)
    e1[0] = 1.0
    if np.trace(cov) < DEGENERATE_TOL:
        return DirectionResult(e1, 0.0, 1.0, True)
    if d == 1:
        return DirectionResult(e1, float(cov[0, 0]), 1.0, False)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    iters = int(np.ceil(4.0 * np.log(4.0 * d / gamma) / gamma))
    val = float(v @ cov @ v)
    for _ in range(iters):
        w = cov @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        w /= nw
        new = float(w @ cov @ w)
        v = w
        if abs(new - val) <= 1e-15 * max(new, 1e-300):
            val = new
            break
        val = new
    if val < DEGENERATE_TOL:
        return DirectionResult(e1, 0.0, 1.0, True)
    v = canonical_sign(v)
    val = float(np.sum(q * (Z @ v) ** 2))
    return DirectionResult(v, val, 1.0 - gamma, False)


def _whitener(M):
    """Columns W with W^T M W = I on the numerical span of M."""
    lam, U = np.linalg.eigh(M)
    tr = float(np.trace(M))
    if tr <= 0:
        raise DegenerateSupportError("second moment is zero")
    keep = lam > SPAN_RTOL * tr
    return U[:, keep] / np.sqrt(lam[keep])


def _support_is_degenerate(Z, q):
    pts = Z[q > 0]
    if pts.shape[0] < 2:
        return True
    return bool(np.all(np.ptp(pts, axis=0) == 0))


def quartic_ratio(Z, q, V):
    """E_q[(v^T Z)^4] / E_q[(v^T Z)^2]^2 for each column v of V."""
    P = Z @ V
    P2 = P * P
    m2 = q @ P2
    m4 = q @ (P2 * P2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(m2 > 0, m4 / (m2 * m2), 0.0)


def _centered(X, q, center):
    return X - q @ X if center else X


def quartic_ratio_sup(data, q, center=False, restarts=16, seed=0, tol=1e-10, max_iter=5000):
    """Approximate sup over unit v of E_q[(v^T Z)^4] / E_q[(v^T Z)^2]^2.

    Z is X (or X - mu_q if ``center``). The data are whitened by the second
    moment on its span, which turns the ratio into E[(u^T Y)^4] on the unit
    sphere; that function is convex, so the normalized-gradient step
    u <- grad/|grad| never decreases it. The search starts from a moment-based
    warm start plus ``restarts`` seeded random points and keeps the best.
    """
    X = _points(data)
    q = as_weights(q, X.shape[0])
    Z = _centered(X, q, center)
    if _support_is_degenerate(Z, q):
        raise DegenerateSupportError("fewer than two distinct weighted points")
    W = _whitener(second_moment(Z, q))
    Y = Z @ W
    r = Y.shape[1]
    if r <= 12:
        # fourth-moment matrix M[(i,j),(k,l)] = E_q[Y_i Y_j Y_k Y_l]; each step is then O(r^4)
        P = (Y[:, :, None] * Y[:, None, :]).reshape(-1, r * r)
        M = (P * q[:, None]).T @ P

        def f(u):
            uu = np.outer(u, u).ravel()
            return float(uu @ M @ uu)

        def grad(u):
            return (M @ np.outer(u, u).ravel()).reshape(r, r) @ u

        K = (M @ np.eye(r).ravel()).reshape(r, r)
    else:
        qY = q[:, None] * Y

        def f(u):
            return float(q @ (Y @ u) ** 4)

        def grad(u):
            return qY.T @ ((Y @ u) ** 3)

        K = (qY * np.sum(Y * Y, axis=1)[:, None]).T @ Y

    if r == 1:
        ends = [np.ones(1)]
    else:
        # warm start: top eigenvector of E[|Y|^2 Y Y^T]
        starts = [np.linalg.eigh(0.5 * (K + K.T))[1][:, -1]]
        rng = np.random.default_rng(seed)
        starts.extend(rng.standard_normal((max(int(restarts), 0), r)))
        ends = []
        for u in starts:
            u = u / np.linalg.norm(u)
            val = f(u)
            for _ in range(max_iter):
                gr = grad(u)
                ng = np.linalg.norm(gr)
                if ng == 0:
                    break
                u_new = gr / ng
                new = f(u_new)
                if new <= val * (1 + tol):
                    if new > val:
                        u = u_new
                    break
                u, val = u_new, new
            ends.append(u)
    # rank the end points by the ratio on the data itself; first index wins ties
    V = W @ np.asarray(ends).T
    V /= np.linalg.norm(V, axis=0)
    # one column at a time, so a value never depends on how many restarts ran
    vals = np.array([quartic_ratio(Z, q, V[:, [k]])[0] for k in range(V.shape[1])])
    j = int(np.argmax(vals))
    v = canonical_sign(V[:, j])
    value = float(vals[j])
    # the ascent is a heuristic in r > 1 dimensions and certifies nothing
    return DirectionResult(v, value, 1.0 if r == 1 else 0.0, False)


def generalized_rayleigh_sup(data, q, r):
    """Exact sup over v of E_q[r^2 (v^T X)^2] / E_q[(v^T X)^2].

    Whitens by B = E_q[X X^T] on its span and takes the top eigenvector of the
    whitened A = E_q[r^2 X X^T].
    """
    X = _points(data)
    q = as_weights(q, X.shape[0])
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.shape[0] != X.shape[0]:
        raise ParameterError("r must have one entry per point")
    if not np.all(np.isfinite(r)):
        raise ParameterError("r must be finite")
    W = _whitener(second_moment(X, q))
    A = ((X * (q * r * r)[:, None]).T @ X)
    At = W.T @ A @ W
    lam, U = np.linalg.eigh(0.5 * (At + At.T))
    v = W @ U[:, -1]
    v = canonical_sign(v / np.linalg.norm(v))
    return DirectionResult(v, float(max(lam[-1], 0.0)), 1.0, False)


def rayleigh_ratio(X, q, r, V):
    P2 = (X @ V) ** 2
    num = (q * r * r) @ P2
    den = q @ P2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / den, 0.0)


def _sphere_dirs_2(theta):
    return np.stack([np.cos(theta), np.sin(theta)])


def _sphere_dirs_3(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def grid_sup(fn, d, resolution=1e-3, final_resolution=1e-7, keep=8, chunk=4096):
    """Deterministic grid search for sup of fn over unit directions, d <= 3.

    ``fn`` maps a d x m matrix of directions to m values. A global grid with
    angular step ``resolution`` (d = 2) or 10 * resolution (d = 3) is followed
    by nested local grids around the ``keep`` best cells, shrinking the step
    until it is below ``final_resolution``. Returns (value, v).
    """
    if d == 1:
        v = np.ones((1, 1))
        return float(fn(v)[0]), v[:, 0]
    if d not in (2, 3):
        raise ParameterError("grid oracle supports d <= 3 only")

    def evaluate(params):
        vals = []
        for s in range(0, params.shape[1], chunk):
            blk = params[:, s:s + chunk]
            V = _sphere_dirs_2(blk[0]) if d == 2 else _sphere_dirs_3(blk[0], blk[1])
            vals.append(fn(V))
        return np.concatenate(vals)

    if d == 2:
        h = [resolution]
        params = np.arange(0.0, np.pi, resolution)[None, :]
    else:
        step = 10 * resolution
        h = [step, step]
        th = np.arange(0.0, np.pi / 2 + step, step)
        ph = np.arange(0.0, 2 * np.pi, step)
        T, P = np.meshgrid(th, ph, indexing="ij")
        params = np.stack([T.ravel(), P.ravel()])
    vals = evaluate(params)
    h = np.array(h)
    top = np.argsort(-vals, kind="stable")[:keep]
    centers = params[:, top]
    best = (vals[top[0]], params[:, top[0]])
    offs = np.linspace(-1.0, 1.0, 9)
    while h.max() > final_resolution:
        cand = []
        for j in range(centers.shape[1]):
            if d == 2:
                cand.append(centers[0, j] + offs * h[0])
            else:
                A, B = np.meshgrid(offs * h[0], offs * h[1], indexing="ij")
                cand.append(np.stack([centers[0, j] + A.ravel(), centers[1, j] + B.ravel()]))
        params = np.concatenate(cand)[None, :] if d == 2 else np.concatenate(cand, axis=1)
        vals = evaluate(params)
        top = np.argsort(-vals, kind="stable")[:keep]
        centers = params[:, top]
        if vals[top[0]] > best[0]:
            best = (vals[top[0]], params[:, top[0]])
        h = h / 4.0
    prm = best[1]
    v = _sphere_dirs_2(prm[0]) if d == 2 else _sphere_dirs_3(prm[0], prm[1])
    return float(best[0]), canonical_sign(np.asarray(v, dtype=float))


def quartic_ratio_grid(data, q, center=False, resolution=1e-3):
    """Grid oracle for the quartic ratio sup (d <= 3)."""
    X = _points(data)
    q = as_weights(q, X.shape[0])
    Z = _centered(X, q, center)
    return grid_sup(lambda V: quartic_ratio(Z, q, V), X.shape[1], resolution)


def rayleigh_grid(data, q, r, resolution=1e-3):
    """Grid oracle for the generalized Rayleigh quotient sup (d <= 3)."""
    X = _points(data)
    q = as_weights(q, X.shape[0])
    r = np.asarray(r, dtype=float)
    return grid_sup(lambda V: rayleigh_ratio(X, q, r, V), X.shape[1], resolution)
