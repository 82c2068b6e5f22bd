"""Independent reference implementations used by the tests."""

import numpy as np
from scipy.optimize import brentq


def kl(q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    m = q > 0
    return float(np.sum(q[m] * np.log(q[m] / p[m])))


def kl_projection_root(p, eps):
    """KL projection via the KKT form q = min(cap, lam * p), lam found by root search."""
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    n = p.size
    cap = 1.0 / ((1.0 - eps) * n)

    def excess(lam):
        return np.minimum(cap, lam * p).sum() - 1.0

    hi = cap / p.min()
    if excess(hi) < 0:  # only when (1 - eps) n < 1 is impossible; kept for safety
        raise ValueError("infeasible")
    lam = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    q = np.minimum(cap, lam * p)
    return q / q.sum()


def kl_projection_cvxpy(p, eps):
    import cvxpy as cp

    p = np.asarray(p, dtype=float)
    n = p.size
    cap = 1.0 / ((1.0 - eps) * n)
    q = cp.Variable(n)
    prob = cp.Problem(cp.Minimize(cp.sum(cp.kl_div(q, p))), [cp.sum(q) == 1, q >= 0, q <= cap])
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(q.value)


def random_feasible(rng, n, eps, k=4):
    """A random point of the deleted simplex as a mixture of random vertices."""
    cap = 1.0 / ((1.0 - eps) * n)
    full = int(np.floor(1.0 / cap + 1e-12))
    verts = []
    for _ in range(k):
        v = np.zeros(n)
        perm = rng.permutation(n)
        v[perm[:full]] = cap
        if full < n:
            v[perm[full]] = 1.0 - full * cap
        verts.append(v)
    w = rng.dirichlet(np.ones(k))
    return np.asarray(verts).T @ w


def all_subsets_mean_gap(x, q, eps):
    """max over E with q(E) >= 1 - eps of |mu_q - mu_{q|E}| (1-d, brute force)."""
    import itertools

    n = len(x)
    mu = float(q @ x)
    best = 0.0
    for r in range(1, n + 1):
        for E in itertools.combinations(range(n), r):
            E = list(E)
            m = q[E].sum()
            if m >= 1 - eps - 1e-12 and m > 0:
                best = max(best, abs(mu - float(q[E] @ x[E]) / m))
    return best


def kl_projection_kkt(p, eps):
    """KL projection by enumerating the KKT candidates.

    Every optimum caps the m largest coordinates at 1/((1-eps) n) and scales
    the rest by a common factor; all m are tried and the feasible candidate
    with the smallest divergence is returned.
    """
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    n = p.size
    cap = 1.0 / ((1.0 - eps) * n)
    order = np.argsort(-p, kind="stable")
    best = None
    for m in range(n):
        top, rest = order[:m], order[m:]
        mass = p[rest].sum()
        if mass <= 0:
            continue
        lam = (1.0 - m * cap) / mass
        if lam <= 0 or np.any(lam * p[rest] > cap * (1 + 1e-12)):
            continue
        if m and lam * p[top].min() < cap * (1 - 1e-12):
            continue
        q = np.empty(n)
        q[top] = cap
        q[rest] = lam * p[rest]
        val = kl(q, p)
        if best is None or val < best[0]:
            best = (val, q)
    return best[1]
