import numpy as np
import pytest

import lemma_checks as lc

TOL = 1e-9
TRIALS = 500


def _worst(fn, seed, trials=TRIALS, **kw):
    rng = np.random.default_rng(seed)
    return min(fn(rng, **kw) for _ in range(trials))


def test_mean_modulus():
    assert _worst(lc.mean_modulus_slack, 1) >= -TOL


def test_deletion_tv():
    assert _worst(lc.deletion_tv_slack, 2) >= -TOL


def test_deletion_tv_vertices_attain_bound():
    # two disjoint-as-possible vertices of the same deleted simplex
    n, eps = 10, 0.2
    cap = 1 / ((1 - eps) * n)
    q1 = np.zeros(n)
    q2 = np.zeros(n)
    q1[:8], q1[8] = cap, 1 - 8 * cap
    q2[2:], q2[0] = cap, 0.0
    q2 /= q2.sum()
    from quasigrad import tv_discrete

    assert tv_discrete(q1, q2) <= eps / (1 - eps) + TOL
    assert tv_discrete(q1, q2) == pytest.approx(eps / (1 - eps), rel=1e-12)


def test_resilience():
    assert _worst(lc.resilience_slack, 3) >= -TOL


@pytest.mark.parametrize("eps", [0.01, 0.1, 0.25, 0.4])
@pytest.mark.parametrize("a", [1.0, 7.5, 1e3])
def test_resilience_equality(eps, a):
    gap, bound = lc.resilience_equality(eps, a)
    assert gap == pytest.approx(bound, rel=1e-12)


def test_second_moment_modulus():
    assert _worst(lc.second_moment_modulus_slack, 4) >= -TOL


def test_hypercontractive_modulus():
    assert _worst(lc.hyper_modulus_slack, 5) >= -TOL


def test_deletion_hypercontractive():
    assert _worst(lc.deletion_hyper_slack, 6) >= -TOL


def test_deletion_hypercontractive_equality():
    # two atoms 0 and 1 with mass delta on 1; deleting eps from the atom at 1 attains the bound
    m, delta, eps = 100, 0.2, 0.05
    t = np.r_[np.zeros(80), np.ones(20)]
    c = np.full(m, 1 / m)
    c[80:85] = 0.0
    k2 = (t ** 2).mean() / t.mean() ** 2
    assert k2 == pytest.approx(1 / delta)
    assert c @ t ** 2 == pytest.approx(k2 / (1 - k2 * eps) * (c @ t) ** 2, rel=1e-12)
