import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from quasigrad.core import (
    NonTerminationError,
    ParameterError,
    PruningCollapseError,
    StalledGradientError,
    TaskObjective,
    WeightedDataset,
    deletion_cap,
    tv_discrete,
    uniform,
    uniform_on,
)
from quasigrad.objectives import F1, F2
from quasigrad.sim import ScenarioSpec, error_metrics, generate
from quasigrad.solvers import (
    MWU,
    SolverConfig,
    default_threshold,
    filter_solve,
    identity_solve,
    invariance_monitor,
    kappa_prime_sq,
    mean_error_bound,
    mwu_solve,
    naive_prune,
    prune_and_center,
    regression_solve,
    regret_check,
    sigma_prime_sq,
    solve,
    xi_filter_bounded,
    xi_identity,
    xi_joint,
    xi_mwu_bounded,
)


def mean_task(eps, sigma2=1.0, **kw):
    return TaskObjective("mean_bounded", eps, {"sigma2": sigma2}, **kw)


class TestThresholds:
    def test_mwu_bounded(self):
        assert xi_mwu_bounded(0.1, 1.0) == pytest.approx((9 / 1.8) ** 2)
        assert xi_mwu_bounded(0.1, 2.0, eta=0.5) == pytest.approx(2 * (8 / (3 * 0.65)) ** 2)
        with pytest.raises(ParameterError):
            xi_mwu_bounded(0.25, 1.0)

    def test_filter_bounded(self):
        assert xi_filter_bounded(0.1, 1.0) == pytest.approx(2.8125)
        assert mean_error_bound(0.25, 2.0) == pytest.approx(8 * 0.5 / 0.5**1.5)

    def test_regression(self):
        assert kappa_prime_sq(0.01, 3.0) == pytest.approx(6 / 0.94)
        with pytest.raises(ParameterError):
            kappa_prime_sq(0.2, 3.0)
        kp = math.sqrt(kappa_prime_sq(1e-4, 1.0))
        root = math.sqrt(1e-4 * (1 - 1e-4))
        den = (1 - 2e-4) ** 3 - 20 * kp**3 * 1e-4 * (1 - 1e-4)
        assert sigma_prime_sq(1e-4, 1.0, 1.0) == pytest.approx(4 * (1 + 2 * kp * root) / den)
        assert sigma_prime_sq(1e-4, 1.0, 1.0, "proof") == pytest.approx(4 * (1 - 2e-4 + 2 * kp * root) / den)
        with pytest.raises(ParameterError):
            sigma_prime_sq(0.01, 3.0, 1.0)
        with pytest.raises(ParameterError):
            sigma_prime_sq(1e-4, 1.0, 1.0, "other")

    def test_joint_and_identity(self):
        assert xi_joint(2.0) == 98.0
        den = 1 - 3 * (1 + 0.5 * 0.2 / (1 - 0.01 * 0.05)) * 0.05
        assert xi_identity(0.05, 0.2) == pytest.approx(1 + 32 * (0.2 + 0.05) / den**2)
        with pytest.raises(ParameterError):
            xi_identity(0.34, 0.2)

    def test_default_and_override(self):
        assert default_threshold(mean_task(0.1), SolverConfig()) == pytest.approx(2.8125)
        assert default_threshold(mean_task(0.1), SolverConfig(algorithm=MWU)) == pytest.approx(25.0)
        assert default_threshold(mean_task(0.1), SolverConfig(threshold_override=7.0)) == 7.0
        assert default_threshold(mean_task(0.1, threshold=5.0), SolverConfig()) == 5.0
        reg = TaskObjective("regression", 0.001, {"kappa2": 3.0, "sigma2": 0.01})
        th = default_threshold(reg, SolverConfig(threshold_override={"sigma_prime_sq": 0.04}))
        assert th["sigma_prime_sq"] == 0.04 and th["kappa_prime_sq"] == pytest.approx(6 / 0.994)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            SolverConfig(algorithm="sgd")
        with pytest.raises(ParameterError):
            SolverConfig(max_iters=0)
        with pytest.raises(ParameterError):
            SolverConfig(eta_scale=1.5)


class TestNaivePrune:
    def test_identical_points(self):
        res = naive_prune(WeightedDataset(np.ones((5, 2))), 0.1, 0.5, 1.0)
        assert res.keep.tolist() == list(range(5))

    def test_two_close_points(self):
        assert naive_prune(WeightedDataset([0.0, 1.0]), 0.1, 0.5, 1.0).keep.tolist() == [0, 1]

    @pytest.mark.parametrize("seed", range(3))
    def test_far_cluster_removed(self, seed):
        d, n = 5, 1000
        spec = ScenarioSpec("gaussian", "far_cluster", n, d, 0.05, seed, adv={"distance": 100 * math.sqrt(d)})
        data = generate(spec)
        res = naive_prune(data, 0.05, 0.5, 1.0)
        bad = np.setdiff1d(np.arange(n), data.good_set)
        assert not np.isin(bad, res.keep).any()
        assert np.isin(data.good_set, res.keep).mean() >= 0.98

    def test_collapse(self):
        with pytest.raises(PruningCollapseError):
            naive_prune(WeightedDataset([0.0, 100.0, 200.0]), 0.1, 0.5, 1.0)

    def test_parameters(self):
        with pytest.raises(ParameterError):
            naive_prune(WeightedDataset([0.0]), 0.0, 0.5, 1.0)
        with pytest.raises(ParameterError):
            naive_prune(WeightedDataset([0.0]), 0.1, 0.5, 0.0)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_survivor_diameter(self, seed, d):
        r = np.random.default_rng(seed)
        X = r.standard_normal((40, d)) * r.uniform(0.5, 20)
        try:
            res = naive_prune(WeightedDataset(X), 0.1, 0.5, 1.0)
        except PruningCollapseError:
            assume(False)
        S = X[res.keep]
        diam = np.max(np.linalg.norm(S[:, None] - S[None], axis=2))
        assert diam <= 2 * res.radius * (1 + 1e-9)

    def test_recentering(self, rng):
        X = rng.standard_normal((100, 2)) + 5.0
        work, res = prune_and_center(WeightedDataset(X), 0.1, 0.5, 1.0)
        assert np.allclose(work.points.mean(0), 0.0, atol=1e-12)


def _filter_trace_invariants(trace, n):
    prev = None
    for rec in trace.iterations:
        assert np.isfinite(rec.objective) and rec.step > 0
        assert np.all(rec.c >= 0) and np.all(rec.c <= 1.0 / n)
        if prev is not None:
            assert np.all(rec.c <= prev.c)
            assert np.sum(rec.c == 0) > np.sum(prev.c == 0)
        prev = rec


class TestFilter:
    def test_outlier_hand_run(self, outlier_1d):
        report, trace = filter_solve(outlier_1d, mean_task(0.1, 1e-12))
        assert report.iterations == 1
        assert report.weights[-1] == 0.0
        assert report.final_objective == 0.0
        assert np.allclose(report.mean, 0.0)
        mon = invariance_monitor(trace, outlier_1d.good_set)
        assert mon[0]["removal_ok"] and mon[0]["good_removed"] == 0.0 and mon[0]["bad_removed"] == 0.0
        assert mon[0]["good_share_ok"] and mon[0]["good_qg"] == pytest.approx(0.9) and mon[0]["total_qg"] == pytest.approx(9.0)
        assert mon[1]["good_share_ok"] is None

    def test_cli_example_value(self, outlier_1d):
        report, _ = filter_solve(outlier_1d, mean_task(0.1, 1.0))
        assert abs(report.mean[0]) <= 1e-9

    def test_clean_data(self, rng):
        data = WeightedDataset(rng.standard_normal((200, 3)) * 0.5)
        report, trace = filter_solve(data, mean_task(0.1))
        assert report.iterations == 0 and len(trace.iterations) == 1
        assert np.allclose(report.weights, uniform(200))

    @pytest.mark.parametrize("seed", range(3))
    def test_breakdown_045_two_clusters(self, seed):
        eps = 0.45
        spec = ScenarioSpec("gaussian", "far_cluster", 2000, 2, eps, seed, adv={"distance": 10.0})
        data = generate(spec)
        report, trace = filter_solve(data, mean_task(eps))
        assert report.iterations <= math.ceil(eps * data.n) + 1
        assert report.metrics["tv_to_uniform_good"] <= eps / (1 - eps) + 1e-9
        m = error_metrics(report, data)
        assert m["mean_error"] <= mean_error_bound(eps, 1.0)
        assert all(r["removal_ok"] for r in invariance_monitor(trace, data.good_set))
        _filter_trace_invariants(trace, data.n)

    @pytest.mark.parametrize("seed", range(3))
    def test_trace_invariants_random(self, seed):
        spec = ScenarioSpec("gaussian", "far_cluster", 500, 3, 0.2, seed, adv={"distance": 8.0, "spread": 1.0})
        data = generate(spec)
        report, trace = filter_solve(data, mean_task(0.2))
        _filter_trace_invariants(trace, data.n)
        assert report.metrics["tv_to_uniform_good"] <= 0.2 / 0.8 + 1e-9

    def test_stalled(self):
        data = WeightedDataset(np.ones((4, 1)))
        with pytest.raises(StalledGradientError) as info:
            filter_solve(data, mean_task(0.1), SolverConfig(threshold_override=-1.0))
        assert info.value.trace is not None

    def test_non_termination(self, rng):
        X = rng.standard_normal((100, 1)) * 10
        with pytest.raises(NonTerminationError) as info:
            filter_solve(WeightedDataset(X), mean_task(0.1), SolverConfig(max_iters=1))
        assert len(info.value.trace.iterations) == 2

    def test_rejects_other_tasks(self, rng):
        data = WeightedDataset(rng.standard_normal((10, 1)))
        with pytest.raises(ParameterError):
            filter_solve(data, TaskObjective("mean_identity", 0.1, {"tau": 0.1}))

    def test_epsilon_zero(self, rng):
        X = rng.standard_normal((50, 2))
        report, _ = filter_solve(WeightedDataset(X), mean_task(0.0))
        assert report.iterations == 0 and np.allclose(report.mean, X.mean(0))
        with pytest.raises(NonTerminationError):
            filter_solve(WeightedDataset(X * 10), mean_task(0.0))

    def test_joint(self):
        spec = ScenarioSpec("joint", "heavy_direction", 1000, 2, 0.01, 0, adv={"magnitude": 25.0, "fraction": 0.004})
        data = generate(spec)
        report, trace = filter_solve(data, TaskObjective("joint", 0.01, {"kappa2": 1.0}))
        assert report.final_objective <= 49.0
        bad = np.setdiff1d(np.arange(1000), data.good_set)
        # the filter stops once F is below threshold, so a sliver of bad mass may remain
        assert report.weights[bad].sum() <= 0.1 * bad.size / 1000


def _mwu_feasible(trace, eps):
    for rec in trace.iterations:
        q = rec.q
        assert np.all(q > 0)
        assert np.all(q <= deletion_cap(q.size, eps))
        assert abs(q.sum() - 1) <= 1e-12


class TestMWU:
    def test_outlier_example(self, outlier_1d):
        report, trace = mwu_solve(outlier_1d, mean_task(0.1))
        assert report.weights[-1] < 1 / (0.9 * 10)
        assert report.final_objective <= report.threshold

    def test_outlier_example_tight_threshold(self, outlier_1d):
        report, trace = mwu_solve(outlier_1d, mean_task(0.1, threshold=1.0), SolverConfig(algorithm=MWU))
        assert report.final_objective <= 1.0 and report.iterations > 0
        assert report.weights[-1] < 1 / (0.9 * 10)
        _mwu_feasible(trace, 0.1)

    @pytest.mark.parametrize("seed", range(3))
    def test_iteration_bound(self, seed):
        d, eps = 10, 0.1
        # outliers sit inside the radius sigma sqrt(d/eps)/2 = 5, so B is the theorem's value
        spec = ScenarioSpec("gaussian", "far_cluster", 2000, d, eps, seed, adv={"distance": 4.0})
        data = generate(spec)
        work, _ = prune_and_center(data, eps, 0.5, 1.0)
        report, trace = mwu_solve(work, mean_task(eps), SolverConfig(algorithm=MWU, seed=seed))
        assert report.iterations <= d / (1.0 * 1.0)
        _mwu_feasible(trace, eps)

    @pytest.mark.parametrize("seed", range(4))
    def test_regret_bound(self, seed):
        eps = 0.1
        spec = ScenarioSpec("gaussian", "far_cluster", 400, 2, eps, seed, adv={"distance": 6.0, "spread": 0.5})
        data = generate(spec)
        obj = mean_task(eps, threshold=1.3)
        report, trace = mwu_solve(data, obj, SolverConfig(algorithm=MWU, seed=seed))
        assert report.iterations > 3
        note = trace.notes[0]
        B = float(note.split()[0].split("=")[1])
        lhs, rhs = regret_check(trace, 1.0, B, eps)
        assert lhs <= rhs
        _mwu_feasible(trace, eps)

    def test_radius_warning(self, outlier_1d):
        report, _ = mwu_solve(outlier_1d, mean_task(0.1, 0.01), SolverConfig(algorithm=MWU))
        assert any("step bound B raised" in w for w in report.warnings)

    def test_epsilon_zero(self, rng):
        X = rng.standard_normal((30, 2))
        report, _ = mwu_solve(WeightedDataset(X), mean_task(0.0), SolverConfig(algorithm=MWU))
        assert report.iterations == 0 and np.allclose(report.weights, uniform(30))
        with pytest.raises(NonTerminationError):
            mwu_solve(WeightedDataset(X * 10), mean_task(0.0), SolverConfig(algorithm=MWU))

    def test_cap(self, outlier_1d):
        with pytest.raises(NonTerminationError) as info:
            mwu_solve(outlier_1d, mean_task(0.1, threshold=1e-6), SolverConfig(algorithm=MWU, max_iters=5))
        assert len(info.value.trace.iterations) == 6

    def test_init(self, outlier_1d):
        with pytest.raises(ParameterError):
            mwu_solve(outlier_1d, mean_task(0.1), init=np.eye(10)[0])
        report, trace = mwu_solve(outlier_1d, mean_task(0.1, threshold=1.0), init=uniform(10))
        assert report.final_objective <= 1.0

    def test_rejects_regression(self, rng):
        data = WeightedDataset(rng.standard_normal((10, 1)), rng.standard_normal(10))
        with pytest.raises(ParameterError):
            mwu_solve(data, TaskObjective("regression", 0.001, {"kappa2": 3, "sigma2": 1}))


class TestIdentity:
    def test_clean(self, rng):
        data = WeightedDataset(rng.standard_normal((500, 4)))
        report, _ = identity_solve(data, TaskObjective("mean_identity", 0.05, {"tau": 0.5}))
        assert report.iterations == 0

    def test_cluster(self):
        d, eps, tau = 10, 0.05, 0.5
        spec = ScenarioSpec("gaussian", "far_cluster", 1000, d, eps, 1, adv={"distance": 12.0})
        data = generate(spec)
        work, _ = prune_and_center(data, eps, 0.5, 1.0)
        obj = TaskObjective("mean_identity", eps, {"tau": tau, "c1": 1.0})
        report, trace = identity_solve(work, obj, SolverConfig(algorithm=MWU))
        assert 0 < report.iterations <= 64 * d / tau**2
        _mwu_feasible(trace, eps)
        assert error_metrics(report, work)["mean_error"] < 0.5


class TestRegression:
    def test_clean_planted(self):
        spec = ScenarioSpec("regression", "none", 2000, 3, 0.001, 0)
        data = generate(spec)
        obj = TaskObjective("regression", 0.001, {"kappa2": 3.0, "sigma2": 0.01})
        report, _ = regression_solve(data, obj, SolverConfig(threshold_override={"sigma_prime_sq": 0.04}))
        assert report.iterations == 0
        assert np.linalg.norm(report.theta - data.scenario["theta"]) <= 0.05

    def test_label_flip_excess_loss(self):
        eps = 0.02
        data = generate(ScenarioSpec("regression", "label_flip", 4000, 3, eps, 0))
        kappa2, sigma2, s2p = 3.0, 0.01, 0.04
        obj = TaskObjective("regression", eps, {"kappa2": kappa2, "sigma2": sigma2})
        report, _ = regression_solve(data, obj, SolverConfig(threshold_override={"sigma_prime_sq": s2p}))
        kp = math.sqrt(report.threshold["kappa_prime_sq"])
        bound = 10 * (math.sqrt(kappa2) + kp) * (math.sqrt(sigma2) + math.sqrt(s2p)) * eps
        assert error_metrics(report, data)["excess_loss"] <= bound
        assert report.metrics["F1"] < report.threshold["kappa_prime_sq"]
        assert report.metrics["F2"] < s2p

    def test_heavy_direction_removed_before_noise_steps(self):
        eps = 0.01
        spec = ScenarioSpec("regression", "heavy_direction", 2000, 3, eps, 0,
                            adv={"magnitude": 30.0, "fraction": 0.005})
        data = generate(spec)
        bad = np.setdiff1d(np.arange(data.n), data.good_set)
        obj = TaskObjective("regression", eps, {"kappa2": 3.0, "sigma2": 0.01})
        report, trace = regression_solve(data, obj, SolverConfig(threshold_override={"sigma_prime_sq": 0.04}))
        subs = [r.sub_objective for r in trace.iterations]
        assert subs[0] == F1
        first_f2 = subs.index(F2)
        assert np.all(trace.iterations[first_f2].c[bad] == 0)

    def test_needs_responses(self, rng):
        with pytest.raises(ParameterError):
            regression_solve(WeightedDataset(rng.standard_normal((5, 1))),
                             TaskObjective("regression", 0.001, {"kappa2": 3, "sigma2": 1}))


def test_invariance_monitor_needs_vectors(outlier_1d):
    _, trace = filter_solve(outlier_1d, mean_task(0.1, 1e-12), SolverConfig(record_trace=False))
    assert trace.iterations == []
    _, trace = mwu_solve(outlier_1d, mean_task(0.1, threshold=1.0))
    with pytest.raises(ParameterError):
        invariance_monitor(trace, outlier_1d.good_set)


def test_deterministic_traces():
    spec = ScenarioSpec("gaussian", "far_cluster", 300, 3, 0.1, 7, adv={"distance": 6.0, "spread": 1.0})
    outs = []
    for _ in range(2):
        data = generate(spec)
        for cfg in (SolverConfig(seed=3), SolverConfig(algorithm=MWU, seed=3)):
            _, trace = solve(data, mean_task(0.1, threshold=1.5), cfg)
            outs.append(json.dumps(trace.to_dict()))
    assert outs[0] == outs[2] and outs[1] == outs[3]


def test_dispatch(outlier_1d):
    rep, trace = solve(outlier_1d, mean_task(0.1, 1e-12))
    assert trace.algorithm == "filter"
    rep, trace = solve(outlier_1d, mean_task(0.1), SolverConfig(algorithm=MWU))
    assert trace.algorithm == "mwu"
    ident = TaskObjective("mean_identity", 0.1, {"tau": 0.5})
    rep, trace = solve(outlier_1d, ident)
    assert trace.algorithm == "mwu"
