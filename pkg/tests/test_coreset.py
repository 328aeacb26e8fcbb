import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from aosq import coreset
from aosq.core import OracleLedger, Query, QueryKind, ValidationError, from_arrays, ground_truth_oracle
from aosq.coreset import (
    ConfigError,
    HoeffdingParams,
    SamplePlan,
    core_size_lower_bound,
    cse_pt,
    cse_rt,
    eoc,
    hoeffding_est,
    hoeffding_n,
    m1_savings_bound,
    m_lower,
    make_plan,
    plan_approx_m1,
    plan_approx_s1,
    plan_exact,
    rand_s_plan,
    rand_sm_plan,
    run_plan,
    s1_savings_bound,
    savings_ratio,
    success_prob_f,
)
from aosq.refcheck import brute_plan
from aosq.harness.synth import Scenario, synth_dataset

triples = st.integers(2, 400).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(1, n), st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.5])))


def exact_miss(n, s, c):
    """Pr[a size-s sample avoids c fixed objects] = C(n-c, s) / C(n, s)."""
    return Fraction(math.comb(n - c, s), math.comb(n, s))


def flagged_ds(flags):
    """Objects in rank order; flags mark oracle neighbors at radius 0.5."""
    return from_arrays(np.linspace(0, 1, len(flags)), np.where(flags, 0.0, 1.0))


class FixedDraws:
    """Stand-in generator whose samples are fixed position lists."""

    def __init__(self, samples):
        self.samples = list(samples)

    def choice(self, n, size, replace):
        return np.array(self.samples.pop(0))


class TestSuccessProb:
    def test_example(self):
        assert success_prob_f(9, 3, 2, 1) == pytest.approx(5 / 9)
        assert 1 - exact_miss(9, 3, 1) ** 2 == Fraction(5, 9)

    def test_example_monte_carlo(self):
        rng = np.random.default_rng(0)
        trials = 200_000
        draws = np.argsort(rng.random((trials, 2, 9)), axis=2)[:, :, :3]
        hit = (draws == 0).any(axis=(1, 2))
        assert hit.mean() == pytest.approx(5 / 9, abs=4 * math.sqrt(0.25 / trials))

    def test_full_sample(self):
        for c in (1, 5, 10):
            assert success_prob_f(10, 10, 1, c) == 1.0

    def test_monotone_example(self):
        assert success_prob_f(100, 10, 3, 5) < success_prob_f(100, 11, 3, 5)

    def test_rejects_empty_core(self):
        with pytest.raises(ValidationError):
            success_prob_f(10, 2, 1, 0)

    @settings(max_examples=300)
    @given(triples, st.integers(1, 400), st.integers(1, 30))
    def test_matches_exact_and_monotone(self, t, s, m):
        n, c, _ = t
        assume(s <= n)
        f = success_prob_f(n, s, m, c)
        assert f == pytest.approx(float(1 - exact_miss(n, s, c) ** m), abs=1e-12)
        if s < n:
            assert success_prob_f(n, s + 1, m, c) >= f - 1e-12
        if c < n:
            assert success_prob_f(n, s, m, c + 1) >= f - 1e-12
        assert success_prob_f(n, s, m + 1, c) >= f - 1e-12


class TestEoc:
    def test_single_sample(self):
        assert eoc(50, 7, 1) == pytest.approx(7)

    def test_full_sample(self):
        assert eoc(50, 50, 3) == 50

    def test_example_against_simulation(self):
        assert eoc(100, 1, 22) == pytest.approx(19.84, abs=0.005)
        rng = np.random.default_rng(1)
        draws = np.sort(rng.integers(100, size=(100_000, 22)), axis=1)
        distinct = 1 + (np.diff(draws, axis=1) != 0).sum(axis=1)
        se = distinct.std() / math.sqrt(len(distinct))
        assert abs(distinct.mean() - eoc(100, 1, 22)) <= 3 * se

    @given(st.integers(1, 500), st.data())
    def test_monotone_and_bounded(self, n, data):
        s = data.draw(st.integers(1, n))
        m = data.draw(st.integers(1, 50))
        e = eoc(n, s, m)
        assert s - 1e-9 <= e <= n + 1e-9
        assert eoc(n, s, m + 1) >= e - 1e-9
        if s < n:
            assert eoc(n, s + 1, m) >= e - 1e-9


class TestMLower:
    def test_example(self):
        assert m_lower(1, 100, 10, 0.1) == math.ceil(math.log(0.1) / math.log(0.9)) == 22

    def test_near_one_delta(self):
        assert m_lower(3, 100, 10, 1 - 1e-9) == 1

    def test_pigeonhole(self):
        assert m_lower(91, 100, 10, 0.01) == 1

    @settings(max_examples=300)
    @given(triples, st.data())
    def test_minimal_feasible(self, t, data):
        n, c, delta = t
        assume(c < n)
        s = data.draw(st.integers(1, n - c))
        m = m_lower(s, n, c, delta)
        assert success_prob_f(n, s, m, c) >= 1 - delta - 1e-12
        if m >= 2:
            assert success_prob_f(n, s, m - 1, c) < 1 - delta


class TestPlans:
    def test_exact_example(self):
        plan = plan_exact(9, 1, 0.1)
        assert (plan.s, plan.m) == (4, 4)
        assert plan.predicted_eoc == pytest.approx(8.143, abs=5e-4)
        assert eoc(9, 1, 20) == pytest.approx(8.147, abs=5e-4)
        ref = brute_plan(9, 1, 0.1)
        assert (ref.s, ref.m) == (4, 4)

    def test_core_is_everything(self):
        plan = plan_exact(12, 12, 0.05)
        assert (plan.s, plan.m) == (1, 1)

    def test_s1_example(self):
        plan = plan_approx_s1(100, 10, 0.1)
        assert (plan.s, plan.m, plan.provenance) == (1, 22, "approx-s1")
        assert plan.predicted_eoc == pytest.approx(19.84, abs=0.005)

    def test_s1_trivial(self):
        plan = plan_approx_s1(7, 7, 0.9)
        assert (plan.s, plan.m) == (1, 1)

    def test_m1_example(self):
        harmonic = sum(1 / (100 - i) for i in range(10))
        assert math.ceil(-math.log(0.1) / harmonic) == 22
        plan = plan_approx_m1(100, 10, 0.1)
        assert (plan.s, plan.m, plan.predicted_eoc, plan.provenance) == (22, 1, 22.0, "approx-m1")

    def test_unknown_mode(self):
        with pytest.raises(ValidationError):
            make_plan(10, 2, 0.1, "greedy")

    @settings(max_examples=300)
    @given(triples)
    def test_all_plans_feasible_and_consistent(self, t):
        n, c, delta = t
        for mode in coreset.MODES:
            plan = make_plan(n, c, delta, mode)
            assert 1 <= plan.s <= n and plan.m >= 1
            assert plan.predicted_eoc == eoc(n, plan.s, plan.m)
            assert success_prob_f(n, plan.s, plan.m, c) >= 1 - delta - 1e-12

    @settings(max_examples=150, deadline=None)
    @given(st.integers(2, 200).flatmap(
        lambda n: st.tuples(st.just(n), st.integers(1, n), st.sampled_from([0.01, 0.05, 0.1, 0.2]))))
    def test_exact_matches_brute_force(self, t):
        n, c, delta = t
        plan, ref = plan_exact(n, c, delta), brute_plan(n, c, delta)
        assert (plan.s, plan.m) == (ref.s, ref.m)

    def test_random_baselines_feasible(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            for fn in (rand_s_plan, rand_sm_plan):
                plan = fn(300, 12, 0.1, rng)
                assert 1 <= plan.s <= 300 - 12 + 1
                assert plan.m >= m_lower(plan.s, 300, 12, 0.1)
                assert success_prob_f(300, plan.s, plan.m, 12) >= 0.9 - 1e-12


class TestSavingsRatio:
    def test_identity(self):
        plan = plan_exact(50, 4, 0.1)
        assert savings_ratio(50, plan, plan) == 1.0

    def test_example_small(self):
        opt = plan_exact(100, 10, 0.1)
        s1 = plan_approx_s1(100, 10, 0.1)
        assert savings_ratio(100, s1, opt) >= 0.977
        assert savings_ratio(100, s1, opt) >= s1_savings_bound(100, 10, 0.1)
        assert s1_savings_bound(100, 10, 0.1) == pytest.approx(
            0.1 ** (0.1 * (100 / 99 - 0.01)) * 0.99, rel=1e-12)

    def test_division_guard(self):
        full = SamplePlan(5, 1, "exact", 5.0)
        assert savings_ratio(5, full, full) == math.inf

    @settings(max_examples=300)
    @given(triples)
    def test_bounds_and_at_most_one(self, t):
        n, c, delta = t
        assume(c < n)
        opt = plan_exact(n, c, delta)
        xi_s1 = savings_ratio(n, plan_approx_s1(n, c, delta), opt)
        xi_m1 = savings_ratio(n, plan_approx_m1(n, c, delta), opt)
        assert xi_s1 <= 1 + 1e-12 and xi_m1 <= 1 + 1e-12
        assert xi_s1 >= s1_savings_bound(n, c, delta) - 1e-12
        assert xi_m1 >= m1_savings_bound(n, c, delta) - 1e-12


class TestRunPlan:
    def test_union_extremes(self):
        # probed ranks 2, 5, 7 (positions 1, 4, 6); the first two are neighbors
        flags = [False, True, False, False, True, False, False, False, False]
        ds = flagged_ds(flags)
        plan = SamplePlan(3, 1, "exact", 3.0)
        for kind, want in ((QueryKind.RT, 5), (QueryKind.PT, 2)):
            q = Query(kind, 0.9, 0.1, 0.5)
            k, fallback, found = coreset._run_plan(ds, q, plan, ground_truth_oracle(ds), OracleLedger(),
                                                   FixedDraws([[6, 1, 4]]))
            assert (k, fallback) == (want, False)
            assert found == {ds.ids[1], ds.ids[4]}

    @pytest.mark.parametrize("kind,want", [(QueryKind.RT, 6), (QueryKind.PT, 0)])
    def test_no_neighbor_fallback(self, kind, want):
        ds = flagged_ds([False] * 6)
        ans = run_plan(ds, Query(kind, 0.9, 0.1, 0.5), SamplePlan(2, 2, "exact", 0.0),
                       ground_truth_oracle(ds), OracleLedger(), 0)
        assert ans.prefix_k == want and ans.diagnostics["fallback"]

    def test_ledger_counts_union(self):
        ds = flagged_ds([True, False] * 50)
        plan = SamplePlan(20, 4, "exact", eoc(100, 20, 4))
        for seed in range(20):
            ledger = OracleLedger()
            ans = run_plan(ds, Query("RT", 0.9, 0.1, 0.5), plan, ground_truth_oracle(ds), ledger, seed)
            assert ans.oracle_calls == ledger.count <= plan.s * plan.m

    def test_csc_validates_core_size(self):
        ds = flagged_ds([True] * 3)
        with pytest.raises(ValidationError):
            coreset.csc(ds, Query("RT", 0.9, 0.1, 0.5), 4, 0.1, "exact", ground_truth_oracle(ds),
                        OracleLedger())

    def test_csc_succeeds_on_closed_core(self):
        rng = np.random.default_rng(0)
        wins, trials = 0, 300
        q = Query("RT", 0.9, 0.1, 0.5)
        for seed in range(trials):
            flags = rng.random(200) < np.linspace(1, 0, 200)
            ds = flagged_ds(flags)
            nn = ds.neighbors(0.5)
            c = math.floor(len(nn) * 0.1) + 1
            ans = coreset.csc(ds, q, c, 0.1, "exact", ground_truth_oracle(ds), OracleLedger(), seed)
            wins += len(ans.member_ids & nn) >= 0.9 * len(nn)
        assert wins / trials >= 0.9 - 2.576 * math.sqrt(0.09 / trials)


class TestHoeffding:
    def test_example(self):
        assert hoeffding_n(0.05, 0.1) == math.ceil(math.log(0.05) / -0.02) == 150

    @given(st.floats(1e-6, 0.99), st.floats(1e-3, 0.99))
    def test_defining_inequality(self, delta, eps):
        n = hoeffding_n(delta, eps)
        assert math.exp(-2 * n * eps * eps) <= delta * (1 + 1e-12)
        assert hoeffding_n(delta, eps / 2) >= n

    def test_params(self):
        assert HoeffdingParams(0.1, 0.05).n == 150
        with pytest.raises(ValidationError):
            HoeffdingParams(0.0, 0.05)

    def test_extremes(self):
        ds = flagged_ds([True, True, False, False])
        oracle = ground_truth_oracle(ds)
        assert hoeffding_est(ds.ids[:2], 0.1, 0.1, 0.5, oracle, OracleLedger(), 0) == 1.0
        assert hoeffding_est(ds.ids[2:], 0.1, 0.1, 0.5, oracle, OracleLedger(), 0) == 0.0

    def test_empty_pool(self):
        ds = flagged_ds([True])
        with pytest.raises(ValidationError):
            hoeffding_est([], 0.1, 0.1, 0.5, ground_truth_oracle(ds), OracleLedger(), 0)

    def test_counts_distinct_probes(self):
        ds = flagged_ds([True, False, True])
        ledger = OracleLedger()
        hoeffding_est(frozenset(ds.ids.tolist()), 0.1, 0.1, 0.5, ground_truth_oracle(ds), ledger, 0)
        assert ledger.count == 3  # 116 draws over 3 ids

    def test_one_sided_guarantee(self):
        flags = np.zeros(1000, dtype=bool)
        flags[:300] = True
        ds = flagged_ds(flags)
        oracle = ground_truth_oracle(ds)
        over = 0
        for child in np.random.SeedSequence(4).spawn(10_000):
            mu_hat = hoeffding_est(ds.ids, 0.05, 0.1, 0.5, oracle, OracleLedger(), child)
            over += mu_hat - 0.1 > 0.3
        assert over / 10_000 <= 0.05


class TestCseRt:
    def test_core_size_example(self):
        assert core_size_lower_bound(1000, 0.2, 0.1, 0.95) == 6

    def test_core_size_clamped(self):
        assert core_size_lower_bound(1000, 0.08, 0.1, 0.95) == 1
        assert core_size_lower_bound(10, 1.0, 0.0, 0.01) == 10

    def test_budget_split_rejects_large_delta_r(self):
        ds = synth_dataset(Scenario(n=100), 0)
        with pytest.raises(ConfigError):
            cse_rt(ds, Query("RT", 0.95, 0.1), 0.1, 0.1, ground_truth_oracle(ds), OracleLedger(), 0)

    def test_diagnostics(self):
        ds = synth_dataset(Scenario(n=500), 1)
        ledger = OracleLedger()
        ans = cse_rt(ds, Query("RT", 0.95, 0.1), 0.05, 0.1, ground_truth_oracle(ds), ledger, 2)
        d = ans.diagnostics
        assert d["delta_csc"] == pytest.approx((0.1 - 0.05) / 0.95)
        assert d["c_lower"] == core_size_lower_bound(500, d["mu_hat"], 0.1, 0.95)
        assert ans.oracle_calls == ledger.count
        assert ans.member_ids == frozenset(ds.ids[:ans.prefix_k].tolist())

    def test_kind_check(self):
        ds = synth_dataset(Scenario(n=50), 0)
        with pytest.raises(ValidationError):
            cse_rt(ds, Query("PT", 0.95, 0.1), 0.05, 0.1, ground_truth_oracle(ds), OracleLedger(), 0)


class TestCsePt:
    def test_pilot_bounds(self):
        ds = synth_dataset(Scenario(n=50), 0)
        with pytest.raises(ValidationError):
            cse_pt(ds, Query("PT", 0.95, 0.1), 51, 0.01, ground_truth_oracle(ds), OracleLedger(), 0)

    def test_all_neighbors(self):
        ds = from_arrays(np.linspace(0, 0.5, 200), np.linspace(0, 0.5, 200))
        q = Query("PT", 0.95, 0.1, 0.9)
        ledger = OracleLedger()
        ans = cse_pt(ds, q, 20, 0.01, ground_truth_oracle(ds), ledger, 5)
        assert ans.diagnostics["branch"] == "hoeffding"
        assert ans.prefix_k == ans.diagnostics["k_hat"]
        pilot = np.random.default_rng(5).choice(200, size=20, replace=False)
        assert ans.diagnostics["k2"] == pilot.max() + 1
        assert ans.member_ids >= ledger.probed

    def test_fallback_returns_probed_neighbors(self):
        ds = synth_dataset(Scenario(n=600, noise_sigma=0.3), 2)
        q = Query("PT", 0.99, 0.1)
        ledger = OracleLedger()
        ans = cse_pt(ds, q, 60, 0.01, ground_truth_oracle(ds), ledger, 0)
        assert ans.diagnostics["branch"] == "fallback"
        assert ans.diagnostics["precision_lower"] < q.gamma
        assert ans.prefix_k is None
        assert ans.member_ids == ledger.probed & ds.neighbors(q.radius)


class TestExactBoundary:
    """Plans whose miss probability equals delta exactly, e.g. (1/10)^2 = 0.01."""

    @pytest.mark.parametrize("n,c,s,m,delta", [(10, 1, 9, 2, 0.01), (10, 9, 1, 2, 0.01), (16, 8, 3, 2, 0.01)])
    def test_equality_meets_target(self, n, c, s, m, delta):
        miss = Fraction(math.comb(n - c, s), math.comb(n, s))
        assert miss ** m == Fraction(str(delta))
        assert m_lower(s, n, c, delta) == m
        assert (plan_exact(n, c, delta).s, plan_exact(n, c, delta).m) == (brute_plan(n, c, delta).s,
                                                                          brute_plan(n, c, delta).m)
