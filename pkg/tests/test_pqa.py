import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aosq.core import Query, QueryKind, from_arrays, prefix
from aosq.pbd import pns, pos_mr
from aosq.pqa import pqa, pqa_pt, pqa_pt_k, pqa_rt, pqa_rt_bounds, pqa_rt_k
from aosq.refcheck import brute_expected_cr, brute_optimal_answer, brute_pos

sorted_phis = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8).map(lambda x: sorted(x, reverse=True))


def scan_pt(phis, q):
    return max(k for k in range(len(phis) + 1) if brute_pos(phis, range(k), q) >= 1 - q.delta)


def scan_rt(phis, q):
    n = len(phis)
    k_low = min(k for k in range(n + 1) if brute_pos(phis, range(k), q) >= 1 - q.delta)
    scores = [(brute_expected_cr(phis, range(k), q), -k) for k in range(k_low, n + 1)]
    return k_low, -max(scores)[1]


class TestPqaPt:
    def test_drops_certain_non_neighbor(self):
        q = Query(QueryKind.PT, 0.9, 0.1)
        assert pqa_pt_k([1, 1, 0], 0.9, 0.1) == scan_pt([1, 1, 0], q) == 2

    def test_all_neighbors(self):
        assert pqa_pt_k([1.0] * 7, 0.95, 0.1) == 7

    def test_no_neighbors(self):
        ds = from_arrays([0.1, 0.2, 0.3])
        ans = pqa_pt(ds, [0.0, 0.0, 0.0], 0.9, 0.1)
        assert ans.prefix_k == 0 and ans.member_ids == frozenset()

    def test_scan_continues_past_a_dip(self):
        # PoS(D_2) < 1-delta but PoS(D_3) recovers, so a scan that stops early would return 1
        phis = [1.0, 0.5, 1.0, 1.0]
        assert pqa_pt_k(phis, 0.6, 0.4) == scan_pt(phis, Query(QueryKind.PT, 0.6, 0.4)) == 4

    @settings(max_examples=100, deadline=None)
    @given(sorted_phis, st.sampled_from([0.5, 0.9, 0.95]), st.sampled_from([0.05, 0.1, 0.3]))
    def test_matches_enumeration_scan(self, phis, gamma, delta):
        assert pqa_pt_k(phis, gamma, delta) == scan_pt(phis, Query(QueryKind.PT, gamma, delta))


class TestPqaRt:
    def test_drops_certain_non_neighbor(self):
        assert pqa_rt_bounds([1, 1, 0], 0.9, 0.1) == (2, 2)
        assert scan_rt([1, 1, 0], Query(QueryKind.RT, 0.9, 0.1)) == (2, 2)

    def test_all_neighbors(self):
        n, gamma = 10, 0.75
        q = Query(QueryKind.RT, gamma, 0.1)
        assert pqa_rt_bounds([1.0] * n, gamma, 0.1) == scan_rt([1.0] * n, q) == (math.ceil(n * gamma),) * 2

    def test_single_object(self):
        assert pqa_rt_k([1.0], 0.95, 0.1) == 1

    def test_no_neighbors_returns_empty(self):
        assert pqa_rt_bounds([0.0, 0.0], 0.9, 0.1) == (0, 0)

    @settings(max_examples=100, deadline=None)
    @given(sorted_phis, st.sampled_from([0.5, 0.9, 0.95]), st.sampled_from([0.05, 0.1, 0.3]))
    def test_matches_enumeration_scan(self, phis, gamma, delta):
        assert pqa_rt_bounds(phis, gamma, delta) == scan_rt(phis, Query(QueryKind.RT, gamma, delta))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40).map(lambda x: sorted(x, reverse=True)),
           st.sampled_from([0.8, 0.9, 0.95]), st.sampled_from([0.05, 0.1]))
    def test_binary_search_equals_linear_scan(self, phis, gamma, delta):
        phis = np.array(phis)
        linear = next(k for k in range(len(phis) + 1)
                      if pos_mr(pns(phis[:k]), pns(phis[k:]), gamma) >= 1 - delta)
        assert pqa_rt_bounds(phis, gamma, delta)[0] == linear


class TestOptimality:
    @settings(max_examples=60, deadline=None)
    @given(sorted_phis, st.sampled_from(["PT", "RT"]), st.sampled_from([0.5, 0.9]),
           st.sampled_from([0.1, 0.3]))
    def test_prefix_answer_is_optimal(self, phis, kind, gamma, delta):
        q = Query(kind, gamma, delta)
        k = pqa_pt_k(phis, gamma, delta) if kind == "PT" else pqa_rt_k(phis, gamma, delta)
        _, best = brute_optimal_answer(phis, q)
        assert brute_pos(phis, range(k), q) >= 1 - delta - 1e-12
        assert brute_expected_cr(phis, range(k), q) >= best - 1e-9


class TestAnswers:
    def setup_method(self):
        self.ds = from_arrays([0.5, 0.1, 0.3], [0.0, 0.0, 1.0])
        self.phis = [1.0, 0.0, 1.0]  # rank order: ids 1, 2, 0

    def test_zero_oracle_calls_and_prefix_members(self):
        for kind in QueryKind:
            ans = pqa(self.ds, Query(kind, 0.6, 0.1), self.phis)
            assert ans.oracle_calls == 0
            assert ans.member_ids == prefix(self.ds, ans.prefix_k)

    def test_rt_diagnostics(self):
        ans = pqa_rt(self.ds, self.phis, 0.9, 0.1)
        assert ans.diagnostics["k_lower"] <= ans.prefix_k == 3

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pqa(self.ds, Query("PT", 0.9, 0.1), [1.0, 1.0])
