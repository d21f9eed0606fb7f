from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from admctl.errors import ValidationError
from admctl.pipeline import build_model
from admctl.robustness import (
    TrueModelOverride,
    effective_action_params,
    mismatch_between,
    mismatch_eval,
    rate_bound_cost,
    ratebound_sweep,
    true_control_space,
)
from admctl.scenario import Discretization, InelasticFlowSpec, LinkScenario
from admctl.ssp import decompose_cost, solve


def small(**kw):
    base = dict(
        bandwidth=20.0,
        size=600.0,
        deadline=60.0,
        flows=(InelasticFlowSpec(2.0, 3.0), InelasticFlowSpec(6.0, 2.0)),
        steps=6,
        stages=8,
    )
    base.update(kw)
    return LinkScenario(**base)


class TestCongestion:
    def test_nominal(self):
        assert effective_action_params(200.0, 77.5, 0.3) == (122.5, 0.3)

    def test_congested(self):
        assert effective_action_params(50.0, 77.5, 0.3) == (0.0, 0.0)

    def test_empty_action(self):
        assert effective_action_params(50.0, 0.0, 0.0) == (50.0, 0.0)

    @given(st.floats(0, 300), st.floats(0, 300), st.floats(0, 300), st.floats(0, 1))
    def test_monotone_in_bandwidth(self, b1, b2, load, vi):
        lo, hi = sorted((b1, b2))
        r_lo, v_lo = effective_action_params(lo, load, vi)
        r_hi, v_hi = effective_action_params(hi, load, vi)
        assert r_hi >= r_lo >= 0
        assert not (v_lo != 0 and v_hi == 0)

    def test_true_control_space(self, baseline_model):
        nominal = baseline_model.control
        cs = true_control_space(nominal, [0.1] * 25 + [3.0] * 25, TrueModelOverride(150.0))
        assert cs.m == nominal.m
        np.testing.assert_allclose(cs.rates, np.maximum(0.0, 150.0 - nominal.loads))
        assert np.array_equal(cs.rewards, nominal.rewards)
        cs = true_control_space(nominal, [0.1] * 25 + [3.0] * 25, TrueModelOverride(50.0))
        assert np.all(cs.rewards[nominal.loads > 50.0] == 0)
        assert np.all(cs.rates[nominal.loads > 50.0] == 0)

    def test_true_loads_override(self, baseline_model):
        nominal = baseline_model.control
        loads = [0.2] * 25 + [3.0] * 25
        cs = true_control_space(nominal, loads, TrueModelOverride(200.0, loads=tuple(loads)))
        assert cs.loads[25] == pytest.approx(5.0)


class TestRateBound:
    def test_zero(self):
        d = Discretization(10, 12, 100.0, 60.0)
        assert not rate_bound_cost(d, 0.0, 1.0).any()

    def test_strict_line(self):
        d = Discretization(4, 4, 100.0, 100.0)
        G = rate_bound_cost(d, 1.0, 2.0)
        c = 2.0 / 100.0 * 25.0
        # R0 = S/T: after stage k the line sits exactly on step k+1
        for k in range(4):
            for x in range(5):
                behind = x < k + 1 and x < 4
                assert G[k, x] == (c if behind else 0.0)

    def test_huge_r0_penalizes_every_open_destination(self):
        d = Discretization(5, 6, 100.0, 60.0)
        G = rate_bound_cost(d, 1e6, 1.0)
        assert np.all(G[:, :-1] > 0)
        assert np.all(G[:, -1] == 0)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            rate_bound_cost(Discretization(2, 2, 1.0, 1.0), -1.0, 1.0)

    def test_zero_bound_is_bit_identical(self, baseline_model):
        zero = rate_bound_cost(baseline_model.grid, 0.0, 1.0)
        a = solve(baseline_model)
        b = solve(baseline_model.with_rate_bound(zero))
        assert a.policy == b.policy
        assert np.array_equal(a.cost.J, b.cost.J)
        assert np.array_equal(a.Q, b.Q)

    def test_penalty_leaves_transitions_alone(self):
        sc = small()
        plain = build_model(sc)
        bounded = build_model(sc.with_(rate_bound=15.0))
        assert np.array_equal(plain.trans, bounded.trans)
        assert np.all(bounded.rate_bound_cost >= 0)

    def test_huge_bound_hurries_from_the_start(self):
        # one heavy flow: admitting it cuts the elastic rate to a quarter
        sc = small(flows=(InelasticFlowSpec(15.0, 1.0),), rate_bound=1e6)
        sol = solve(build_model(sc))
        assert sol.policy.table[0, 0] == 1
        # only cells where the deadline is already lost go back to admitting
        assert np.all(sol.policy.table[:6, :-1] == 1)

    def test_huge_bound_sheds_video_on_baseline(self, baseline):
        sol = solve(build_model(baseline.with_(rate_bound=1e6)))
        # cheap VoIP flows stay, every video flow is shed at the start
        assert sol.policy.table[0, 0] == 26


class TestMismatch:
    def test_identity(self, baseline_model):
        rep = mismatch_between(baseline_model, baseline_model)
        assert not rep.gap.any()
        assert not rep.gap_elastic.any() and not rep.gap_inelastic.any()

    def test_identity_via_scenario(self):
        sc = small()
        rep = mismatch_eval(sc, TrueModelOverride(sc.bandwidth))
        assert not rep.gap.any()

    def test_nominal_never_beats_omniscient(self):
        sc = small()
        for B in (8.0, 12.0, 30.0):
            rep = mismatch_eval(sc, TrueModelOverride(B))
            assert np.all(rep.gap >= -1e-12)
            assert rep.omniscient_utility >= rep.nominal_utility - 1e-12

    def test_gap_decomposes(self):
        sc = small(lambda_I=2.0)
        rep = mismatch_eval(sc, TrueModelOverride(10.0))
        np.testing.assert_allclose(rep.gap, rep.gap_elastic + rep.gap_inelastic, atol=1e-12)

    def test_structure_must_match(self):
        a = build_model(small())
        b = build_model(small(steps=5))
        with pytest.raises(ValidationError):
            mismatch_between(a, b)


class TestSweep:
    def test_single_zero_point(self):
        sc = small()
        rows = ratebound_sweep(sc, [0.0], [TrueModelOverride(12.0)])
        assert [r.B_true for r in rows] == [20.0, 12.0]
        model = build_model(sc)
        parts = decompose_cost(model, solve(model).policy)
        assert rows[0].elastic_nominal_policy == -parts.J_E[0, 0]
        assert rows[0].inelastic_nominal_policy == -parts.J_I[0, 0]
        rep = mismatch_eval(sc, TrueModelOverride(12.0))
        assert rows[1].utility_gap(sc.lambda_I) == pytest.approx(rep.utility_gap, abs=1e-12)

    def test_rows_sorted_and_complete(self):
        rows = ratebound_sweep(small(), [15.0, 0.0, 5.0], [TrueModelOverride(9.0), TrueModelOverride(30.0)])
        assert [r.R0 for r in rows] == [0.0] * 3 + [5.0] * 3 + [15.0] * 3
        assert all(len(r.values()) == 6 for r in rows)

    def test_conservatism_costs_inelastic_utility(self, baseline):
        rows = ratebound_sweep(baseline, [0.0, 100.0, 160.0, 200.0])
        inel = [r.inelastic_nominal_policy for r in rows]
        assert inel[-1] < inel[0]
        assert inel[-1] <= inel[-2] + 1e-12

    def test_empty_grid(self):
        with pytest.raises(ValidationError):
            ratebound_sweep(small(), [])
