import numpy as np
import pytest

from harqeh.absorption import (
    deviation_lower_bound,
    deviation_states,
    deviation_sweep,
    lemma1_closed_form,
    mean_absorption_times,
    one_step_deviation_gap,
)
from harqeh.errors import AbsorbingStateError, DomainError, ImproperPolicyError
from harqeh.policies import bf_policy, ct_policy, if_policy, tabular_policy
from harqeh.solver import extract_policy, value_iteration_ssp
from harqeh.types import LatticeState, LinkConfig, TieBreak

from .conftest import AlwaysHarvest, table1_config, table2_config

ORIGIN = LatticeState(0, 0)


class TestMeanAbsorptionTimes:
    def test_hand_solved_link(self, kconfig):
        table = mean_absorption_times(if_policy(kconfig), kconfig)
        assert table.value(ORIGIN) == pytest.approx(5.0, abs=1e-12)
        assert table.value(LatticeState(1, 0)) == pytest.approx(3.0, abs=1e-12)
        assert table.policy_id == "if"

    def test_zero_on_absorbing_states(self, fig1):
        table = mean_absorption_times(bf_policy(fig1), fig1)
        assert np.all(table.k[fig1.e_d:, fig1.cap_index] == 0.0)
        transient = np.ones_like(table.k, dtype=bool)
        transient[fig1.e_d:, fig1.cap_index] = False
        assert np.all(table.k[transient] >= 1.0)

    def test_reproduces_value_iteration(self, fig1):
        vt = value_iteration_ssp(fig1)
        table = mean_absorption_times(extract_policy(vt), fig1)
        assert np.max(np.abs(table.k - vt.k)) <= 1e-8

    @pytest.mark.parametrize("cfg_name", ["fig1", "kconfig"])
    def test_policy_class_is_optimal(self, cfg_name, request):
        cfg = request.getfixturevalue(cfg_name)
        vt = value_iteration_ssp(cfg)
        policies = [
            bf_policy(cfg),
            if_policy(cfg),
            ct_policy(cfg),
            tabular_policy(vt, TieBreak.PREFER_EH),
            tabular_policy(vt, TieBreak.PREFER_ID),
        ]
        for policy in policies:
            assert mean_absorption_times(policy, cfg).value(ORIGIN) == pytest.approx(vt.k00, abs=1e-8)

    @pytest.mark.parametrize(
        "cfg",
        [table1_config(r2) for r2 in (1, 2, 3, 4, 5)]
        + [table2_config(lam) for lam in (0.1, 0.2, 0.3, 0.4, 0.5)],
        ids=lambda cfg: cfg.label(),
    )
    def test_heuristics_are_optimal_on_table_links(self, cfg):
        k00 = value_iteration_ssp(cfg).k00
        for policy in (bf_policy(cfg), if_policy(cfg), ct_policy(cfg)):
            assert abs(mean_absorption_times(policy, cfg).value(ORIGIN) - k00) <= 1e-8

    def test_forced_harvest_rows(self, fig1):
        table = mean_absorption_times(if_policy(fig1), fig1)
        for i in range(fig1.cap_index):
            expected = 1 / fig1.lambda_ + table.value(LatticeState(fig1.e, i))
            assert table.value(LatticeState(0, i)) == pytest.approx(expected, abs=1e-10)

    def test_complete_information_column(self):
        for cfg in (table1_config(2), table2_config(0.4)):
            table = mean_absorption_times(ct_policy(cfg), cfg)
            for b in range(cfg.e_d):
                assert table.value(LatticeState(b, cfg.cap_index)) == pytest.approx(
                    lemma1_closed_form(b, cfg), abs=1e-10
                )

    def test_trapped_states_are_reported(self, fig1):
        with pytest.raises(ImproperPolicyError) as exc:
            mean_absorption_times(AlwaysHarvest(fig1), fig1)
        assert LatticeState(0, 0) in exc.value.states
        assert all(s.m_index < fig1.cap_index for s in exc.value.states)


class TestLemma1:
    @pytest.mark.parametrize(
        "e,e_d,lam,b,expected",
        [(1, 5, 0.5, 4, 2.0), (1, 5, 0.5, 0, 10.0), (2, 5, 0.25, 2, 8.0), (3, 6, 0.2, 5, 5.0)],
    )
    def test_closed_form(self, e, e_d, lam, b, expected):
        cfg = LinkConfig(lambda_=lam, r1=2, r2=1, e=e, e_d=e_d)
        assert lemma1_closed_form(b, cfg) == pytest.approx(expected)

    def test_real_battery(self):
        cfg = LinkConfig(lambda_=0.5, r1=2, r2=1, e=2, e_d=5)
        # 1.5 units short: one harvest
        assert lemma1_closed_form(3.5, cfg) == pytest.approx(2.0)

    def test_absorbing(self, fig1):
        with pytest.raises(AbsorbingStateError):
            lemma1_closed_form(5, fig1)

    def test_negative_battery(self, fig1):
        with pytest.raises(DomainError):
            lemma1_closed_form(-1, fig1)


class TestDeviationBound:
    def test_bound_meets_decode_arm_for_unit_harvest(self):
        cfg = LinkConfig(lambda_=0.5, r1=10, r2=5, e=1, e_d=3)
        vt = value_iteration_ssp(cfg)
        for state in deviation_states(cfg):
            for rho in (0.1, 0.5, 0.9):
                bound = deviation_lower_bound(state, rho, vt, cfg)
                assert bound.same_band
                assert bound.bound == pytest.approx(bound.decode_value, abs=1e-9)

    def test_band_change_with_larger_harvest(self, fig1):
        vt = value_iteration_ssp(fig1)
        bound = deviation_lower_bound(LatticeState(5, 2), 0.5, vt, fig1)
        assert not bound.same_band
        assert bound.bound < bound.decode_value

    def test_eligible_states(self, fig1):
        states = deviation_states(fig1)
        assert all(s.b >= 1 and s.m_index < fig1.cap_index for s in states)
        assert len(states) == fig1.b_max * fig1.cap_index

    def test_rejects_non_splits(self, fig1):
        vt = value_iteration_ssp(fig1)
        with pytest.raises(DomainError):
            deviation_lower_bound(LatticeState(3, 0), 0.0, vt, fig1)
        with pytest.raises(DomainError):
            deviation_lower_bound(LatticeState(0, 0), 0.5, vt, fig1)
        with pytest.raises(AbsorbingStateError):
            deviation_lower_bound(LatticeState(6, fig1.cap_index), 0.5, vt, fig1)


class TestOneStepDeviation:
    def test_splitting_loses_in_the_tie_region(self, fig1):
        gap = one_step_deviation_gap(LatticeState(3, 0), 0.5, if_policy(fig1), fig1, n_rollouts=20_000, seed=5)
        assert gap.gap >= -3 * gap.stderr
        assert gap.gap > 0
        assert gap.n_rollouts == 20_000

    def test_splitting_can_win_with_larger_harvest(self, fig1):
        # From (5, 4 bits) a GOOD split slot finishes decoding with 5 units left,
        # while decoding outright leaves 4 units and needs one more harvest.
        gap = one_step_deviation_gap(LatticeState(5, 2), 0.5, if_policy(fig1), fig1, n_rollouts=20_000, seed=5)
        assert gap.split_mean == pytest.approx(2.0, abs=4 * gap.stderr + 0.05)
        assert gap.decode_mean == pytest.approx(3.0, abs=0.1)
        assert gap.gap == pytest.approx(-1.0, abs=4 * gap.stderr + 0.05)

    @pytest.mark.parametrize("rho", [0.0, 1.0])
    def test_rejects_ts_actions(self, fig1, rho):
        with pytest.raises(DomainError):
            one_step_deviation_gap(LatticeState(3, 0), rho, if_policy(fig1), fig1, n_rollouts=10)

    def test_unit_harvest_never_favours_splitting(self):
        cfg = LinkConfig(lambda_=0.3, r1=4, r2=2, e=1, e_d=2)
        gaps = deviation_sweep(cfg, if_policy(cfg), [0.2, 0.8], n_rollouts=4096, seed=9)
        assert len(gaps) == 2 * len(deviation_states(cfg))
        assert min(g.gap for g in gaps) >= 0.0

    def test_sweep_is_order_independent(self):
        cfg = LinkConfig(lambda_=0.5, r1=4, r2=2, e=1, e_d=2)
        states = deviation_states(cfg)[:4]
        forward = deviation_sweep(cfg, if_policy(cfg), [0.5], 4096, seed=3, states=states)
        backward = deviation_sweep(cfg, if_policy(cfg), [0.5], 4096, seed=3, states=states[::-1])
        assert forward == backward[::-1]
        single = one_step_deviation_gap(states[1], 0.5, if_policy(cfg), cfg, n_rollouts=4096, seed=3)
        assert single == forward[1]
