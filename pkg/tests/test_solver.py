import math

import numpy as np
import pytest

from harqeh.errors import AbsorbingStateError, ConvergenceError, DomainError
from harqeh.solver import (
    check_bmax_invariance,
    decision_grid,
    deterministic_horizon,
    q_values,
    value_iteration_discounted,
    value_iteration_ssp,
)
from harqeh.types import LatticeState, LinkConfig, TieBreak

from .conftest import TABLE1_VIA, TABLE2_VIA, table1_config, table2_config


class TestSspValueIteration:
    def test_hand_solved_link(self, kconfig):
        vt = value_iteration_ssp(kconfig)
        assert vt.k00 == pytest.approx(5.0, abs=1e-9)
        q_eh, q_id = q_values(kconfig, vt, LatticeState(1, 0))
        assert q_eh == pytest.approx(3.0, abs=1e-9)
        assert q_id == pytest.approx(3.0, abs=1e-9)

    @pytest.mark.parametrize("r2", [1, 2, 3, 4, 5])
    def test_table1(self, r2):
        vt = value_iteration_ssp(table1_config(r2))
        assert vt.k00 == pytest.approx(TABLE1_VIA[r2], abs=0.05)

    @pytest.mark.parametrize("lam", [0.1, 0.2, 0.3, 0.4, 0.5])
    def test_table2(self, lam):
        vt = value_iteration_ssp(table2_config(lam))
        assert vt.k00 == pytest.approx(TABLE2_VIA[lam], abs=0.10)

    def test_absorbing_states_cost_nothing(self, fig1):
        vt = value_iteration_ssp(fig1)
        assert np.all(vt.k[fig1.e_d:, fig1.cap_index] == 0.0)
        assert np.all(np.isnan(vt.q_eh[fig1.e_d:, fig1.cap_index]))

    def test_bellman_residual(self, fig1):
        vt = value_iteration_ssp(fig1, tol=1e-12)
        assert vt.residual <= 1e-11

    def test_complete_information_column(self):
        for cfg in (table1_config(3), table2_config(0.3)):
            vt = value_iteration_ssp(cfg)
            for b in range(cfg.e_d):
                expected = math.ceil((cfg.e_d - b) / cfg.e) / cfg.lambda_
                assert vt.k[b, cfg.cap_index] == pytest.approx(expected, abs=1e-9)

    def test_monotone_in_battery_and_information(self, fig1):
        k = value_iteration_ssp(fig1).k
        assert np.all(np.diff(k, axis=0) <= 1e-9)
        assert np.all(np.diff(k, axis=1) <= 1e-9)

    def test_sweep_order_does_not_matter(self, fig1):
        jacobi = value_iteration_ssp(fig1, sweep="jacobi")
        gauss = value_iteration_ssp(fig1, sweep="gauss-seidel")
        assert np.allclose(jacobi.k, gauss.k, atol=1e-9, rtol=0)
        assert np.array_equal(jacobi.ties, gauss.ties)

    def test_not_converged(self, fig1):
        with pytest.raises(ConvergenceError) as exc:
            value_iteration_ssp(fig1, max_iter=3)
        assert exc.value.iterations == 3

    def test_bad_arguments(self, fig1):
        with pytest.raises(DomainError):
            value_iteration_ssp(fig1, tol=0.0)
        with pytest.raises(DomainError):
            value_iteration_ssp(fig1, sweep="random")

    def test_table_is_read_only(self, fig1):
        vt = value_iteration_ssp(fig1)
        with pytest.raises(ValueError):
            vt.k[0, 0] = 1.0


class TestTies:
    def test_tie_region(self, fig1):
        vt = value_iteration_ssp(fig1)
        expected = {
            LatticeState(b, i) for b in range(1, fig1.e_d + 1) for i in range(fig1.cap_index)
        }
        assert set(vt.tie_states()) == expected

    def test_decoding_strictly_better_above_e_d(self, fig1):
        vt = value_iteration_ssp(fig1)
        gap = vt.q_eh[fig1.e_d + 1:, :fig1.cap_index] - vt.q_id[fig1.e_d + 1:, :fig1.cap_index]
        assert np.all(gap > vt.tie_tol)

    def test_decoding_unavailable_where_forced(self, fig1):
        vt = value_iteration_ssp(fig1)
        assert np.all(np.isnan(vt.q_id[0, :]))
        assert np.all(np.isnan(vt.q_id[:, fig1.cap_index]))

    def test_q_values_match_table(self, fig1):
        vt = value_iteration_ssp(fig1)
        q_eh, q_id = q_values(fig1, vt, LatticeState(7, 1))
        assert q_eh == pytest.approx(vt.q_eh[7, 1])
        assert q_id == pytest.approx(vt.q_id[7, 1])
        assert q_values(fig1, vt, LatticeState(0, 0))[1] is None
        with pytest.raises(AbsorbingStateError):
            q_values(fig1, vt, LatticeState(6, fig1.cap_index))


class TestDecisionGrid:
    def test_marked_grid(self, fig1):
        grid = decision_grid(value_iteration_ssp(fig1), TieBreak.MARK)
        cap = fig1.cap_index
        assert grid.shape == (fig1.b_max + 1, fig1.n_info_levels)
        assert all(cell == "EH" for cell in grid[0])
        assert all(grid[b, cap] == "EH" for b in range(fig1.e_d))
        assert all(grid[b, cap] == "ABSORB" for b in range(fig1.e_d, fig1.b_max + 1))
        assert all(grid[b, i] == "TIE" for b in range(1, fig1.e_d + 1) for i in range(cap))
        assert all(grid[b, i] == "ID" for b in range(fig1.e_d + 1, fig1.b_max + 1) for i in range(cap))

    def test_prefer_id_grid(self, fig1):
        grid = decision_grid(value_iteration_ssp(fig1), TieBreak.PREFER_ID)
        assert all(grid[b, 0] == "ID" for b in range(1, fig1.b_max + 1))
        assert "TIE" not in set(grid.ravel())


class TestDiscounted:
    def test_zero_discount_is_one_step_reward(self, fig1):
        vt = value_iteration_discounted(fig1, beta=0.0)
        transient = vt.k[~np.isnan(vt.q_eh)]
        assert np.all(transient == 1.0)
        assert vt.value(LatticeState(5, fig1.cap_index)) == 0.0

    def test_approaches_undiscounted(self, kconfig):
        vt = value_iteration_discounted(kconfig, beta=0.999999)
        assert vt.k00 == pytest.approx(5.0, abs=1e-4)
        assert np.allclose(vt.v, -vt.k)

    def test_monotone_in_beta(self, fig1):
        target = value_iteration_ssp(fig1).k00
        betas = (0.9, 0.99, 0.999, 0.9999, 1 - 1e-6, 1 - 1e-9)
        values = [value_iteration_discounted(fig1, beta).k00 for beta in betas]
        assert values == sorted(values)
        assert values[-1] <= target + 1e-9
        assert target - values[-1] < target - values[0]

    @pytest.mark.parametrize("beta", [1.0, 1 - 1e-17, 1.5, -0.1])
    def test_unrepresentable_discount(self, fig1, beta):
        with pytest.raises(DomainError):
            value_iteration_discounted(fig1, beta)


class TestDeterministicHorizon:
    @pytest.mark.parametrize("e,e_d", [(1, 1), (2, 3), (1, 4), (3, 5)])
    def test_matches_value_iteration(self, e, e_d):
        cfg = LinkConfig(lambda_=1.0, r1=4, r2=2, e=e, e_d=e_d)
        horizon = deterministic_horizon(cfg)
        assert horizon == math.ceil((e_d + 1) / e) + 1
        assert value_iteration_ssp(cfg).k00 == pytest.approx(horizon)

    def test_needs_certain_channel(self, fig1):
        with pytest.raises(DomainError):
            deterministic_horizon(fig1)


class TestBmaxInvariance:
    @pytest.mark.parametrize("cfg", [table1_config(1), table2_config(0.2)])
    def test_table_configs(self, cfg):
        report = check_bmax_invariance(cfg.with_b_max(cfg.e_d + 2 * cfg.e), margin=2)
        assert report.passed
        assert report.b_max_extended == cfg.e_d + 4 * cfg.e

    def test_minimum_battery(self, fig1):
        report = check_bmax_invariance(fig1.with_b_max(fig1.e_d + fig1.e), margin=1)
        assert report.passed

    def test_margin_must_be_positive(self, fig1):
        with pytest.raises(DomainError):
            check_bmax_invariance(fig1, margin=0)
