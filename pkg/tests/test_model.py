import math

import numpy as np
import pytest
from pydantic import ValidationError

from harqeh.errors import AbsorbingStateError, DomainError
from harqeh.model import (
    EH,
    ID,
    ChannelState,
    LatticeState,
    LinkConfig,
    RealState,
    StateSpace,
    allowed_actions,
    enumerate_states,
    info_bits,
    is_absorbing,
    rate_split,
    step_ps,
    step_ps_array,
    step_ts,
)

GOOD, BAD = ChannelState.GOOD, ChannelState.BAD


class TestLinkConfig:
    def test_b_max_defaults_to_e_d_plus_four_e(self):
        cfg = LinkConfig(lambda_=0.5, r1=5, r2=2, e=2, e_d=5)
        assert cfg.b_max == 13

    def test_lambda_alias(self):
        cfg = LinkConfig.model_validate({"lambda": 0.3, "r1": 4, "r2": 2, "e": 1, "ed": 2})
        assert cfg.lambda_ == 0.3
        assert cfg.e_d == 2
        assert cfg.model_dump(by_alias=True)["lambda"] == 0.3

    def test_r2_above_r1_rejected(self):
        with pytest.raises(ValidationError):
            LinkConfig(lambda_=0.5, r1=2, r2=3, e=1, e_d=1)

    def test_small_battery_rejected(self):
        with pytest.raises(ValidationError):
            LinkConfig(lambda_=0.5, r1=2, r2=1, e=2, e_d=3, b_max=4)

    @pytest.mark.parametrize("lam", [0.0, 1.5, -0.1])
    def test_lambda_range(self, lam):
        with pytest.raises(ValidationError):
            LinkConfig(lambda_=lam, r1=2, r2=1, e=1, e_d=1)

    def test_info_lattice(self, fig1):
        # m in {0, 2, 4} U {5}
        assert fig1.cap_index == 3
        assert [info_bits(i, fig1) for i in range(fig1.n_info_levels)] == [0, 2, 4, 5]

    def test_exact_multiple_has_no_extra_level(self):
        cfg = LinkConfig(lambda_=0.5, r1=10, r2=5, e=2, e_d=5)
        assert cfg.cap_index == 2

    def test_snr_products(self, fig1):
        assert fig1.good_snr == 31.0
        assert fig1.bad_snr == 3.0

    def test_with_b_max(self, fig1):
        grown = fig1.with_b_max(20)
        assert grown.b_max == 20
        assert grown.lambda_ == fig1.lambda_
        with pytest.raises(ValidationError):
            fig1.with_b_max(6)


class TestRateSplit:
    def test_pure_decoding_is_exact(self, fig1):
        assert rate_split(0.0, fig1) == (5.0, 2.0)

    def test_pure_harvesting_carries_nothing(self, fig1):
        assert rate_split(1.0, fig1) == (0.0, 0.0)

    def test_decreasing_in_rho(self, fig1):
        rates = [rate_split(rho, fig1) for rho in np.linspace(0, 1, 11)]
        goods = [r[0] for r in rates]
        bads = [r[1] for r in rates]
        assert goods == sorted(goods, reverse=True)
        assert bads == sorted(bads, reverse=True)

    def test_half_split(self, fig1):
        r_good, r_bad = rate_split(0.5, fig1)
        assert r_good == pytest.approx(math.log2(16.5))
        assert r_bad == pytest.approx(math.log2(2.5))

    @pytest.mark.parametrize("rho", [-0.01, 1.01])
    def test_out_of_range(self, fig1, rho):
        with pytest.raises(DomainError):
            rate_split(rho, fig1)


class TestStepTs:
    def test_harvest_good_caps_at_b_max(self, fig1):
        assert step_ts(LatticeState(3, 0), EH, GOOD, fig1) == LatticeState(5, 0)
        assert step_ts(LatticeState(12, 0), EH, GOOD, fig1) == LatticeState(13, 0)

    def test_harvest_bad_is_idle(self, fig1):
        assert step_ts(LatticeState(3, 1), EH, BAD, fig1) == LatticeState(3, 1)

    def test_decode_good_completes(self, fig1):
        assert step_ts(LatticeState(3, 0), ID, GOOD, fig1) == LatticeState(2, 3)

    def test_decode_bad_adds_r2(self, fig1):
        assert step_ts(LatticeState(3, 0), ID, BAD, fig1) == LatticeState(2, 1)
        # 4 + 2 bits saturates at r1 = 5
        assert step_ts(LatticeState(3, 2), ID, BAD, fig1) == LatticeState(2, 3)

    def test_decode_needs_energy(self, fig1):
        with pytest.raises(DomainError):
            step_ts(LatticeState(0, 0), ID, GOOD, fig1)

    def test_absorbing_state(self, fig1):
        with pytest.raises(AbsorbingStateError):
            step_ts(LatticeState(5, 3), EH, GOOD, fig1)

    def test_split_action_rejected(self, fig1):
        from harqeh.types import Action

        with pytest.raises(DomainError):
            step_ts(LatticeState(3, 0), Action(0.5), GOOD, fig1)


class TestStepPs:
    @pytest.mark.parametrize("channel", [GOOD, BAD])
    @pytest.mark.parametrize("action", [EH, ID])
    def test_reduces_to_ts_on_the_lattice(self, fig1, channel, action):
        for state in StateSpace.from_config(fig1).transient:
            if action not in allowed_actions(state, fig1):
                continue
            expected = step_ts(state, action, channel, fig1)
            real = RealState(float(state.b), info_bits(state.m_index, fig1))
            got = step_ps(real, action.rho, channel, fig1)
            assert got.b == expected.b
            assert got.m == info_bits(expected.m_index, fig1)

    def test_split_good_slot(self, fig1):
        nxt = step_ps(RealState(3.0, 0.0), 0.5, GOOD, fig1)
        assert nxt.b == pytest.approx(3.0 + 0.5 * 2 - 1)
        assert nxt.m == pytest.approx(math.log2(16.5))

    def test_split_bad_slot_costs_a_unit(self, fig1):
        nxt = step_ps(RealState(3.0, 0.0), 0.5, BAD, fig1)
        assert nxt.b == 2.0
        assert nxt.m == pytest.approx(math.log2(2.5))

    def test_information_near_r1_is_complete(self):
        cfg = LinkConfig(lambda_=0.5, r1=3, r2=1, e=1, e_d=1)
        nxt = step_ps(RealState(2.0, 2.0 - 5e-10), 0.0, BAD, cfg)
        assert nxt.m == 3.0

    def test_transceiver_needs_energy(self, fig1):
        with pytest.raises(DomainError):
            step_ps(RealState(0.5, 0.0), 0.3, GOOD, fig1)

    def test_array_version_matches(self, fig1):
        rng = np.random.default_rng(3)
        b = rng.uniform(1, 12, 200)
        m = rng.uniform(0, 4.9, 200)
        rho = rng.choice([0.0, 0.25, 0.5, 1.0], 200)
        good = rng.random(200) < 0.5
        b_arr, m_arr = step_ps_array(b, m, rho, good, fig1)
        for j in range(200):
            channel = GOOD if good[j] else BAD
            one = step_ps(RealState(b[j], m[j]), float(rho[j]), channel, fig1)
            assert b_arr[j] == pytest.approx(one.b)
            assert m_arr[j] == pytest.approx(one.m)


class TestStateSpace:
    def test_enumeration_is_row_major(self, fig1):
        states = enumerate_states(fig1)
        assert len(states) == (fig1.b_max + 1) * fig1.n_info_levels
        assert states[:5] == [
            LatticeState(0, 0), LatticeState(0, 1), LatticeState(0, 2),
            LatticeState(0, 3), LatticeState(1, 0),
        ]
        space = StateSpace.from_config(fig1)
        assert all(space.index(s) == n for n, s in enumerate(states))

    def test_absorbing_set(self, fig1):
        space = StateSpace.from_config(fig1)
        absorbing = [s for s, a in zip(space.states, space.absorbing) if a]
        assert absorbing == [LatticeState(b, 3) for b in range(5, 14)]
        assert is_absorbing(RealState(5.2, 5.0), fig1)
        assert not is_absorbing(RealState(4.9, 5.0), fig1)

    def test_allowed_actions(self, fig1):
        assert allowed_actions(LatticeState(0, 1), fig1) == {EH}
        assert allowed_actions(LatticeState(3, 3), fig1) == {EH}
        assert allowed_actions(LatticeState(3, 1), fig1) == {EH, ID}
        with pytest.raises(AbsorbingStateError):
            allowed_actions(LatticeState(6, 3), fig1)
