"""Rate splitting, the TS lattice and the one-step transition kernel."""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .constants import INFO_TOL
from .errors import AbsorbingStateError, DomainError
from .types import (
    EH,
    ID,
    Action,
    ChannelState,
    LatticeState,
    LinkConfig,
    RealState,
)

__all__ = [
    "Action",
    "ChannelState",
    "EH",
    "ID",
    "LatticeState",
    "LinkConfig",
    "RealState",
    "StateSpace",
    "allowed_actions",
    "draw_channel",
    "enumerate_states",
    "info_bits",
    "is_absorbing",
    "rate_split",
    "rate_split_array",
    "step_ps",
    "step_ps_array",
    "step_ts",
]


def rate_split(rho: float, cfg: LinkConfig) -> tuple[float, float]:
    """
    Mutual information per slot in GOOD and BAD state for a split ratio.

    Args:
        rho: Fraction of received power sent to the harvester
        cfg: Link configuration

    Returns:
        Tuple of (r_good, r_bad) in bits

    Raises:
        DomainError: If rho is outside [0, 1]
    """
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"Split ratio must lie in [0, 1], got {rho}")
    if rho == 0.0:
        return cfg.r1, cfg.r2
    r_good = math.log2(rho + (1.0 - rho) * 2.0 ** cfg.r1)
    r_bad = math.log2(rho + (1.0 - rho) * 2.0 ** cfg.r2)
    return r_good, r_bad


def rate_split_array(rho: np.ndarray, cfg: LinkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised rate_split without domain checks."""
    rho = np.asarray(rho, dtype=float)
    pure_id = rho == 0.0
    r_good = np.where(pure_id, cfg.r1, np.log2(rho + (1.0 - rho) * 2.0 ** cfg.r1))
    r_bad = np.where(pure_id, cfg.r2, np.log2(rho + (1.0 - rho) * 2.0 ** cfg.r2))
    return r_good, r_bad


def info_bits(m_index: int, cfg: LinkConfig) -> float:
    """Bits held at a lattice index."""
    if m_index >= cfg.cap_index:
        return cfg.r1
    return m_index * cfg.r2


def is_absorbing(state: Union[LatticeState, RealState], cfg: LinkConfig) -> bool:
    """Decoding succeeds once b >= e_d and all r1 bits are collected."""
    if isinstance(state, LatticeState):
        return state.b >= cfg.e_d and state.m_index >= cfg.cap_index
    return state.b >= cfg.e_d and state.m >= cfg.r1 - INFO_TOL


def _cap_info(m: float, cfg: LinkConfig) -> float:
    return cfg.r1 if m >= cfg.r1 - INFO_TOL else m


def step_ts(
    state: LatticeState,
    action: Action,
    channel: ChannelState,
    cfg: LinkConfig,
) -> LatticeState:
    """
    Advance the TS lattice chain by one slot.

    Raises:
        DomainError: If the action is not pure EH/ID, or ID is taken with b < 1
        AbsorbingStateError: If the state is already absorbing
    """
    if action.rho not in (0.0, 1.0):
        raise DomainError(f"TS step needs rho in {{0, 1}}, got {action.rho}")
    if is_absorbing(state, cfg):
        raise AbsorbingStateError(state)

    good = channel is ChannelState.GOOD
    if action.is_eh:
        b = min(state.b + cfg.e, cfg.b_max) if good else state.b
        return LatticeState(b, state.m_index)

    if state.b < 1:
        raise DomainError(f"Decoding needs one energy unit, battery is {state.b}")
    m_index = cfg.cap_index if good else min(state.m_index + 1, cfg.cap_index)
    return LatticeState(state.b - 1, m_index)


def step_ps(
    state: RealState,
    rho: float,
    channel: ChannelState,
    cfg: LinkConfig,
) -> RealState:
    """
    Advance the continuous power-splitting dynamics by one slot.

    Raises:
        DomainError: If rho is outside [0, 1] or the transceiver runs with b < 1
        AbsorbingStateError: If the state is already absorbing
    """
    r_good, r_bad = rate_split(rho, cfg)
    if is_absorbing(state, cfg):
        raise AbsorbingStateError(state)
    spend = 0.0 if rho == 1.0 else 1.0
    if spend and state.b < 1:
        raise DomainError(f"Decoding needs one energy unit, battery is {state.b}")

    if channel is ChannelState.GOOD:
        b = min(state.b + rho * cfg.e - spend, cfg.b_max)
        m = _cap_info(min(state.m + r_good, cfg.r1), cfg)
    else:
        b = state.b - spend
        m = _cap_info(min(state.m + r_bad, cfg.r1), cfg)
    return RealState(b, m)


def step_ps_array(
    b: np.ndarray,
    m: np.ndarray,
    rho: np.ndarray,
    good: np.ndarray,
    cfg: LinkConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised step_ps for many episodes; callers enforce the guards."""
    r_good, r_bad = rate_split_array(rho, cfg)
    spend = (rho != 1.0).astype(float)
    b_next = np.where(good, np.minimum(b + rho * cfg.e - spend, cfg.b_max), b - spend)
    m_next = np.minimum(m + np.where(good, r_good, r_bad), cfg.r1)
    m_next = np.where(m_next >= cfg.r1 - INFO_TOL, cfg.r1, m_next)
    return b_next, m_next


def enumerate_states(cfg: LinkConfig) -> list[LatticeState]:
    """All lattice states, row-major in b then m."""
    return [
        LatticeState(b, i)
        for b in range(cfg.b_max + 1)
        for i in range(cfg.n_info_levels)
    ]


@dataclass(frozen=True)
class StateSpace:
    """Enumerated lattice with absorbing flags and a state -> row lookup."""
    cfg: LinkConfig
    states: tuple[LatticeState, ...]
    absorbing: tuple[bool, ...]

    @classmethod
    def from_config(cls, cfg: LinkConfig) -> "StateSpace":
        states = tuple(enumerate_states(cfg))
        return cls(cfg, states, tuple(is_absorbing(s, cfg) for s in states))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cfg.b_max + 1, self.cfg.n_info_levels

    def index(self, state: LatticeState) -> int:
        return state.b * self.cfg.n_info_levels + state.m_index

    @property
    def transient(self) -> list[LatticeState]:
        return [s for s, a in zip(self.states, self.absorbing) if not a]


def allowed_actions(state: LatticeState, cfg: LinkConfig) -> frozenset[Action]:
    """
    TS actions available at a transient lattice state.

    Harvesting is forced when the battery cannot power the transceiver or
    the information is already complete.
    """
    if is_absorbing(state, cfg):
        raise AbsorbingStateError(state)
    if state.b < 1 or state.m_index >= cfg.cap_index:
        return frozenset({EH})
    return frozenset({EH, ID})


def draw_channel(rng: np.random.Generator, cfg: LinkConfig) -> ChannelState:
    return ChannelState.GOOD if rng.random() < cfg.lambda_ else ChannelState.BAD
