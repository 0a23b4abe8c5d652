"""
Decision rules mapping a (b, m) state to a split ratio.

Every policy applies the forced-harvest guards itself: with less than one
energy unit, or with all r1 bits already collected, the receiver harvests.
"""

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Any, Optional, Union

import numpy as np

from .constants import INFO_TOL
from .errors import DomainError
from .model import info_bits
from .types import LatticeState, LinkConfig, RealState, TieBreak

if TYPE_CHECKING:
    from .solver import ValueTable

SlotIndex = Union[int, np.ndarray]


class Policy(ABC):
    """Base class for all decision rules."""

    name: str = "policy"

    def __init__(self, cfg: LinkConfig):
        self.cfg = cfg

    @property
    def params(self) -> dict[str, Any]:
        return {}

    @property
    def spec(self) -> str:
        """Short spec string, e.g. "bf:threshold=6"."""
        if not self.params:
            return self.name
        args = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}:{args}"

    @abstractmethod
    def _choose(
        self,
        b: np.ndarray,
        m: np.ndarray,
        slot: SlotIndex,
        rng: Optional[np.random.Generator],
    ) -> np.ndarray:
        """Raw split ratios before the forced-harvest guards."""

    def decide_batch(
        self,
        b: np.ndarray,
        m: np.ndarray,
        slot: SlotIndex = 0,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        m = np.asarray(m, dtype=float)
        raw = np.broadcast_to(np.asarray(self._choose(b, m, slot, rng), dtype=float), b.shape)
        forced = (b < 1.0) | (m >= self.cfg.r1 - INFO_TOL)
        return np.where(forced, 1.0, raw)

    def decide(
        self,
        state: RealState,
        rng: Optional[np.random.Generator] = None,
        slot: int = 0,
    ) -> float:
        rho = self.decide_batch(np.array([state.b]), np.array([state.m]), slot, rng)
        return float(rho[0])

    def eh_probability(self, state: LatticeState) -> float:
        """
        Probability of choosing EH at a lattice state.

        Raises:
            DomainError: If the policy splits power at this state
        """
        rho = self.decide(RealState(float(state.b), info_bits(state.m_index, self.cfg)))
        if rho not in (0.0, 1.0):
            raise DomainError(f"{self.spec} splits power at {state}; not a TS policy")
        return rho

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spec}>"


class BatteryFirstPolicy(Policy):
    """Harvest until the battery reaches a threshold, then decode."""

    name = "bf"

    def __init__(self, cfg: LinkConfig, threshold: int):
        super().__init__(cfg)
        if not 1 <= threshold <= cfg.b_max:
            raise DomainError(f"BF threshold must lie in [1, {cfg.b_max}], got {threshold}")
        self.threshold = threshold

    @property
    def params(self) -> dict[str, Any]:
        return {"threshold": self.threshold}

    def _choose(self, b, m, slot, rng):
        return np.where(b < self.threshold, 1.0, 0.0)


class InformationFirstPolicy(Policy):
    """Decode whenever the transceiver can run."""

    name = "if"

    def _choose(self, b, m, slot, rng):
        return np.zeros_like(b)


class CoinTossPolicy(Policy):
    """Decode above e_d + 1 energy units, toss a fair coin below."""

    name = "ct"

    def _choose(self, b, m, slot, rng):
        if rng is None:
            raise DomainError("Coin toss policy needs a randomness source")
        coin = np.where(rng.random(b.shape) < 0.5, 1.0, 0.0)
        return np.where(b >= self.cfg.e_d + 1, 0.0, coin)

    def eh_probability(self, state: LatticeState) -> float:
        if state.b < 1 or state.m_index >= self.cfg.cap_index:
            return 1.0
        if state.b >= self.cfg.e_d + 1:
            return 0.0
        return 0.5


class TabularPolicy(Policy):
    """Lookup of VIA-optimal TS actions, flooring real states onto the lattice."""

    name = "tabular"

    def __init__(self, cfg: LinkConfig, rho_table: np.ndarray, tie_break: TieBreak):
        super().__init__(cfg)
        self.rho_table = rho_table
        self.rho_table.setflags(write=False)
        self.tie_break = tie_break

    @property
    def params(self) -> dict[str, Any]:
        return {"tie_break": self.tie_break.value}

    def lattice_index(self, b: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cap = self.cfg.cap_index
        b_idx = np.clip(np.floor(b), 0, self.cfg.b_max).astype(int)
        m_floor = np.clip(np.floor(m / self.cfg.r2 + INFO_TOL), 0, cap - 1).astype(int)
        m_idx = np.where(m >= self.cfg.r1 - INFO_TOL, cap, m_floor)
        return b_idx, m_idx

    def _choose(self, b, m, slot, rng):
        b_idx, m_idx = self.lattice_index(b, m)
        return self.rho_table[b_idx, m_idx]


class FirstSlotPolicy(Policy):
    """Take a fixed split in the first slot of an episode, then delegate."""

    name = "first_slot"

    def __init__(self, rho0: float, continuation: Policy):
        super().__init__(continuation.cfg)
        if not 0.0 <= rho0 <= 1.0:
            raise DomainError(f"Split ratio must lie in [0, 1], got {rho0}")
        self.rho0 = rho0
        self.continuation = continuation

    @property
    def params(self) -> dict[str, Any]:
        return {"rho": self.rho0, "then": self.continuation.spec}

    def _choose(self, b, m, slot, rng):
        if np.isscalar(slot):
            if slot == 0:
                return np.full_like(b, self.rho0)
            return self.continuation.decide_batch(b, m, slot, rng)
        rest = self.continuation.decide_batch(b, m, slot, rng)
        return np.where(np.asarray(slot) == 0, self.rho0, rest)

    def eh_probability(self, state: LatticeState) -> float:
        raise DomainError(f"{self.spec} depends on the slot index, not only the state")


class SplitOncePolicy(FirstSlotPolicy):
    name = "split_once"


def bf_policy(cfg: LinkConfig, threshold: Optional[int] = None) -> Policy:
    """Battery First; the threshold defaults to e_d + 1."""
    return BatteryFirstPolicy(cfg, cfg.e_d + 1 if threshold is None else threshold)


def if_policy(cfg: LinkConfig) -> Policy:
    """Information First."""
    return InformationFirstPolicy(cfg)


def ct_policy(cfg: LinkConfig) -> Policy:
    """Coin Toss over the tie region 1 <= b <= e_d."""
    return CoinTossPolicy(cfg)


def tabular_policy(vt: "ValueTable", tie_break: TieBreak = TieBreak.PREFER_EH) -> Policy:
    """
    Executable policy from a converged value table.

    MARK keeps the tie set on the table and resolves ties to EH.
    """
    tie_break = TieBreak(tie_break)
    q_eh, q_id = vt.q_eh, vt.q_id
    id_allowed = ~np.isnan(q_id)
    prefer_id = np.zeros_like(q_eh, dtype=bool)
    prefer_id[id_allowed] = q_id[id_allowed] < q_eh[id_allowed]
    if tie_break is TieBreak.PREFER_ID:
        prefer_id |= vt.ties & id_allowed
    else:
        prefer_id &= ~vt.ties
    return TabularPolicy(vt.cfg, np.where(prefer_id, 0.0, 1.0), tie_break)


def split_once_policy(rho0: float, continuation: Policy) -> Policy:
    """Split at rho0 in the first slot only, then follow the continuation."""
    if not 0.0 < rho0 < 1.0:
        raise DomainError(f"A split needs 0 < rho < 1, got {rho0}")
    return SplitOncePolicy(rho0, continuation)


def decode_once_policy(continuation: Policy) -> Policy:
    """Decode in the first slot, then follow the continuation."""
    return FirstSlotPolicy(0.0, continuation)


def parse_policy_spec(
    spec: str,
    cfg: LinkConfig,
    vt: Optional["ValueTable"] = None,
) -> Policy:
    """
    Build a policy from a spec string.

    Accepted forms: "bf", "bf:threshold=6", "if", "ct",
    "tabular", "tabular:tie_break=prefer-id".
    """
    name, _, arg_text = spec.strip().partition(":")
    args: dict[str, str] = {}
    for part in filter(None, (p.strip() for p in arg_text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise DomainError(f"Malformed policy argument '{part}' in '{spec}'")
        args[key.strip()] = value.strip()

    name = name.lower()
    if name == "bf":
        threshold = args.pop("threshold", None)
        policy = bf_policy(cfg, int(threshold) if threshold is not None else None)
    elif name == "if":
        policy = if_policy(cfg)
    elif name == "ct":
        policy = ct_policy(cfg)
    elif name == "tabular":
        tie_break = TieBreak(args.pop("tie_break", TieBreak.PREFER_EH.value))
        if vt is None:
            from .solver import value_iteration_ssp

            vt = value_iteration_ssp(cfg)
        policy = tabular_policy(vt, tie_break)
    else:
        raise DomainError(f"Unknown policy '{name}' in '{spec}'")

    if args:
        raise DomainError(f"Unused policy arguments {sorted(args)} in '{spec}'")
    return policy

