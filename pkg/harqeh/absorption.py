"""
Absorbing-chain analysis of fixed TS policies.

Mean time to absorption solves (I - Q) k = 1 over the transient states,
Q being the transient-to-transient block of the policy's transition
matrix. The one-step deviation helpers compare a slot of power splitting
against a slot of pure decoding, both followed by the same continuation.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Optional, Protocol, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .constants import ABSORPTION_RESIDUAL_TOL, DEFAULT_SEED, INFO_TOL
from .errors import AbsorbingStateError, DomainError, ImproperPolicyError
from .model import StateSpace, allowed_actions, info_bits, is_absorbing, step_ts
from .montecarlo import simulate_counts
from .policies import Policy, decode_once_policy, split_once_policy
from .types import (
    EH,
    ID,
    ChannelState,
    DeviationGap,
    LatticeState,
    LinkConfig,
    RealState,
)

logger = logging.getLogger(__name__)


class StateValues(Protocol):
    def value(self, state: LatticeState) -> float: ...


@dataclass(frozen=True)
class AbsorptionTable:
    """Mean steps to absorption of one policy, indexed [b, m_index]."""
    cfg: LinkConfig
    k: np.ndarray
    policy_id: str

    def __post_init__(self):
        self.k.setflags(write=False)

    def value(self, state: LatticeState) -> float:
        return float(self.k[state.b, state.m_index])


def _transitions(
    policy: Policy,
    state: LatticeState,
    cfg: LinkConfig,
) -> list[tuple[LatticeState, float]]:
    p_eh = policy.eh_probability(state)
    branches = []
    for action, weight in ((EH, p_eh), (ID, 1.0 - p_eh)):
        if weight == 0.0:
            continue
        if action not in allowed_actions(state, cfg):
            raise DomainError(f"{policy.spec} decodes at {state} where it is not allowed")
        for channel, p in ((ChannelState.GOOD, cfg.lambda_), (ChannelState.BAD, 1.0 - cfg.lambda_)):
            if p > 0.0:
                branches.append((step_ts(state, action, channel, cfg), weight * p))
    return branches


def _trapped_states(
    transient: Sequence[LatticeState],
    edges: dict[LatticeState, list[LatticeState]],
    exits: set[LatticeState],
) -> list[LatticeState]:
    """Transient states with no positive-probability path to absorption."""
    reverse: dict[LatticeState, list[LatticeState]] = {s: [] for s in transient}
    for src, dsts in edges.items():
        for dst in dsts:
            reverse[dst].append(src)
    reached = set(exits)
    queue = deque(exits)
    while queue:
        for src in reverse[queue.popleft()]:
            if src not in reached:
                reached.add(src)
                queue.append(src)
    return [s for s in transient if s not in reached]


def mean_absorption_times(policy: Policy, cfg: LinkConfig) -> AbsorptionTable:
    """
    Exact mean time to absorption from every lattice state under a TS policy.

    Randomised policies mix the EH and ID rows by their probabilities.

    Raises:
        ImproperPolicyError: If some transient state never reaches absorption
    """
    space = StateSpace.from_config(cfg)
    transient = space.transient
    row = {s: i for i, s in enumerate(transient)}
    n = len(transient)
    q = np.zeros((n, n))
    edges: dict[LatticeState, list[LatticeState]] = {}
    exits: set[LatticeState] = set()

    for state in transient:
        edges[state] = []
        for nxt, p in _transitions(policy, state, cfg):
            if is_absorbing(nxt, cfg):
                exits.add(state)
            else:
                q[row[state], row[nxt]] += p
                edges[state].append(nxt)

    trapped = _trapped_states(transient, edges, exits)
    if trapped:
        shown = ", ".join(f"({s.b},{s.m_index})" for s in trapped[:8])
        raise ImproperPolicyError(
            f"{policy.spec} never decodes from {len(trapped)} state(s): {shown}",
            states=trapped,
        )

    system = np.eye(n) - q
    k_transient = lu_solve(lu_factor(system), np.ones(n))
    residual = float(np.max(np.abs(system @ k_transient - 1.0)))
    if residual > ABSORPTION_RESIDUAL_TOL:
        raise ImproperPolicyError(
            f"Linear solve for {policy.spec} left residual {residual:.2e}"
        )
    logger.debug("Absorption solve for %s: %d transient states, residual %.1e",
                  policy.spec, n, residual)

    k = np.zeros(space.shape)
    for state, value in zip(transient, k_transient):
        k[state.b, state.m_index] = value
    return AbsorptionTable(cfg=cfg, k=k, policy_id=policy.spec)


def lemma1_closed_form(b: float, cfg: LinkConfig) -> float:
    """
    Mean time to absorption with complete information and battery b < e_d.

    Each GOOD slot adds e units, so i = ceil((e_d - b) / e) GOOD slots are
    needed, each taking 1/lambda slots on average.

    Raises:
        AbsorbingStateError: If b >= e_d
        DomainError: If b is negative
    """
    if b < 0:
        raise DomainError(f"Battery must be non-negative, got {b}")
    if b >= cfg.e_d:
        raise AbsorbingStateError(RealState(float(b), cfg.r1))
    i = math.ceil((cfg.e_d - b) / cfg.e - INFO_TOL)
    return i / cfg.lambda_


def _lemma1_or_zero(b: float, cfg: LinkConfig) -> float:
    return 0.0 if b >= cfg.e_d else lemma1_closed_form(b, cfg)


def _check_deviation_state(state: LatticeState, rho: float, cfg: LinkConfig) -> None:
    if rho in (0.0, 1.0):
        raise DomainError(f"rho={rho} is a TS action, not a split")
    if not 0.0 < rho < 1.0:
        raise DomainError(f"Split ratio must lie in (0, 1), got {rho}")
    if is_absorbing(state, cfg):
        raise AbsorbingStateError(state)
    if state.b < 1 or state.m_index >= cfg.cap_index:
        raise DomainError(f"No deviation possible at {state}: harvesting is forced")


class DeviationBound(NamedTuple):
    """Lower bound on the split arm next to the decode arm, both exact."""
    bound: float
    decode_value: float
    same_band: bool


def deviation_lower_bound(
    state: LatticeState,
    rho: float,
    table: StateValues,
    cfg: LinkConfig,
) -> DeviationBound:
    """
    Lower bound on a split slot followed by the table's policy.

    A GOOD split slot is bounded below by completing the information with
    battery b - 1 + rho*e (closed form), a BAD one by a full r2 of
    information at battery b - 1. Decoding instead gives the table value at
    (b - 1, r1) in the GOOD branch. The two coincide when b - 1 and
    b - 1 + rho*e need the same number of harvests, which always holds for
    e = 1.
    """
    _check_deviation_state(state, rho, cfg)
    lam = cfg.lambda_
    b_split = state.b - 1 + rho * cfg.e
    after_bad = table.value(LatticeState(state.b - 1, min(state.m_index + 1, cfg.cap_index)))
    bound = 1.0 + lam * _lemma1_or_zero(b_split, cfg) + (1.0 - lam) * after_bad
    decode = (
        1.0
        + lam * table.value(LatticeState(state.b - 1, cfg.cap_index))
        + (1.0 - lam) * after_bad
    )
    same_band = _lemma1_or_zero(b_split, cfg) == _lemma1_or_zero(state.b - 1, cfg)
    return DeviationBound(bound, decode, same_band)


def _paired_gap(
    state: RealState,
    rho: float,
    split_counts: np.ndarray,
    decode_counts: np.ndarray,
) -> DeviationGap:
    diff = split_counts.astype(float) - decode_counts.astype(float)
    n = diff.size
    stderr = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return DeviationGap(
        b=state.b,
        m=state.m,
        rho=rho,
        gap=float(diff.mean()),
        stderr=stderr,
        split_mean=float(split_counts.mean()),
        decode_mean=float(decode_counts.mean()),
        n_rollouts=n,
    )


def _cell_seed(master_seed: int, state: LatticeState) -> int:
    seq = np.random.SeedSequence([master_seed, state.b, state.m_index])
    return int(seq.generate_state(1)[0])


def one_step_deviation_gap(
    state: LatticeState,
    rho: float,
    continuation: Policy,
    cfg: LinkConfig,
    n_rollouts: int = 1_000_000,
    seed: int = DEFAULT_SEED,
    lanes: int = 1,
) -> DeviationGap:
    """
    Split arm minus decode arm from a transient state, by paired rollouts.

    Both arms follow the continuation after the first slot and run on the
    same episode streams, so the difference has low variance.

    Raises:
        DomainError: If rho is 0 or 1, or harvesting is forced at the state
    """
    _check_deviation_state(state, rho, cfg)
    start = RealState(float(state.b), info_bits(state.m_index, cfg))
    cell_seed = _cell_seed(seed, state)
    split = simulate_counts(
        split_once_policy(rho, continuation), cfg, n_rollouts, cell_seed, start, lanes
    )
    decode = simulate_counts(
        decode_once_policy(continuation), cfg, n_rollouts, cell_seed, start, lanes
    )
    return _paired_gap(start, rho, split, decode)


def deviation_states(cfg: LinkConfig) -> list[LatticeState]:
    """Transient states where both a split and a decode slot are possible."""
    return [
        s for s in StateSpace.from_config(cfg).transient
        if s.b >= 1 and s.m_index < cfg.cap_index
    ]


def deviation_sweep(
    cfg: LinkConfig,
    continuation: Policy,
    rhos: Iterable[float],
    n_rollouts: int,
    seed: int = DEFAULT_SEED,
    states: Optional[Sequence[LatticeState]] = None,
    lanes: int = 1,
    on_cell: Optional[Callable[[], None]] = None,
) -> list[DeviationGap]:
    """
    One-step deviation gaps over states x rho.

    Cell seeds derive from (seed, state), so results do not depend on the
    order cells are visited in; the decode arm is simulated once per state.
    """
    rhos = list(rhos)
    results: list[DeviationGap] = []
    for state in states if states is not None else deviation_states(cfg):
        start = RealState(float(state.b), info_bits(state.m_index, cfg))
        cell_seed = _cell_seed(seed, state)
        decode = simulate_counts(
            decode_once_policy(continuation), cfg, n_rollouts, cell_seed, start, lanes
        )
        for rho in rhos:
            _check_deviation_state(state, rho, cfg)
            split = simulate_counts(
                split_once_policy(rho, continuation), cfg, n_rollouts, cell_seed, start, lanes
            )
            results.append(_paired_gap(start, rho, split, decode))
            if on_cell is not None:
                on_cell()
    return results
