"""
Value iteration over the countable TS lattice.

The primary solver is an undiscounted stochastic shortest path: every
transient slot costs one, absorbing states cost nothing. The discounted
solver keeps the reward formulation (U = -1 until decoding) and is only
usable for discount factors that float64 can tell apart from one.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .absorption import mean_absorption_times
from .constants import (
    DEFAULT_MAX_ITER,
    DEFAULT_TIE_TOL,
    DEFAULT_TOL,
    MIN_DISCOUNT_GAP,
)
from .errors import AbsorbingStateError, ConvergenceError, DomainError
from .model import allowed_actions, is_absorbing, step_ts
from .policies import TabularPolicy, tabular_policy
from .types import EH, ID, BmaxReport, ChannelState, LatticeState, LinkConfig, TieBreak

logger = logging.getLogger(__name__)

Sweep = Literal["jacobi", "gauss-seidel"]


@dataclass(frozen=True)
class ValueTable:
    """
    Expected slots to absorption and per-action values on the lattice.

    Arrays are indexed [b, m_index]. q_id is NaN where decoding is not
    allowed; both q arrays are NaN on absorbing states. For a discounted
    solve, k holds -V so it reads as a (discounted) slot count.
    """
    cfg: LinkConfig
    k: np.ndarray
    q_eh: np.ndarray
    q_id: np.ndarray
    ties: np.ndarray
    iterations: int
    residual: float
    tie_tol: float
    beta: Optional[float] = None

    def __post_init__(self):
        for arr in (self.k, self.q_eh, self.q_id, self.ties):
            arr.setflags(write=False)

    def value(self, state: LatticeState) -> float:
        return float(self.k[state.b, state.m_index])

    @property
    def k00(self) -> float:
        return float(self.k[0, 0])

    @property
    def v(self) -> np.ndarray:
        """Discounted value function V = -k."""
        return -self.k

    def tie_states(self) -> list[LatticeState]:
        return [LatticeState(int(b), int(i)) for b, i in zip(*np.nonzero(self.ties))]


@dataclass(frozen=True)
class _Kernel:
    """Successor indices of both TS actions for every lattice cell."""
    eh_b: np.ndarray
    id_b: np.ndarray
    id_bad_i: np.ndarray
    cap: int
    id_allowed: np.ndarray
    absorbing: np.ndarray

    @classmethod
    def build(cls, cfg: LinkConfig) -> "_Kernel":
        b, i = np.meshgrid(
            np.arange(cfg.b_max + 1), np.arange(cfg.n_info_levels), indexing="ij"
        )
        cap = cfg.cap_index
        absorbing = (b >= cfg.e_d) & (i == cap)
        return cls(
            eh_b=np.minimum(b + cfg.e, cfg.b_max),
            id_b=np.maximum(b - 1, 0),
            id_bad_i=np.minimum(i + 1, cap),
            cap=cap,
            id_allowed=(b >= 1) & (i < cap) & ~absorbing,
            absorbing=absorbing,
        )

    def expected_next(self, k: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """E[k(next)] under EH and under ID (inf where ID is not allowed)."""
        cols = np.arange(k.shape[1])[None, :]
        eh = lam * k[self.eh_b, cols] + (1.0 - lam) * k
        id_ = lam * k[self.id_b, self.cap] + (1.0 - lam) * k[self.id_b, self.id_bad_i]
        return eh, np.where(self.id_allowed, id_, np.inf)


def _tie_mask(q_eh: np.ndarray, q_id: np.ndarray, tie_tol: float) -> np.ndarray:
    both = ~np.isnan(q_eh) & ~np.isnan(q_id)
    ties = np.zeros(q_eh.shape, dtype=bool)
    ties[both] = np.abs(q_eh[both] - q_id[both]) <= tie_tol
    return ties


def _finish(
    cfg: LinkConfig,
    kernel: _Kernel,
    k: np.ndarray,
    q_eh: np.ndarray,
    q_id: np.ndarray,
    iterations: int,
    residual: float,
    tie_tol: float,
    beta: Optional[float] = None,
) -> ValueTable:
    q_eh = np.where(kernel.absorbing, np.nan, q_eh)
    q_id = np.where(kernel.id_allowed, q_id, np.nan)
    return ValueTable(
        cfg=cfg,
        k=k,
        q_eh=q_eh,
        q_id=q_id,
        ties=_tie_mask(q_eh, q_id, tie_tol),
        iterations=iterations,
        residual=residual,
        tie_tol=tie_tol,
        beta=beta,
    )


def _gauss_seidel_sweep(k: np.ndarray, kernel: _Kernel, lam: float) -> float:
    """One in-place sweep in decreasing b, decreasing m order."""
    change = 0.0
    n_b, n_m = k.shape
    for b in range(n_b - 1, -1, -1):
        for i in range(n_m - 1, -1, -1):
            if kernel.absorbing[b, i]:
                continue
            best = 1.0 + lam * k[kernel.eh_b[b, i], i] + (1.0 - lam) * k[b, i]
            if kernel.id_allowed[b, i]:
                b1 = b - 1
                q_id = 1.0 + lam * k[b1, kernel.cap] + (1.0 - lam) * k[b1, kernel.id_bad_i[b, i]]
                best = min(best, q_id)
            change = max(change, abs(best - k[b, i]))
            k[b, i] = best
    return change


def value_iteration_ssp(
    cfg: LinkConfig,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    tie_tol: float = DEFAULT_TIE_TOL,
    sweep: Sweep = "jacobi",
) -> ValueTable:
    """
    Minimum expected number of slots to decoding from every lattice state.

    Starts from k = 0 and applies the Bellman operator until the sup-norm
    change drops to tol.

    Raises:
        DomainError: If tol is not positive or the sweep is unknown
        ConvergenceError: If max_iter sweeps do not reach tol
    """
    if tol <= 0:
        raise DomainError(f"Tolerance must be positive, got {tol}")
    if sweep not in ("jacobi", "gauss-seidel"):
        raise DomainError(f"Unknown sweep order '{sweep}'")

    kernel = _Kernel.build(cfg)
    lam = cfg.lambda_
    k = np.zeros(kernel.absorbing.shape)
    residual = np.inf

    for iteration in range(1, max_iter + 1):
        if sweep == "jacobi":
            eh, id_ = kernel.expected_next(k, lam)
            new_k = np.where(kernel.absorbing, 0.0, 1.0 + np.minimum(eh, id_))
            residual = float(np.max(np.abs(new_k - k)))
            k = new_k
        else:
            residual = _gauss_seidel_sweep(k, kernel, lam)
        if residual <= tol:
            break
    else:
        raise ConvergenceError(residual, max_iter)

    eh, id_ = kernel.expected_next(k, lam)
    q_eh, q_id = 1.0 + eh, 1.0 + id_
    bellman = np.where(kernel.absorbing, 0.0, np.minimum(q_eh, q_id))
    residual = float(np.max(np.abs(bellman - k)))
    logger.info(
        "SSP value iteration (%s) converged in %d sweeps, residual %.2e, k(0,0)=%.6f [%s]",
        sweep, iteration, residual, k[0, 0], cfg.label(),
    )
    return _finish(cfg, kernel, k, q_eh, q_id, iteration, residual, tie_tol)


def value_iteration_discounted(
    cfg: LinkConfig,
    beta: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    tie_tol: float = DEFAULT_TIE_TOL,
) -> ValueTable:
    """
    Discounted value iteration with reward 0 when decodable and -1 otherwise.

    Raises:
        DomainError: If beta is negative or too close to one for float64
        ConvergenceError: If max_iter sweeps do not reach tol
    """
    if not 0.0 <= beta < 1.0 - MIN_DISCOUNT_GAP:
        raise DomainError(
            f"Discount factor must lie in [0, 1 - 2^-52), got {beta!r}; "
            "use value_iteration_ssp for the undiscounted objective"
        )
    kernel = _Kernel.build(cfg)
    lam = cfg.lambda_
    v = np.zeros(kernel.absorbing.shape)
    residual = np.inf

    for iteration in range(1, max_iter + 1):
        # E[-V(next)] so that min over actions maximises V
        eh, id_ = kernel.expected_next(-v, lam)
        new_v = np.where(kernel.absorbing, 0.0, -1.0 - beta * np.minimum(eh, id_))
        residual = float(np.max(np.abs(new_v - v)))
        v = new_v
        if residual <= tol:
            break
    else:
        raise ConvergenceError(residual, max_iter)

    eh, id_ = kernel.expected_next(-v, lam)
    logger.info(
        "Discounted value iteration (beta=%r) converged in %d sweeps, -V(0,0)=%.6f",
        beta, iteration, -v[0, 0],
    )
    return _finish(
        cfg, kernel, -v, 1.0 + beta * eh, 1.0 + beta * id_,
        iteration, residual, tie_tol, beta=beta,
    )


def q_values(
    cfg: LinkConfig,
    vt: ValueTable,
    state: LatticeState,
) -> tuple[float, Optional[float]]:
    """
    Action values (q_eh, q_id) at a transient state; q_id is None if ID is not allowed.

    Raises:
        AbsorbingStateError: If the state is absorbing
    """
    if is_absorbing(state, cfg):
        raise AbsorbingStateError(state)
    lam = cfg.lambda_
    k = vt.value
    q_eh = (
        1.0
        + lam * k(step_ts(state, EH, ChannelState.GOOD, cfg))
        + (1.0 - lam) * k(step_ts(state, EH, ChannelState.BAD, cfg))
    )
    if ID not in allowed_actions(state, cfg):
        return q_eh, None
    q_id = (
        1.0
        + lam * k(step_ts(state, ID, ChannelState.GOOD, cfg))
        + (1.0 - lam) * k(step_ts(state, ID, ChannelState.BAD, cfg))
    )
    return q_eh, q_id


def extract_policy(vt: ValueTable, tie_break: TieBreak = TieBreak.PREFER_EH) -> TabularPolicy:
    """Greedy policy of a converged table with explicit tie handling."""
    return tabular_policy(vt, tie_break)


def decision_grid(vt: ValueTable, tie_break: TieBreak = TieBreak.MARK) -> np.ndarray:
    """b x m grid of ABSORB / EH / ID / TIE cells."""
    tie_break = TieBreak(tie_break)
    policy = extract_policy(vt, tie_break)
    grid = np.where(policy.rho_table == 0.0, "ID", "EH").astype(object)
    if tie_break is TieBreak.MARK:
        grid[vt.ties] = "TIE"
    grid[_Kernel.build(vt.cfg).absorbing] = "ABSORB"
    return grid


def deterministic_horizon(cfg: LinkConfig) -> int:
    """
    Shortest number of slots from (0, 0) to decoding when every slot is GOOD.

    Raises:
        DomainError: If lambda is not exactly one
    """
    if cfg.lambda_ != 1.0:
        raise DomainError("The deterministic horizon needs lambda = 1")
    start = LatticeState(0, 0)
    seen = {start: 0}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        if is_absorbing(state, cfg):
            return seen[state]
        for action in sorted(allowed_actions(state, cfg), key=lambda a: a.rho):
            nxt = step_ts(state, action, ChannelState.GOOD, cfg)
            if nxt not in seen:
                seen[nxt] = seen[state] + 1
                queue.append(nxt)
    raise DomainError(f"No decodable state reachable for {cfg.label()}")


def _exact_k00(cfg: LinkConfig, tol: float) -> float:
    vt = value_iteration_ssp(cfg, tol=tol)
    return mean_absorption_times(extract_policy(vt), cfg).value(LatticeState(0, 0))


def check_bmax_invariance(
    cfg: LinkConfig,
    margin: int = 1,
    tol: float = DEFAULT_TOL,
) -> BmaxReport:
    """
    Compare k(0,0) at b_max and at b_max + margin * e.

    Both values come from the exact evaluation of the greedy policy, so the
    comparison is not blurred by value-iteration truncation.
    """
    if margin < 1:
        raise DomainError(f"Margin must be at least 1, got {margin}")
    extended = cfg.with_b_max(cfg.b_max + margin * cfg.e)
    k_base = _exact_k00(cfg, tol)
    k_ext = _exact_k00(extended, tol)
    difference = abs(k_base - k_ext)
    report = BmaxReport(
        b_max=cfg.b_max,
        b_max_extended=extended.b_max,
        k_base=k_base,
        k_extended=k_ext,
        difference=difference,
        tolerance=10 * tol,
        passed=difference <= 10 * tol,
    )
    if not report.passed:
        logger.warning("k(0,0) depends on b_max=%d (diff %.3e)", cfg.b_max, difference)
    return report
