"""
Monte Carlo simulation of HARQ-IR episodes on the continuous dynamics.

Episodes are simulated in fixed blocks of BLOCK_SIZE. Block j draws its
randomness from SeedSequence(master_seed, spawn_key=(j,)), split into a
channel stream and a policy stream, so an episode's trajectory depends
only on the master seed and its index. Counts are integers and are summed
exactly, which keeps estimates bit-identical for any number of lanes.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, Optional

import numpy as np

from .constants import BLOCK_SIZE, INFO_TOL, SLOT_CAP, Z_95
from .errors import DomainError, ImproperPolicyError
from .model import draw_channel, is_absorbing, step_ps, step_ps_array
from .policies import Policy
from .types import EstimateResult, LinkConfig, RealState

logger = logging.getLogger(__name__)

ORIGIN = RealState(0.0, 0.0)


def run_episode(
    policy: Policy,
    cfg: LinkConfig,
    rng: np.random.Generator,
    start: RealState = ORIGIN,
    slot_cap: int = SLOT_CAP,
) -> int:
    """
    Simulate one episode slot by slot and return its length.

    Raises:
        ImproperPolicyError: If the episode is still running after slot_cap slots
    """
    state = start
    slots = 0
    while not is_absorbing(state, cfg):
        if slots >= slot_cap:
            raise ImproperPolicyError(
                f"{policy.spec} did not decode within {slot_cap} slots", episode_index=0
            )
        channel = draw_channel(rng, cfg)
        rho = policy.decide(state, rng, slot=slots)
        state = step_ps(state, rho, channel, cfg)
        slots += 1
    return slots


def block_streams(master_seed: int, block: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Channel and policy generators of one block."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(block,))
    channel_seq, policy_seq = seq.spawn(2)
    return np.random.default_rng(channel_seq), np.random.default_rng(policy_seq)


def _absorbed(b: np.ndarray, m: np.ndarray, cfg: LinkConfig) -> np.ndarray:
    return (b >= cfg.e_d) & (m >= cfg.r1 - INFO_TOL)


def simulate_block(
    policy: Policy,
    cfg: LinkConfig,
    master_seed: int,
    block: int,
    start: RealState = ORIGIN,
    slot_cap: int = SLOT_CAP,
) -> np.ndarray:
    """
    Episode lengths of one block of BLOCK_SIZE episodes.

    The policy and the channel are queried for the whole block every slot,
    finished episodes included, so two policies run on the same block see
    the same random numbers slot for slot.
    """
    channel_rng, policy_rng = block_streams(master_seed, block)
    b = np.full(BLOCK_SIZE, float(start.b))
    m = np.full(BLOCK_SIZE, float(start.m))
    counts = np.zeros(BLOCK_SIZE, dtype=np.int64)
    active = ~_absorbed(b, m, cfg)
    slot = 0

    while active.any():
        if slot >= slot_cap:
            first = int(np.argmax(active))
            raise ImproperPolicyError(
                f"{policy.spec} did not decode within {slot_cap} slots "
                f"(episode {block * BLOCK_SIZE + first})",
                episode_index=block * BLOCK_SIZE + first,
            )
        good = channel_rng.random(BLOCK_SIZE) < cfg.lambda_
        rho = policy.decide_batch(b, m, slot, policy_rng)
        b_next, m_next = step_ps_array(b, m, rho, good, cfg)
        b = np.where(active, b_next, b)
        m = np.where(active, m_next, m)
        counts += active
        active &= ~_absorbed(b, m, cfg)
        slot += 1
    return counts


def _n_blocks(n_episodes: int) -> int:
    return math.ceil(n_episodes / BLOCK_SIZE)


def _map_blocks(
    fn: Callable[[int], object],
    n_blocks: int,
    lanes: int,
) -> Iterator:
    if lanes <= 1:
        return map(fn, range(n_blocks))
    pool = ThreadPoolExecutor(max_workers=lanes)
    try:
        return iter(list(pool.map(fn, range(n_blocks))))
    finally:
        pool.shutdown(wait=True)


def simulate_counts(
    policy: Policy,
    cfg: LinkConfig,
    n_episodes: int,
    master_seed: int,
    start: RealState = ORIGIN,
    lanes: int = 1,
    slot_cap: int = SLOT_CAP,
) -> np.ndarray:
    """Per-episode lengths in episode-index order."""
    if n_episodes < 1:
        raise DomainError(f"Need at least one episode, got {n_episodes}")

    def run(block: int) -> np.ndarray:
        return simulate_block(policy, cfg, master_seed, block, start, slot_cap)

    counts = np.concatenate(list(_map_blocks(run, _n_blocks(n_episodes), lanes)))
    return counts[:n_episodes]


def estimate(
    policy: Policy,
    cfg: LinkConfig,
    n_episodes: int,
    master_seed: int,
    lanes: int = 1,
    start: RealState = ORIGIN,
    slot_cap: int = SLOT_CAP,
    on_progress: Optional[Callable[[int], None]] = None,
) -> EstimateResult:
    """
    Sample mean of the episode length with standard error and 95% interval.

    Args:
        policy: Policy to follow
        cfg: Link configuration
        n_episodes: Number of episodes (>= 1)
        master_seed: Seed every episode stream is derived from
        lanes: Worker threads; does not change the result
        start: Initial state
        slot_cap: Per-episode slot limit
        on_progress: Called with the number of episodes finished per block

    Returns:
        EstimateResult

    Raises:
        ImproperPolicyError: With the index of the first episode that hit the cap
    """
    if n_episodes < 1:
        raise DomainError(f"Need at least one episode, got {n_episodes}")
    n_blocks = _n_blocks(n_episodes)

    def run(block: int) -> tuple[int, int]:
        counts = simulate_block(policy, cfg, master_seed, block, start, slot_cap)
        take = min(BLOCK_SIZE, n_episodes - block * BLOCK_SIZE)
        counts = counts[:take]
        if on_progress is not None:
            on_progress(take)
        return int(counts.sum()), int(np.square(counts).sum())

    total = 0
    total_sq = 0
    for block_sum, block_sq in _map_blocks(run, n_blocks, lanes):
        total += block_sum
        total_sq += block_sq

    n = n_episodes
    mean = total / n
    if n > 1:
        variance = (n * total_sq - total * total) / (n * (n - 1))
        stderr = math.sqrt(max(variance, 0.0) / n)
    else:
        stderr = 0.0
    logger.info(
        "%s: mean %.6f +- %.6f over %d episodes (seed %d, %d lanes)",
        policy.spec, mean, stderr, n, master_seed, lanes,
    )
    return EstimateResult(
        mean=mean,
        stderr=stderr,
        ci95=(mean - Z_95 * stderr, mean + Z_95 * stderr),
        n_episodes=n,
        master_seed=master_seed,
        policy_spec=policy.spec,
    )
