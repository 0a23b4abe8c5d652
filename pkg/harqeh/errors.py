"""Exceptions raised by the harq-eh toolkit."""

from typing import Any, Iterable, Optional


class HarqError(Exception):
    """Base class for all toolkit errors."""


class DomainError(HarqError, ValueError):
    """An argument lies outside the domain of an operation."""


class AbsorbingStateError(HarqError, ValueError):
    """An operation was asked to act on an absorbing state."""

    def __init__(self, state: Any):
        self.state = state
        super().__init__(f"State {state} is absorbing")


class ConvergenceError(HarqError, RuntimeError):
    """Value iteration did not reach the requested tolerance."""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"No convergence after {iterations} iterations (residual {residual:.3e})"
        )


class ImproperPolicyError(HarqError, RuntimeError):
    """A policy fails to reach absorption from some state or episode."""

    def __init__(
        self,
        message: str,
        states: Optional[Iterable[Any]] = None,
        episode_index: Optional[int] = None,
    ):
        self.states = list(states) if states is not None else []
        self.episode_index = episode_index
        super().__init__(message)
