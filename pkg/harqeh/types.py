"""Type definitions for the HARQ-IR energy harvesting model."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator

from .constants import INFO_TOL


class LinkConfig(BaseModel):
    """Physical parameters of the point-to-point link."""
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    lambda_: float = Field(
        gt=0.0,
        le=1.0,
        validation_alias=AliasChoices("lambda", "lambda_"),
        serialization_alias="lambda",
    )
    r1: float = Field(gt=0.0)
    r2: float = Field(gt=0.0)
    e: int = Field(ge=1)
    e_d: int = Field(ge=1, validation_alias=AliasChoices("e_d", "ed"))
    b_max: Optional[int] = Field(None, validation_alias=AliasChoices("b_max", "bmax"))

    @model_validator(mode="before")
    @classmethod
    def _default_b_max(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            b_max = data.get("b_max", data.get("bmax"))
            if b_max is None:
                data.pop("bmax", None)
                e = data.get("e")
                e_d = data.get("e_d", data.get("ed"))
                if e is not None and e_d is not None:
                    data["b_max"] = int(e_d) + 4 * int(e)
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "LinkConfig":
        if self.r2 > self.r1:
            raise ValueError(f"r2 ({self.r2}) must not exceed r1 ({self.r1})")
        if self.b_max is None or self.b_max < self.e_d + self.e:
            raise ValueError(
                f"b_max ({self.b_max}) must be at least e_d + e = {self.e_d + self.e}"
            )
        return self

    @property
    def good_snr(self) -> float:
        """P*|g1|^2, the GOOD-state gain product."""
        return 2.0 ** self.r1 - 1.0

    @property
    def bad_snr(self) -> float:
        """P*|g0|^2, the BAD-state gain product."""
        return 2.0 ** self.r2 - 1.0

    @property
    def cap_index(self) -> int:
        """Lattice index of m = r1 (number of r2 multiples below r1)."""
        return math.ceil(self.r1 / self.r2 - INFO_TOL)

    @property
    def n_info_levels(self) -> int:
        return self.cap_index + 1

    def label(self) -> str:
        return (
            f"lambda={self.lambda_:g},r1={self.r1:g},r2={self.r2:g},"
            f"e={self.e},e_d={self.e_d},b_max={self.b_max}"
        )

    def with_b_max(self, b_max: int) -> "LinkConfig":
        return LinkConfig.model_validate({**self.model_dump(), "b_max": b_max})


class ChannelState(Enum):
    """Per-slot channel state, i.i.d. with P[GOOD] = lambda."""
    BAD = 0
    GOOD = 1


class TieBreak(str, Enum):
    """How equal-valued EH/ID choices are resolved."""
    PREFER_EH = "prefer-eh"
    PREFER_ID = "prefer-id"
    MARK = "mark"


@dataclass(frozen=True)
class Action:
    """Power split ratio: 1 is pure energy harvesting, 0 pure decoding."""
    rho: float

    @property
    def is_eh(self) -> bool:
        return self.rho == 1.0


EH = Action(1.0)
ID = Action(0.0)


@dataclass(frozen=True, order=True)
class LatticeState:
    """A state of the countable TS chain; m is kept as a lattice index."""
    b: int
    m_index: int


@dataclass(frozen=True)
class RealState:
    """A continuous (b, m) state reached under power splitting."""
    b: float
    m: float


class EstimateResult(BaseModel):
    """Monte Carlo estimate of the expected number of re-transmissions."""
    mean: float
    stderr: float
    ci95: tuple[float, float]
    n_episodes: int
    master_seed: int
    policy_spec: str


class DeviationGap(BaseModel):
    """Split-once arm minus decode arm, from paired rollouts."""
    b: float
    m: float
    rho: float
    gap: float
    stderr: float
    split_mean: float
    decode_mean: float
    n_rollouts: int


class BmaxReport(BaseModel):
    """Outcome of comparing k(0,0) at two battery capacities."""
    b_max: int
    b_max_extended: int
    k_base: float
    k_extended: float
    difference: float
    tolerance: float
    passed: bool


class CheckResult(BaseModel):
    """One row of a verification suite report."""
    config: str
    margin: float
    passed: bool
    detail: str = ""


class SuiteReport(BaseModel):
    """Verification suite outcome, one row per config checked."""
    suite: str
    results: list[CheckResult] = []

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def worst(self) -> Optional[CheckResult]:
        if not self.results:
            return None
        return min(self.results, key=lambda r: r.margin)


class RunManifest(BaseModel):
    """Provenance record written next to every result file."""
    command: str
    config: dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    tool_version: str
    timestamp: str
    outputs: dict[str, str] = Field(default_factory=dict)


class TableCell(BaseModel):
    """One policy at one sweep value."""
    mean: float
    stderr: float
    exact: float
    reference: Optional[float] = None


class TableRow(BaseModel):
    policy: str
    cells: list[TableCell]


class TableResult(BaseModel):
    """A reproduced results table: policies x sweep values."""
    name: str
    parameter: str
    values: list[float]
    rows: list[TableRow]
    n_episodes: int
    master_seed: int
    reference_tolerance: Optional[float] = None

    def column_labels(self) -> list[str]:
        return [f"{self.parameter}={v:g}" for v in self.values]
