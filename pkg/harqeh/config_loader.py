"""Configuration loader with YAML support and deep merging."""

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field

from .constants import (
    DEFAULT_EPISODES,
    DEFAULT_MAX_ITER,
    DEFAULT_SEED,
    DEFAULT_TIE_TOL,
    DEFAULT_TOL,
    FULL_EPISODES,
)
from .types import LinkConfig

LINK_KEYS = ("lambda", "lambda_", "r1", "r2", "e", "e_d", "ed", "b_max", "bmax")


class SolverSettings(BaseModel):
    """Value iteration settings."""
    tol: float = Field(DEFAULT_TOL, gt=0.0)
    tie_tol: float = Field(DEFAULT_TIE_TOL, ge=0.0)
    max_iter: int = Field(DEFAULT_MAX_ITER, ge=1)
    sweep: Literal["jacobi", "gauss-seidel"] = "jacobi"


class MonteCarloSettings(BaseModel):
    """Episode counts and seeding."""
    episodes: int = Field(DEFAULT_EPISODES, ge=1)
    full_episodes: int = Field(FULL_EPISODES, ge=1)
    seed: int = Field(DEFAULT_SEED, ge=0)
    lanes: int = Field(1, ge=1)
    rollouts: int = Field(100_000, ge=2)
    full_rollouts: int = Field(1_000_000, ge=2)


class Lemma1Matrix(BaseModel):
    """Cartesian config sweep for the closed-form check."""
    model_config = ConfigDict(populate_by_name=True)

    e: list[int] = [1, 2, 3]
    e_d: list[int] = [1, 2, 3, 4, 5, 6]
    lambdas: list[float] = Field(
        default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], alias="lambda"
    )
    r1: float = 2.0
    r2: float = 1.0
    tolerance: float = 1e-10

    def configs(self) -> list[LinkConfig]:
        return [
            LinkConfig(lambda_=lam, r1=self.r1, r2=self.r2, e=e, e_d=e_d)
            for e in self.e
            for e_d in self.e_d
            for lam in self.lambdas
        ]


class ConfigList(BaseModel):
    """A list of link configs with a pass tolerance."""
    configs: list[LinkConfig] = []
    tolerance: float = 1e-9


class DeviationMatrix(ConfigList):
    rhos: list[float] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    sigmas: float = 3.0


class BmaxMatrix(ConfigList):
    margin: int = Field(2, ge=1)


class OracleMatrix(BaseModel):
    """Randomised configs cross-checked by all three evaluators."""
    n_configs: int = Field(10, ge=1)
    seed: int = 7
    episodes: int = Field(20_000, ge=2)
    analytic_tolerance: float = 1e-8
    sigmas: float = 4.0


class VerifySettings(BaseModel):
    lemma1: Lemma1Matrix = Field(default_factory=Lemma1Matrix)
    monotone: ConfigList = Field(default_factory=ConfigList)
    ties: ConfigList = Field(default_factory=ConfigList)
    deviation: DeviationMatrix = Field(default_factory=DeviationMatrix)
    bmax: BmaxMatrix = Field(default_factory=BmaxMatrix)
    oracle: OracleMatrix = Field(default_factory=OracleMatrix)


class SweepSpec(BaseModel):
    """One link parameter swept over a list of values."""
    parameter: Literal["r2", "lambda"]
    values: list[float]


class ReferenceValues(BaseModel):
    """Reference values for a swept table, row name -> one value per column."""
    tolerance: float = 0.05
    rows: dict[str, list[float]] = {}


class ScenarioConfig(BaseModel):
    """A named link setup, optionally swept over one parameter."""
    name: str = "base"
    description: str = ""
    link: dict[str, Any] = {}
    sweep: Optional[SweepSpec] = None
    reference: Optional[ReferenceValues] = None

    def link_configs(self) -> list[LinkConfig]:
        """One LinkConfig per sweep column, or the single link without a sweep."""
        if self.sweep is None:
            return [LinkConfig.model_validate(self.link)]
        return [
            LinkConfig.model_validate({**self.link, self.sweep.parameter: value})
            for value in self.sweep.values
        ]


class AppSettings(BaseModel):
    """Everything read from base.yaml, optionally with a scenario merged in."""
    solver: SolverSettings = Field(default_factory=SolverSettings)
    montecarlo: MonteCarloSettings = Field(default_factory=MonteCarloSettings)
    links: dict[str, dict[str, Any]] = {}
    verify: VerifySettings = Field(default_factory=VerifySettings)
    scenario: Optional[ScenarioConfig] = None


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Deep merge two dictionaries. Override values take precedence."""
    result = base.copy()
    for key, val in override.items():
        if isinstance(val, list):
            result[key] = val
        elif isinstance(val, dict) and isinstance(result.get(key), dict):
            result[key] = deep_merge(result[key], val)
        else:
            result[key] = val
    return result


def find_config_root() -> Path:
    """Find the config root directory."""
    possible_paths = [
        Path.cwd() / "config",
        Path(__file__).parent.parent / "config",
    ]
    for path in possible_paths:
        if (path / "base.yaml").exists():
            return path
    return Path(__file__).parent.parent / "config"


def load_yaml(file_path: Path, required: bool = False) -> dict[str, Any]:
    """Load a YAML file.

    Args:
        file_path: Path to the YAML file
        required: If True, raise FileNotFoundError when file doesn't exist

    Returns:
        Parsed YAML content as dictionary

    Raises:
        FileNotFoundError: If required=True and file doesn't exist
    """
    if not file_path.exists():
        if required:
            raise FileNotFoundError(f"Required config file not found: {file_path}")
        return {}
    with open(file_path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def available_scenarios(config_root: Optional[Path] = None) -> list[str]:
    root = config_root or find_config_root()
    return sorted(p.stem for p in (root / "scenarios").glob("*.yaml"))


def load_scenario(name: str, config_root: Optional[Path] = None) -> ScenarioConfig:
    """
    Load config/scenarios/<name>.yaml.

    Raises:
        FileNotFoundError: If the scenario does not exist
    """
    root = config_root or find_config_root()
    data = load_yaml(root / "scenarios" / f"{name}.yaml", required=True)
    return ScenarioConfig(name=name, **data)


def load_settings(
    scenario: Optional[str] = None,
    config_root: Optional[Path] = None,
) -> AppSettings:
    """
    Load settings with base merging.

    Config hierarchy:
    1. base.yaml (defaults and verify matrices)
    2. scenarios/<scenario>.yaml (link parameters, sweep, reference values)
    """
    root = config_root or find_config_root()
    base = load_yaml(root / "base.yaml", required=True)
    if scenario is None:
        return AppSettings(**base)

    overrides = load_yaml(root / "scenarios" / f"{scenario}.yaml", required=True)
    # Settings sections in a scenario file override base; the rest describes the link
    settings_part = {k: v for k, v in overrides.items() if k in ("solver", "montecarlo")}
    merged = deep_merge(base, settings_part)
    scenario_part = {k: v for k, v in overrides.items() if k not in settings_part}
    merged["scenario"] = ScenarioConfig(name=scenario, **scenario_part)
    return AppSettings(**merged)


def _parse_scalar(text: str) -> Any:
    value = yaml.safe_load(text)
    return text if isinstance(value, (dict, list)) else value


def load_config_file(file_path: Path) -> dict[str, Any]:
    """
    Load a user config file: YAML, or plain key=value lines with # comments.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If a non-empty line has no '='
    """
    if file_path.suffix.lower() in (".yaml", ".yml"):
        return load_yaml(file_path, required=True)
    if not file_path.exists():
        raise FileNotFoundError(f"Required config file not found: {file_path}")

    values: dict[str, Any] = {}
    with open(file_path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{file_path}:{lineno}: expected key=value, got '{line}'")
            values[key.strip().lower().replace("-", "_")] = _parse_scalar(value.strip())
    return values


def split_link_keys(values: dict[str, Any]) -> tuple[dict[str, Any], dict[str, Any]]:
    """Separate link parameters from other settings in a flat mapping."""
    link = {k: v for k, v in values.items() if k in LINK_KEYS}
    rest = {k: v for k, v in values.items() if k not in LINK_KEYS}
    return link, rest


def _canonical_link(values: dict[str, Any]) -> dict[str, Any]:
    renames = {"lambda_": "lambda", "ed": "e_d", "bmax": "b_max"}
    return {renames.get(k, k): v for k, v in values.items() if v is not None}


def resolve_link(
    settings: AppSettings,
    file_values: Optional[dict[str, Any]] = None,
    flags: Optional[dict[str, Any]] = None,
) -> LinkConfig:
    """
    Layer link parameters: scenario < config file < command-line flags.

    Raises:
        pydantic.ValidationError: If a parameter is missing or invalid
    """
    layers = [
        settings.scenario.link if settings.scenario else {},
        split_link_keys(file_values or {})[0],
        flags or {},
    ]
    merged: dict[str, Any] = {}
    for layer in layers:
        merged = deep_merge(merged, _canonical_link(layer))
    return LinkConfig.model_validate(merged)
