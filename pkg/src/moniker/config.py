"""Configuration handling for Moniker.

A run is configured by a single JSON file (validated into ``RunConfig``),
then environment variables, then command-line flags, each overriding the
previous layer. A ``.env`` file in the working directory is honoured.

Environment variables:
    MONIKER_ENDPOINT: scoring endpoint URL
    MONIKER_OUTPUT_DIR: where runs and curated lists are written
    MONIKER_MODEL_ID: model identifier recorded in manifests
    MONIKER_MAX_PARALLEL: in-flight scoring request bound
"""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from moniker.demographics import (
    DEFAULT_RACE_PHRASES,
    Gender,
    Group,
    Race,
    parse_group,
)
from moniker.errors import ConfigError

REFERENCE_PREFIX = "reference:"

# Dotted config keys and the environment variables that override them
ENV_VAR_MAPPING = {
    "backend.endpoint": "MONIKER_ENDPOINT",
    "output_dir": "MONIKER_OUTPUT_DIR",
    "backend.model_id": "MONIKER_MODEL_ID",
    "backend.max_parallel": "MONIKER_MAX_PARALLEL",
}

_INT_KEYS = {"backend.max_parallel"}


class PromptStyle(str, Enum):
    """Prompt framing matched to the model family."""

    BASE_LLAMA_MISTRAL = "base-llama-mistral"
    BASE_PHI = "base-phi"
    INSTRUCT = "instruct"


class BackendConfig(BaseModel):
    """Where and how candidate continuations get scored."""

    kind: Literal["http", "mock"] = Field(
        default="http", description="Wire-protocol HTTP backend or offline mock"
    )
    endpoint: str = Field(
        default="http://localhost:8000/score", description="Scoring endpoint URL"
    )
    model_id: str = Field(
        default="unnamed-model", description="Model identifier recorded in runs"
    )
    prompt_style: PromptStyle = Field(
        default=PromptStyle.BASE_LLAMA_MISTRAL, description="Prompt framing"
    )
    timeout: float = Field(default=60.0, gt=0, description="Request timeout (s)")
    max_parallel: int = Field(default=4, ge=1, description="In-flight request bound")
    cache_dir: Path | None = Field(
        default=None, description="Directory for the on-disk score cache"
    )
    retries: int = Field(
        default=3, ge=1, description="Attempts per request on transport errors"
    )
    backoff_seconds: float = Field(
        default=0.5, ge=0, description="Base delay for exponential backoff"
    )
    normalized_scores: bool = Field(
        default=True,
        description="Scores are full-vocabulary log-probabilities (enables valid mass)",
    )
    answer_tokens: tuple[str, str] | None = Field(
        default=None, description="True/False answer strings; None uses style default"
    )
    fixtures: Path | None = Field(
        default=None, description="Fixture file for the mock backend"
    )
    fallback_seed: int = Field(
        default=0, description="Seed for mock scores of unmatched inputs"
    )


class ExperimentSettings(BaseModel):
    """Factorial design overrides."""

    investor_groups: list[Group] = Field(
        default_factory=lambda: [
            Group(Race.WHITE, Gender.M),
            Group(Race.ASIAN, Gender.F),
        ],
        description="One experiment per investor group",
    )
    pairs_per_group: int = Field(default=17, ge=2, description="Pairs per group")
    amt_a: int = Field(default=10, gt=0, description="Investor starting dollars")
    amt_b: int = Field(default=2, ge=0, description="Trustee starting dollars")

    @field_validator("investor_groups", mode="before")
    @classmethod
    def _parse_group_strings(cls, value: Any) -> Any:
        if isinstance(value, list):
            return [parse_group(v) if isinstance(v, str) else v for v in value]
        return value


class RunConfig(BaseModel):
    """Complete configuration for every Moniker command."""

    backend: BackendConfig = Field(default_factory=BackendConfig)
    census_path: Path | None = Field(default=None, description="Census surname CSV")
    curate_top_k: int = Field(default=100, ge=1, description="Names per race file")
    seed_size: int = Field(
        default=300, ge=1, description="Posterior-ranked names per seed list"
    )
    extra_surnames: dict[Race, Path] = Field(
        default_factory=dict, description="Optional external surname list per race"
    )
    per_gender: int = Field(default=17, ge=1, description="Pairs kept per gender")
    pair_file: str | None = Field(
        default=None, description="Pair CSV path, or 'reference:<model>'"
    )
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    gate_on_verification: bool = Field(
        default=False, description="Fail games whose pairing failed verification"
    )
    verification_limit: int | None = Field(
        default=None, ge=1, description="Cap on pairings verified"
    )
    output_dir: Path = Field(default=Path("runs"), description="Output root")
    race_phrases: dict[Race, str] = Field(
        default_factory=lambda: dict(DEFAULT_RACE_PHRASES),
        description="Wording used for each race in probes",
    )
    templates_path: Path | None = Field(
        default=None, description="JSON file overriding named prompt templates"
    )
    anova_alpha: float = Field(default=0.001, gt=0, lt=1)
    posthoc_alpha: float = Field(default=0.01, gt=0, lt=1)
    allow_incomplete: bool = Field(
        default=False, description="Analyze runs with failed games"
    )

    @field_validator("race_phrases")
    @classmethod
    def _all_races_phrased(cls, value: dict[Race, str]) -> dict[Race, str]:
        merged = dict(DEFAULT_RACE_PHRASES)
        merged.update(value)
        return merged


def load_config_from_env() -> dict[str, Any]:
    """Load dotted override values from environment variables.

    Returns:
        Mapping of dotted config keys to values found in the environment.
    """
    load_dotenv(find_dotenv(usecwd=True))
    overrides: dict[str, Any] = {}
    for key, env_var in ENV_VAR_MAPPING.items():
        value = os.environ.get(env_var)
        if value is None:
            continue
        if key in _INT_KEYS:
            try:
                overrides[key] = int(value)
            except ValueError:
                pass  # Skip invalid values
        else:
            overrides[key] = value
    return overrides


def apply_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Return a copy of ``config`` with dotted-key overrides applied.

    ``None`` values are ignored so unset CLI flags leave the config alone.

    Raises:
        ConfigError: If a key is unknown or a value fails validation.
    """
    data = config.model_dump()
    for dotted, value in overrides.items():
        if value is None:
            continue
        target = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigError(f"Unknown config key: {dotted}")
            target = target[part]
        if leaf not in target:
            raise ConfigError(f"Unknown config key: {dotted}")
        target[leaf] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def load_config(
    path: Path | None = None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """Load configuration from file, environment, then explicit overrides.

    Args:
        path: Optional JSON config file.
        overrides: Dotted-key values (usually CLI flags) applied last.

    Returns:
        The effective RunConfig.

    Raises:
        ConfigError: If the file is missing or invalid.
    """
    config = RunConfig()
    if path is not None:
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            config = RunConfig.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ConfigError(f"Invalid config file {path}: {e}") from e

    layered = load_config_from_env()
    layered.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if layered:
        config = apply_overrides(config, layered)
    return config


def config_snapshot(config: RunConfig) -> dict[str, Any]:
    """JSON-ready dump of the effective configuration for manifests."""
    return config.model_dump(mode="json")


def is_reference_pairs(pair_file: str | None) -> bool:
    """True when ``pair_file`` names a shipped reference list."""
    return bool(pair_file) and pair_file.startswith(REFERENCE_PREFIX)


def validate_paths(config: RunConfig, needs: set[str]) -> None:
    """Check that every file a command needs exists, before any side effect.

    Args:
        config: Effective configuration.
        needs: Subset of {"census", "pairs", "extra"} the command reads.
            Template and mock fixture files are always checked when set.

    Raises:
        ConfigError: Listing every missing file.
    """
    problems: list[str] = []

    if "census" in needs:
        if config.census_path is None:
            problems.append("census_path is not set")
        elif not config.census_path.exists():
            problems.append(f"census file not found: {config.census_path}")

    if "pairs" in needs:
        if not config.pair_file:
            problems.append("pair_file is not set")
        elif not is_reference_pairs(config.pair_file) and not Path(
            config.pair_file
        ).exists():
            problems.append(f"pair file not found: {config.pair_file}")

    if "extra" in needs:
        for race, path in config.extra_surnames.items():
            if not path.exists():
                problems.append(
                    f"extra surname list for {race.value} not found: {path}"
                )

    if config.templates_path is not None and not config.templates_path.exists():
        problems.append(f"templates file not found: {config.templates_path}")

    if config.backend.kind == "mock":
        fixtures = config.backend.fixtures
        if fixtures is not None and not fixtures.exists():
            problems.append(f"mock fixture file not found: {fixtures}")

    if problems:
        raise ConfigError("; ".join(problems))
