"""Race and gender categories shared across the pipeline."""

from enum import Enum
from typing import NamedTuple

from moniker.errors import ConfigError


class Race(str, Enum):
    """The five census race categories, in census column order."""

    ASIAN = "Asian"
    BLACK = "Black"
    HISPANIC = "Hispanic"
    NATIVE_AMERICAN = "NativeAmerican"
    WHITE = "White"


class Gender(str, Enum):
    """Gender conveyed by the title in front of a surname."""

    M = "M"
    F = "F"


RACES: tuple[Race, ...] = tuple(Race)
GENDERS: tuple[Gender, ...] = (Gender.M, Gender.F)

TITLES = {Gender.M: "Mr.", Gender.F: "Ms."}
SUBJECT_PRONOUNS = {Gender.M: "he", Gender.F: "she"}
POSSESSIVE_PRONOUNS = {Gender.M: "his", Gender.F: "her"}

# Probe wording per race; configurable per run.
DEFAULT_RACE_PHRASES: dict[Race, str] = {
    Race.ASIAN: "Asian",
    Race.BLACK: "African American",
    Race.HISPANIC: "Hispanic",
    Race.NATIVE_AMERICAN: "Native American",
    Race.WHITE: "White",
}

_RACE_ALIASES = {
    "asian": Race.ASIAN,
    "black": Race.BLACK,
    "hispanic": Race.HISPANIC,
    "nativeamerican": Race.NATIVE_AMERICAN,
    "native": Race.NATIVE_AMERICAN,
    "white": Race.WHITE,
}


class Group(NamedTuple):
    """An experimental group: one race crossed with one gender."""

    race: Race
    gender: Gender

    @property
    def label(self) -> str:
        """Short label such as ``White-M``."""
        return f"{self.race.value}-{self.gender.value}"


ALL_GROUPS: tuple[Group, ...] = tuple(
    Group(race, gender) for race in RACES for gender in GENDERS
)


def parse_race(value: str) -> Race:
    """Parse a race name, tolerating case, spaces and the short "Native".

    Raises:
        ConfigError: If the name is not one of the five races.
    """
    key = value.replace(" ", "").replace("_", "").lower()
    if key not in _RACE_ALIASES:
        raise ConfigError(f"Unknown race: {value!r}")
    return _RACE_ALIASES[key]


def parse_gender(value: str) -> Gender:
    """Parse ``M``/``F`` (case-insensitive)."""
    try:
        return Gender(value.strip().upper())
    except ValueError as e:
        raise ConfigError(f"Unknown gender: {value!r} (expected M or F)") from e


def parse_group(value: str) -> Group:
    """Parse a group written as ``"Race,G"``, e.g. ``"Hispanic,F"``.

    Raises:
        ConfigError: If the text is not two comma-separated parts.
    """
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"Group must look like 'Race,G', got {value!r}")
    return Group(parse_race(parts[0]), parse_gender(parts[1]))
