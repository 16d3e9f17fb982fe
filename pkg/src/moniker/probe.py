"""Refine census surnames into gender-surname pairs a model perceives as intended.

For every seed surname, both "Mr." and "Ms." are probed with a True/False
question per race. A pair becomes a candidate when its largest log-odds is
for the race the census assigned, and each gender keeps the candidates with
the widest gap between their top two races.
"""

import asyncio
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import pandas as pd

from moniker.backend.client import ScoringClient
from moniker.census import RacePosterior
from moniker.config import REFERENCE_PREFIX, PromptStyle
from moniker.demographics import (
    GENDERS,
    RACES,
    TITLES,
    Gender,
    Group,
    Race,
    parse_gender,
    parse_race,
)
from moniker.errors import (
    BackendError,
    ConfigError,
    NumericError,
    ShortfallError,
)
from moniker.prompts import PromptTemplates

logger = logging.getLogger(__name__)

SEED_SIZE = 300
PER_GENDER = 17

# Answer strings per prompt style; Phi-2 answers with a leading space
ANSWER_TOKENS: dict[PromptStyle, tuple[str, str]] = {
    PromptStyle.BASE_PHI: (" True", " False"),
    PromptStyle.BASE_LLAMA_MISTRAL: ("True", "False"),
}

PAIR_COLUMNS = [
    "race",
    "surname",
    "gender",
    *[f"lo_{r.value}" for r in RACES],
    "spread",
]


def display_surname(surname: str) -> str:
    """Title-case census capitals ("NGUYEN" -> "Nguyen"); keep mixed case."""
    return surname.title() if surname.isupper() else surname


@dataclass(frozen=True)
class GenderSurnamePair:
    """A title plus surname, with the race the census assigned it.

    ``log_odds`` is empty for pairs taken from a published list.
    """

    surname: str
    gender: Gender
    assigned_race: Race
    log_odds: dict[Race, float] = field(default_factory=dict, compare=False)

    @property
    def title(self) -> str:
        return TITLES[self.gender]

    @property
    def display(self) -> str:
        return f"{self.title} {display_surname(self.surname)}"

    @property
    def group(self) -> Group:
        return Group(self.assigned_race, self.gender)

    @property
    def spread(self) -> float:
        """Top-1 minus top-2 log-odds across races (0 with fewer than two)."""
        ranked = sorted(self.log_odds.values(), reverse=True)
        if len(ranked) < 2:
            return 0.0
        return ranked[0] - ranked[1]

    @property
    def perceived_race(self) -> Race | None:
        """Race with the largest log-odds; ties go to the earlier race."""
        if not self.log_odds:
            return None
        return max(RACES, key=lambda r: self.log_odds.get(r, -math.inf))

    def passes_gate(self) -> bool:
        return (
            len(self.log_odds) == len(RACES)
            and self.perceived_race == self.assigned_race
        )


@dataclass(frozen=True)
class SeedList:
    """De-duplicated surnames to probe for one race."""

    race: Race
    surnames: list[str]

    def __post_init__(self) -> None:
        if not self.surnames:
            raise ConfigError(f"Seed list for {self.race.value} is empty")


class ProbeOutcome(NamedTuple):
    log_odds: float
    valid_mass: float | None


@dataclass
class ProbeBatch:
    """Result of probing a seed list."""

    race: Race
    candidates: list[GenderSurnamePair]
    log: list[dict]


def build_seed_list(
    posterior: RacePosterior, extra: list[str], size: int = SEED_SIZE
) -> SeedList:
    """Top ``size`` posterior surnames followed by unseen extra surnames.

    Duplicates are dropped case-insensitively; the first spelling wins.
    """
    seen: set[str] = set()
    surnames: list[str] = []
    for name in [*(e.surname for e in posterior.ranked[:size]), *extra]:
        key = name.strip().upper()
        if key and key not in seen:
            seen.add(key)
            surnames.append(name.strip())
    return SeedList(race=posterior.race, surnames=surnames)


def load_surname_list(path: Path) -> list[str]:
    """Read an external surname list.

    CSV files use their ``surname`` (or ``name``) column, else the first
    column. Other files hold one surname per line; ``#`` starts a comment.
    """
    if path.suffix.lower() == ".csv":
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        lowered = {c.strip().lower(): c for c in frame.columns}
        column = lowered.get("surname") or lowered.get("name") or frame.columns[0]
        names = frame[column].tolist()
    else:
        lines = path.read_text(encoding="utf-8").splitlines()
        names = [line.split("#", 1)[0] for line in lines]
    return [n.strip() for n in names if n.strip()]


def answer_tokens(
    style: PromptStyle, override: tuple[str, str] | None = None
) -> tuple[str, str]:
    """The (True, False) answer strings scored for a style.

    Raises:
        ConfigError: For styles that are never probed.
    """
    if override is not None:
        return override
    if style not in ANSWER_TOKENS:
        raise ConfigError(f"Prompt style {style.value} does not support race probes")
    return ANSWER_TOKENS[style]


def render_race_probe(
    pair: GenderSurnamePair,
    race_phrase: str,
    style: PromptStyle,
    templates: PromptTemplates | None = None,
) -> str:
    """Instantiate the True/False race probe for a pair.

    Raises:
        ConfigError: If the style has no probe frame (instruct models).
    """
    if style not in ANSWER_TOKENS:
        raise ConfigError(f"Prompt style {style.value} does not support race probes")
    templates = templates or PromptTemplates()
    return templates.render(
        f"probe.{style.value}",
        {
            "title": pair.title,
            "surname": display_surname(pair.surname),
            "race": race_phrase,
        },
    )


async def probe_log_odds(
    pair: GenderSurnamePair,
    races: list[Race],
    client: ScoringClient,
    style: PromptStyle,
    race_phrases: dict[Race, str],
    templates: PromptTemplates | None = None,
    answers: tuple[str, str] | None = None,
) -> dict[Race, ProbeOutcome | None]:
    """Log Pr(True) - log Pr(False) for the pair against each race.

    A race whose probe fails maps to None rather than to zero.
    """
    true_token, false_token = answer_tokens(style, answers)

    async def one(race: Race) -> ProbeOutcome | None:
        prompt = render_race_probe(pair, race_phrases[race], style, templates)
        try:
            dist, mass = await client.score_distribution(
                prompt, [true_token, false_token]
            )
        except (BackendError, NumericError) as e:
            logger.warning(f"Probe failed for {pair.display} as {race.value}: {e}")
            return None
        # subset renormalization leaves the difference of raw scores intact
        return ProbeOutcome(dist.logprob_raw[0] - dist.logprob_raw[1], mass)

    outcomes = await asyncio.gather(*(one(race) for race in races))
    return dict(zip(races, outcomes))


async def probe_seed_list(
    seed: SeedList,
    client: ScoringClient,
    style: PromptStyle,
    race_phrases: dict[Race, str],
    templates: PromptTemplates | None = None,
    answers: tuple[str, str] | None = None,
) -> ProbeBatch:
    """Probe both genders of every seed surname against every race.

    Returns:
        Candidates passing the race gate, plus one log row per probed pair.
    """

    async def one(surname: str, gender: Gender) -> tuple[GenderSurnamePair, dict]:
        blank = GenderSurnamePair(surname, gender, seed.race)
        outcomes = await probe_log_odds(
            blank, list(RACES), client, style, race_phrases, templates, answers
        )
        log_odds = {r: o.log_odds for r, o in outcomes.items() if o is not None}
        pair = GenderSurnamePair(surname, gender, seed.race, log_odds)
        row = {
            "race": seed.race.value,
            "surname": display_surname(surname),
            "gender": gender.value,
            "log_odds": {r.value: v for r, v in log_odds.items()},
            "valid_mass": {
                r.value: (o.valid_mass if o is not None else None)
                for r, o in outcomes.items()
            },
            "missing": [r.value for r, o in outcomes.items() if o is None],
            "candidate": pair.passes_gate(),
        }
        return pair, row

    results = await asyncio.gather(
        *(one(surname, gender) for surname in seed.surnames for gender in GENDERS)
    )
    candidates = [pair for pair, row in results if row["candidate"]]
    logger.info(
        f"{seed.race.value}: {len(candidates)} of {len(results)} pairs "
        "pass the race gate"
    )
    return ProbeBatch(seed.race, candidates, [row for _, row in results])


def select_pairs(
    candidates: list[GenderSurnamePair],
    per_gender: int = PER_GENDER,
    races: list[Race] | None = None,
) -> list[GenderSurnamePair]:
    """Keep the ``per_gender`` widest-spread candidates of each race and gender.

    Candidates failing the race gate are dropped first. Ties in spread go to
    the larger log-odds for the assigned race, then to the surname.

    Args:
        candidates: Probed pairs.
        per_gender: Pairs kept per (race, gender).
        races: Races that must be filled; defaults to those present.

    Returns:
        Selected pairs ordered by race, then M before F, then rank.

    Raises:
        ShortfallError: If any (race, gender) has too few candidates.
    """
    gated = [c for c in candidates if c.passes_gate()]
    wanted = races if races is not None else [r for r in RACES if any(
        c.assigned_race == r for c in candidates
    )]

    selected: list[GenderSurnamePair] = []
    deficits: dict[tuple[str, str], int] = {}
    for race in wanted:
        for gender in GENDERS:
            pool = [c for c in gated if c.assigned_race == race and c.gender == gender]
            pool.sort(
                key=lambda c: (
                    -c.spread,
                    -c.log_odds[c.assigned_race],
                    c.surname.upper(),
                )
            )
            if len(pool) < per_gender:
                deficits[(race.value, gender.value)] = per_gender - len(pool)
                continue
            selected.extend(pool[:per_gender])

    if deficits:
        raise ShortfallError(deficits)
    return selected


def write_pair_file(pairs: list[GenderSurnamePair], path: Path) -> None:
    """Write pairs as CSV: race, surname, gender, lo_<race>..., spread."""
    rows = []
    for pair in pairs:
        row = {
            "race": pair.assigned_race.value,
            "surname": display_surname(pair.surname),
            "gender": pair.gender.value,
        }
        for race in RACES:
            row[f"lo_{race.value}"] = pair.log_odds.get(race)
        row["spread"] = pair.spread if pair.log_odds else None
        rows.append(row)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=PAIR_COLUMNS).to_csv(
        path, index=False, float_format="%.10g"
    )


def load_pair_file(path: Path) -> list[GenderSurnamePair]:
    """Read a pair CSV written by ``write_pair_file`` (log-odds optional).

    Raises:
        ConfigError: If the file is missing required columns or values.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {"race", "surname", "gender"} - set(frame.columns)
    if missing:
        raise ConfigError(f"{path} is missing columns: {sorted(missing)}")
    pairs = []
    for offset, row in enumerate(frame.to_dict("records")):
        line = offset + 2  # header is line 1
        log_odds = {}
        for race in RACES:
            column = f"lo_{race.value}"
            raw = row.get(column, "")
            if raw in ("", None):
                continue
            try:
                log_odds[race] = float(raw)
            except ValueError:
                raise ConfigError(
                    f"{path} line {line}: {column} is not a number: {raw!r}"
                ) from None
        pairs.append(
            GenderSurnamePair(
                surname=row["surname"].strip(),
                gender=parse_gender(row["gender"]),
                assigned_race=parse_race(row["race"]),
                log_odds=log_odds,
            )
        )
    return pairs


def reference_models() -> list[str]:
    """Models with a published pair list shipped in the package."""
    return sorted(_reference_pair_data())


def _reference_pair_data() -> dict:
    path = resources.files("moniker") / "data" / "reference_pairs.json"
    return json.loads(path.read_text(encoding="utf-8"))


def load_reference_pairs(model: str) -> list[GenderSurnamePair]:
    """The published gender-surname pairs for a model, in published order.

    Raises:
        ConfigError: If no list ships for the model.
    """
    data = _reference_pair_data()
    key = model.strip().lower()
    if key not in data:
        raise ConfigError(
            f"No reference pairs for {model!r}; choose from {', '.join(sorted(data))}"
        )
    return [
        GenderSurnamePair(surname, parse_gender(gender), parse_race(race))
        for race, entries in data[key].items()
        for surname, gender in entries
    ]


def load_pairs(pair_file: str) -> list[GenderSurnamePair]:
    """Load pairs from a CSV path or a ``reference:<model>`` name."""
    if pair_file.startswith(REFERENCE_PREFIX):
        return load_reference_pairs(pair_file[len(REFERENCE_PREFIX):])
    return load_pair_file(Path(pair_file))


def pairs_by_group(
    pairs: list[GenderSurnamePair],
) -> dict[Group, list[GenderSurnamePair]]:
    """Group pairs by (race, gender), keeping file order within each group."""
    grouped: dict[Group, list[GenderSurnamePair]] = {}
    for pair in pairs:
        grouped.setdefault(pair.group, []).append(pair)
    return grouped


def write_probe_log(rows: list[dict], path: Path) -> None:
    """Write probe log rows as JSON lines."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
