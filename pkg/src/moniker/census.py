"""Census surname curation.

Reads the 2010 Census "Frequently Occurring Surnames" table, repairs
suppressed percentages, drops the multiracial column, and ranks surnames
for each race by the posterior Pr(name | race), which weighs both how
distinctive a surname is for a race and how common it is overall.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from moniker.demographics import RACES, Race
from moniker.errors import (
    CensusError,
    CensusParseError,
    CensusSchemaError,
    DataIntegrityError,
    DegenerateRecordError,
)

logger = logging.getLogger(__name__)

SUPPRESSED = "(S)"
TWO_PLUS = "TwoPlus"

FILE_TOLERANCE = 1e-6
STRUCTURAL_TOLERANCE = 1e-9

# Census column for each race, in the order races are declared
RACE_COLUMNS: dict[Race, str] = {
    Race.ASIAN: "pctapi",
    Race.BLACK: "pctblack",
    Race.HISPANIC: "pcthispanic",
    Race.NATIVE_AMERICAN: "pctaian",
    Race.WHITE: "pctwhite",
}
TWO_PLUS_COLUMN = "pct2prace"
REQUIRED_COLUMNS = ("name", "count", *RACE_COLUMNS.values(), TWO_PLUS_COLUMN)
# Ranking columns of the published file; read past, never used
IGNORED_COLUMNS = ("rank", "prop100k", "cum_prop100k")
# Catch-all row at the end of the published file
AGGREGATE_ROW = "ALL OTHER NAMES"


@dataclass(frozen=True)
class SurnameRecord:
    """One census row.

    A percentage of ``None`` means the cell is still suppressed. ``suppressed``
    remembers which cells were "(S)" in the file, even after imputation.
    Once ``multirace_dropped`` is set, ``pct_two_plus`` is gone for good.
    """

    surname: str
    count: int
    pct_by_race: dict[Race, float | None]
    pct_two_plus: float | None
    suppressed: frozenset[str] = field(default_factory=frozenset)
    multirace_dropped: bool = False

    def known_total(self) -> float:
        """Sum of every percentage that is not suppressed."""
        total = sum(v for v in self.pct_by_race.values() if v is not None)
        if not self.multirace_dropped and self.pct_two_plus is not None:
            total += self.pct_two_plus
        return total

    def missing_cells(self) -> list[str]:
        """Keys of cells that still have no value."""
        missing = [race.value for race, v in self.pct_by_race.items() if v is None]
        if not self.multirace_dropped and self.pct_two_plus is None:
            missing.append(TWO_PLUS)
        return missing

    def likelihoods(self) -> np.ndarray:
        """Pr(race | name) as a five-vector in race order."""
        if any(self.pct_by_race[r] is None for r in RACES):
            raise DataIntegrityError(f"{self.surname}: record not imputed")
        return np.array([self.pct_by_race[r] for r in RACES], dtype=float) / 100.0


class RankedSurname(NamedTuple):
    """A surname's position in a race ranking."""

    surname: str
    posterior: float
    count: int


@dataclass(frozen=True)
class RacePosterior:
    """Surnames ranked by Pr(name | race), highest first.

    Ties are broken by descending count, then alphabetically.
    """

    race: Race
    ranked: list[RankedSurname]

    def surnames(self) -> list[str]:
        return [entry.surname for entry in self.ranked]


def _parse_percentage(raw: str, line: int, column: str) -> float | None:
    raw = raw.strip()
    if raw == SUPPRESSED:
        return None
    try:
        value = float(raw)
    except ValueError as e:
        raise CensusParseError(line, f"non-numeric {column}: {raw!r}") from e
    if not 0.0 <= value <= 100.0:
        raise CensusParseError(line, f"{column} out of range: {raw!r}")
    return value


def parse_census(path: Path) -> list[SurnameRecord]:
    """Read a census surname CSV into records, in file order.

    Column order does not matter, but the header must be exactly the eight
    census columns (the published rank and per-100k columns are tolerated
    and ignored). "(S)" cells are kept as suppressed.

    Args:
        path: CSV file path.

    Returns:
        One SurnameRecord per row.

    Raises:
        CensusSchemaError: Unknown or missing header columns.
        CensusParseError: A malformed row, with its 1-based file line number.
    """
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            skip_blank_lines=False,
        )
    except pd.errors.ParserError as e:
        # pandas reports "Expected 8 fields in line 5, saw 9"
        raise CensusParseError(_line_from_parser_error(e), str(e)) from e
    except pd.errors.EmptyDataError as e:
        raise CensusSchemaError(f"{path} has no header row") from e

    columns = [c.strip().lower() for c in frame.columns]
    unknown = sorted(set(columns) - set(REQUIRED_COLUMNS) - set(IGNORED_COLUMNS))
    missing = sorted(set(REQUIRED_COLUMNS) - set(columns))
    if unknown or missing:
        raise CensusSchemaError(
            f"Unexpected census header (unknown: {unknown}, missing: {missing})"
        )
    frame.columns = columns

    records: list[SurnameRecord] = []
    for offset, values in enumerate(frame.to_dict("records")):
        line = offset + 2  # header is line 1
        if all(not isinstance(v, str) or not v.strip() for v in values.values()):
            continue
        if any(not isinstance(values[c], str) for c in REQUIRED_COLUMNS):
            raise CensusParseError(line, f"expected {len(columns)} fields")
        surname = values["name"].strip().upper()
        if not surname:
            raise CensusParseError(line, "empty surname")
        if surname == AGGREGATE_ROW:
            logger.debug(f"Skipping aggregate row at line {line}")
            continue
        try:
            count = int(values["count"].replace(",", "").strip())
        except ValueError as e:
            raise CensusParseError(
                line, f"non-numeric count: {values['count']!r}"
            ) from e
        if count < 0:
            raise CensusParseError(line, f"negative count: {count}")

        pct_by_race = {
            race: _parse_percentage(values[column], line, column)
            for race, column in RACE_COLUMNS.items()
        }
        pct_two_plus = _parse_percentage(values[TWO_PLUS_COLUMN], line, TWO_PLUS_COLUMN)
        suppressed = {race.value for race, v in pct_by_race.items() if v is None}
        if pct_two_plus is None:
            suppressed.add(TWO_PLUS)

        records.append(
            SurnameRecord(
                surname=surname,
                count=count,
                pct_by_race=pct_by_race,
                pct_two_plus=pct_two_plus,
                suppressed=frozenset(suppressed),
            )
        )

    logger.info(f"Parsed {len(records)} census rows from {path}")
    return records


def _line_from_parser_error(error: Exception) -> int:
    text = str(error)
    marker = " line "
    if marker in text:
        tail = text.split(marker, 1)[1]
        digits = "".join(ch for ch in tail.split(",")[0] if ch.isdigit())
        if digits:
            return int(digits)
    return 0


def impute_suppressed(record: SurnameRecord) -> SurnameRecord:
    """Fill suppressed cells equally so the six percentages total 100.

    Each of the k missing cells gets (100 - known total) / k. Records with
    nothing missing come back unchanged, so imputing twice is harmless.

    Raises:
        DataIntegrityError: Known percentages already exceed 100.
    """
    missing = record.missing_cells()
    if not missing:
        return record

    known = record.known_total()
    if known > 100.0 + FILE_TOLERANCE:
        raise DataIntegrityError(
            f"{record.surname}: known percentages sum to {known:.6f} > 100"
        )
    fill = max(0.0, 100.0 - known) / len(missing)

    pct_by_race = {
        race: (fill if value is None else value)
        for race, value in record.pct_by_race.items()
    }
    pct_two_plus = record.pct_two_plus
    if TWO_PLUS in missing:
        pct_two_plus = fill
    return replace(record, pct_by_race=pct_by_race, pct_two_plus=pct_two_plus)


def drop_multirace_renormalize(record: SurnameRecord) -> SurnameRecord:
    """Remove the multiracial share and rescale the five races to 100.

    Raises:
        DataIntegrityError: The record still has suppressed cells.
        DegenerateRecordError: All five race percentages are zero.
    """
    if record.missing_cells():
        raise DataIntegrityError(f"{record.surname}: impute before renormalizing")
    if record.multirace_dropped:
        return record

    total = sum(record.pct_by_race[r] for r in RACES)
    if total <= 0.0:
        raise DegenerateRecordError(f"{record.surname}: all five races are 0%")

    pct_by_race = {r: record.pct_by_race[r] * 100.0 / total for r in RACES}
    return replace(
        record, pct_by_race=pct_by_race, pct_two_plus=None, multirace_dropped=True
    )


def curate_records(
    records: list[SurnameRecord],
) -> tuple[list[SurnameRecord], list[tuple[str, str]]]:
    """Impute and renormalize every record, excluding the ones that cannot be.

    Returns:
        Tuple of (clean records, excluded (surname, reason) pairs).
    """
    clean: list[SurnameRecord] = []
    excluded: list[tuple[str, str]] = []
    for record in records:
        try:
            clean.append(drop_multirace_renormalize(impute_suppressed(record)))
        except (DataIntegrityError, DegenerateRecordError) as e:
            logger.warning(f"Excluding census row: {e}")
            excluded.append((record.surname, str(e)))
    if excluded:
        logger.info(f"Excluded {len(excluded)} of {len(records)} census rows")
    return clean, excluded


def compute_posteriors(records: list[SurnameRecord]) -> dict[Race, RacePosterior]:
    """Rank surnames for every race by Pr(name | race).

    Pr(name) is the normalized count, the joint Pr(race, name) is
    Pr(race | name) * Pr(name), and the posterior normalizes the joint over
    all surnames within each race.

    Args:
        records: Imputed, renormalized records.

    Returns:
        One RacePosterior per race.

    Raises:
        CensusError: Empty input, zero total count, or a race with no mass.
    """
    if not records:
        raise CensusError("No census records to rank")

    counts = np.array([r.count for r in records], dtype=float)
    total = counts.sum()
    if total <= 0:
        raise CensusError("Total surname count is zero")

    prior = counts / total
    likelihood = np.vstack([r.likelihoods() for r in records])
    joint = likelihood * prior[:, None]
    mass = joint.sum(axis=0)
    if np.any(mass <= 0):
        empty = [RACES[i].value for i in np.flatnonzero(mass <= 0)]
        raise CensusError(f"No surname carries probability for: {', '.join(empty)}")
    posterior = joint / mass

    surnames = np.array([r.surname for r in records])
    int_counts = [r.count for r in records]
    results: dict[Race, RacePosterior] = {}
    for column, race in enumerate(RACES):
        # lexsort sorts by the last key first
        order = np.lexsort((surnames, -counts, -posterior[:, column]))
        ranked = [
            RankedSurname(str(surnames[i]), float(posterior[i, column]), int_counts[i])
            for i in order
        ]
        results[race] = RacePosterior(race=race, ranked=ranked)
    return results


def top_k(posterior: RacePosterior, k: int) -> list[str]:
    """The first ``min(k, len)`` surnames of a ranking.

    Raises:
        ValueError: If k < 1.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return [entry.surname for entry in posterior.ranked[:k]]


def summarize_top(
    records: list[SurnameRecord],
    posteriors: dict[Race, RacePosterior],
    n: int = 3,
) -> pd.DataFrame:
    """Top-n surnames per race with their count and census percentages.

    Percentages are the ones as read from the file (before imputation), with
    suppressed cells left blank.
    """
    by_name = {r.surname: r for r in records}
    rows = []
    for race, posterior in posteriors.items():
        for rank, entry in enumerate(posterior.ranked[:n], start=1):
            record = by_name.get(entry.surname)
            row = {
                "race": race.value,
                "rank": rank,
                "surname": entry.surname.title(),
                "count": entry.count,
                "posterior": entry.posterior,
            }
            for r, column in RACE_COLUMNS.items():
                value = record.pct_by_race.get(r) if record else None
                row[column] = value
            rows.append(row)
    return pd.DataFrame(rows)


def ranking_frame(posterior: RacePosterior, k: int | None = None) -> pd.DataFrame:
    """A ranking as a table with columns rank, surname, posterior, count."""
    entries = posterior.ranked if k is None else posterior.ranked[:k]
    return pd.DataFrame(
        {
            "rank": range(1, len(entries) + 1),
            "surname": [e.surname for e in entries],
            "posterior": [e.posterior for e in entries],
            "count": [e.count for e in entries],
        }
    )


def write_rankings(
    posteriors: dict[Race, RacePosterior], out_dir: Path, k: int
) -> dict[Race, Path]:
    """Write one ``<race>.csv`` ranking per race.

    Returns:
        Mapping of race to the written file.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[Race, Path] = {}
    for race, posterior in posteriors.items():
        path = out_dir / f"{race.value}.csv"
        ranking_frame(posterior, k).to_csv(path, index=False, float_format="%.12g")
        written[race] = path
    return written


@dataclass(frozen=True)
class ReferenceAgreement:
    """How a computed ranking lines up with a published one."""

    race: Race
    matched_prefix: int
    overlap: int
    compared: int
    first_mismatch: tuple[str, str] | None


def load_reference_surnames() -> dict[Race, list[str]]:
    """Published top-100 posterior-ranked surnames per race."""
    path = resources.files("moniker") / "data" / "reference_surnames.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    return {Race(race): names for race, names in data.items()}


def compare_to_reference(
    posteriors: dict[Race, RacePosterior], k: int = 100
) -> dict[Race, ReferenceAgreement]:
    """Compare the top-k of each ranking with the published lists.

    Surnames compare case-insensitively.
    """
    reference = load_reference_surnames()
    results: dict[Race, ReferenceAgreement] = {}
    for race, posterior in posteriors.items():
        ours = [s.upper() for s in top_k(posterior, k)]
        theirs = [s.upper() for s in reference.get(race, [])[:k]]
        compared = min(len(ours), len(theirs))
        prefix = 0
        mismatch = None
        for mine, published in zip(ours, theirs):
            if mine != published:
                mismatch = (mine.title(), published.title())
                break
            prefix += 1
        results[race] = ReferenceAgreement(
            race=race,
            matched_prefix=prefix,
            overlap=len(set(ours) & set(theirs)),
            compared=compared,
            first_mismatch=mismatch,
        )
    return results
