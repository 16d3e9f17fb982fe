"""Tests for census parsing, imputation and posterior ranking."""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from moniker.census import (
    RacePosterior,
    RankedSurname,
    SurnameRecord,
    compare_to_reference,
    compute_posteriors,
    curate_records,
    drop_multirace_renormalize,
    impute_suppressed,
    load_reference_surnames,
    parse_census,
    top_k,
    write_rankings,
)
from moniker.demographics import RACES, Race
from moniker.errors import (
    CensusError,
    CensusParseError,
    CensusSchemaError,
    DataIntegrityError,
    DegenerateRecordError,
)

HEADER = "name,count,pctwhite,pctblack,pctapi,pctaian,pct2prace,pcthispanic"


def write_census(tmp_path: Path, *rows: str, header: str = HEADER) -> Path:
    path = tmp_path / "census.csv"
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")
    return path


def record(surname: str, count: int, **pcts: float) -> SurnameRecord:
    """A clean record; unspecified races get 0%."""
    pct_by_race = {race: float(pcts.get(race.name.lower(), 0.0)) for race in RACES}
    return SurnameRecord(
        surname=surname,
        count=count,
        pct_by_race=pct_by_race,
        pct_two_plus=None,
        multirace_dropped=True,
    )


EVEN = {"asian": 20, "black": 20, "hispanic": 20, "native_american": 20, "white": 20}
MOSTLY_WHITE = {
    "asian": 10,
    "black": 10,
    "hispanic": 10,
    "native_american": 10,
    "white": 60,
}


def random_records(rng: np.random.Generator) -> list[SurnameRecord]:
    """Up to 20 clean records with random counts and race shares."""
    records = []
    for k in range(int(rng.integers(1, 21))):
        shares = rng.dirichlet(np.ones(len(RACES))) * 100
        records.append(
            SurnameRecord(
                surname=f"S{k:02d}",
                count=int(rng.integers(1, 100_000)),
                pct_by_race={race: float(v) for race, v in zip(RACES, shares)},
                pct_two_plus=None,
                multirace_dropped=True,
            )
        )
    return records


class TestParseCensus:
    """Tests for reading the census CSV."""

    def test_reads_percentages_by_column_name(self, tmp_path):
        """Columns are matched by name, not position."""
        path = write_census(tmp_path, "SMITH,100,70.5,20,5,1,2,1.5")

        records = parse_census(path)

        assert len(records) == 1
        smith = records[0]
        assert smith.surname == "SMITH"
        assert smith.count == 100
        assert smith.pct_by_race[Race.WHITE] == 70.5
        assert smith.pct_by_race[Race.ASIAN] == 5.0
        assert smith.pct_by_race[Race.HISPANIC] == 1.5
        assert smith.pct_two_plus == 2.0
        assert smith.suppressed == frozenset()

    def test_suppressed_cells_are_kept_as_missing(self, tmp_path):
        """'(S)' cells parse as None and are remembered as suppressed."""
        path = write_census(tmp_path, "NGUYEN,50,(S),(S),90,0.5,2,(S)")

        nguyen = parse_census(path)[0]

        assert nguyen.pct_by_race[Race.WHITE] is None
        assert nguyen.pct_by_race[Race.HISPANIC] is None
        assert nguyen.suppressed == frozenset({"White", "Black", "Hispanic"})

    def test_published_extra_columns_and_aggregate_row_tolerated(self, tmp_path):
        """Rank and per-100k columns are ignored and 'ALL OTHER NAMES' skipped."""
        header = "name,rank,count,prop100k,cum_prop100k," + HEADER.split(",", 2)[2]
        path = write_census(
            tmp_path,
            "SMITH,1,100,828.19,828.19,70,20,5,1,2,2",
            "ALL OTHER NAMES,0,5,1,1,60,20,5,5,5,5",
            header=header,
        )

        records = parse_census(path)

        assert [r.surname for r in records] == ["SMITH"]

    def test_unknown_column_is_schema_error(self, tmp_path):
        """A column outside the census set is rejected."""
        path = write_census(
            tmp_path, "SMITH,100,70,20,5,1,2,2,9", header=HEADER + ",extra"
        )

        with pytest.raises(CensusSchemaError):
            parse_census(path)

    def test_missing_column_is_schema_error(self, tmp_path):
        """Every census percentage column is required."""
        header = HEADER.replace(",pcthispanic", "")
        path = write_census(tmp_path, "SMITH,100,70,20,5,1,2", header=header)

        with pytest.raises(CensusSchemaError):
            parse_census(path)

    def test_non_numeric_count_reports_line(self, tmp_path):
        """Malformed rows carry their 1-based file line number."""
        path = write_census(
            tmp_path,
            "SMITH,100,70,20,5,1,2,2",
            "JONES,lots,70,20,5,1,2,2",
        )

        with pytest.raises(CensusParseError) as excinfo:
            parse_census(path)

        assert excinfo.value.line == 3

    def test_percentage_out_of_range_is_parse_error(self, tmp_path):
        """Percentages above 100 are malformed."""
        path = write_census(tmp_path, "SMITH,100,170,20,5,1,2,2")

        with pytest.raises(CensusParseError):
            parse_census(path)

    def test_short_row_is_parse_error(self, tmp_path):
        """A row with too few fields is malformed."""
        path = write_census(tmp_path, "SMITH,100,70,20")

        with pytest.raises(CensusParseError) as excinfo:
            parse_census(path)

        assert excinfo.value.line == 2

    def test_published_smith_row(self, tmp_path):
        """A row in the published column order keeps its exact count and shares."""
        header = "name,count,pctapi,pctblack,pcthispanic,pctaian,pctwhite,pct2prace"
        row = "SMITH,2442977,0.5,23.11,2.4,0.89,70.9,2.19"
        path = write_census(tmp_path, row, header=header)

        smith = parse_census(path)[0]

        assert smith.count == 2_442_977
        assert smith.pct_by_race[Race.WHITE] == 70.9
        assert smith.pct_by_race[Race.BLACK] == 23.11
        assert smith.pct_two_plus == 2.19

    def test_blank_lines_do_not_shift_line_numbers(self, tmp_path):
        """Errors after a blank line still name the right file line."""
        path = write_census(
            tmp_path,
            "SMITH,100,70,20,5,1,2,2",
            "",
            "JONES,lots,70,20,5,1,2,2",
        )

        with pytest.raises(CensusParseError) as excinfo:
            parse_census(path)

        assert excinfo.value.line == 4

    def test_blank_lines_are_skipped(self, tmp_path):
        """Empty lines between rows produce no records."""
        path = write_census(
            tmp_path, "SMITH,100,70,20,5,1,2,2", "", "JONES,50,70,20,5,1,2,2"
        )

        assert [r.surname for r in parse_census(path)] == ["SMITH", "JONES"]

    def test_header_only_file_has_no_records(self, tmp_path):
        """A census with no data rows parses to an empty list."""
        path = write_census(tmp_path)

        assert parse_census(path) == []


class TestImputation:
    """Tests for filling suppressed cells and dropping the multiracial share."""

    def test_suppressed_cells_share_the_remainder_equally(self):
        """Each of k missing cells gets (100 - known) / k."""
        raw = SurnameRecord(
            surname="X",
            count=10,
            pct_by_race={
                Race.WHITE: 50.0,
                Race.BLACK: None,
                Race.ASIAN: 20.0,
                Race.NATIVE_AMERICAN: None,
                Race.HISPANIC: 10.0,
            },
            pct_two_plus=10.0,
            suppressed=frozenset({"Black", "NativeAmerican"}),
        )

        imputed = impute_suppressed(raw)

        assert imputed.pct_by_race[Race.BLACK] == pytest.approx(5.0)
        assert imputed.pct_by_race[Race.NATIVE_AMERICAN] == pytest.approx(5.0)
        assert imputed.known_total() == pytest.approx(100.0)
        assert imputed.suppressed == raw.suppressed

    def test_doriott_row_end_to_end(self, tmp_path):
        """Two suppressed cells share the missing 6%, then multiracial 5% goes."""
        header = "name,count,pctapi,pctblack,pcthispanic,pctaian,pctwhite,pct2prace"
        row = "DORIOTT,100,(S),0.00,(S),0.00,89.00,5.00"
        path = write_census(tmp_path, row, header=header)
        doriott = parse_census(path)[0]
        assert doriott.suppressed == frozenset({"Asian", "Hispanic"})

        imputed = impute_suppressed(doriott)
        clean = drop_multirace_renormalize(imputed)

        assert imputed.pct_by_race[Race.ASIAN] == 3.0
        assert imputed.pct_by_race[Race.HISPANIC] == 3.0
        expected = [300 / 95, 0.0, 300 / 95, 0.0, 8900 / 95]
        for race, value in zip(RACES, expected):
            assert clean.pct_by_race[race] == pytest.approx(value, abs=1e-9)
        published = [3.1579, 0.0, 3.1579, 0.0, 93.6842]
        shares = [clean.pct_by_race[r] for r in RACES]
        assert shares == pytest.approx(published, abs=1e-4)
        assert math.fsum(clean.pct_by_race.values()) == pytest.approx(100.0, abs=1e-9)

    def test_imputing_twice_changes_nothing(self):
        """A complete record comes back unchanged."""
        raw = SurnameRecord(
            surname="X",
            count=1,
            pct_by_race={race: 19.0 for race in RACES},
            pct_two_plus=None,
        )
        once = impute_suppressed(raw)

        assert impute_suppressed(once) == once

    def test_known_total_over_100_is_integrity_error(self):
        """Suppressed records whose known cells exceed 100 cannot be imputed."""
        raw = SurnameRecord(
            surname="X",
            count=1,
            pct_by_race={**{race: 30.0 for race in RACES}, Race.WHITE: None},
            pct_two_plus=0.0,
        )

        with pytest.raises(DataIntegrityError):
            impute_suppressed(raw)

    def test_renormalize_drops_multirace_and_sums_to_100(self):
        """The five race percentages are rescaled to total 100."""
        raw = SurnameRecord(
            surname="X",
            count=10,
            pct_by_race={
                Race.WHITE: 50.0,
                Race.BLACK: 5.0,
                Race.ASIAN: 20.0,
                Race.NATIVE_AMERICAN: 5.0,
                Race.HISPANIC: 10.0,
            },
            pct_two_plus=10.0,
        )

        clean = drop_multirace_renormalize(raw)

        assert clean.multirace_dropped
        assert clean.pct_two_plus is None
        assert sum(clean.pct_by_race.values()) == pytest.approx(100.0)
        assert clean.pct_by_race[Race.WHITE] == pytest.approx(50.0 / 0.9)

    def test_renormalize_requires_imputation_first(self):
        """Suppressed cells must be filled before renormalizing."""
        raw = SurnameRecord(
            surname="X",
            count=1,
            pct_by_race={**{race: 10.0 for race in RACES}, Race.BLACK: None},
            pct_two_plus=0.0,
        )

        with pytest.raises(DataIntegrityError):
            drop_multirace_renormalize(raw)

    def test_all_multiracial_is_degenerate(self):
        """A record with every race at 0% cannot be renormalized."""
        raw = SurnameRecord(
            surname="X",
            count=1,
            pct_by_race={race: 0.0 for race in RACES},
            pct_two_plus=100.0,
        )

        with pytest.raises(DegenerateRecordError):
            drop_multirace_renormalize(raw)

    def test_curate_excludes_bad_rows_and_keeps_the_rest(self, tmp_path):
        """Unusable rows are reported, not fatal."""
        path = write_census(
            tmp_path,
            "SMITH,100,70,20,5,1,2,2",
            "ZERO,5,0,0,0,0,100,0",
            "OVER,5,(S),40,40,40,0,0",
        )

        clean, excluded = curate_records(parse_census(path))

        assert [r.surname for r in clean] == ["SMITH"]
        assert [name for name, _ in excluded] == ["ZERO", "OVER"]
        for r in clean:
            assert sum(r.pct_by_race.values()) == pytest.approx(100.0)


class TestPosteriors:
    """Tests for Pr(name | race) ranking."""

    def test_posterior_is_bayes_over_counts(self):
        """Joint = Pr(race | name) * Pr(name), normalized within each race."""
        records = [
            record("AAA", 300, **EVEN),
            record("BBB", 100, **MOSTLY_WHITE),
        ]

        posteriors = compute_posteriors(records)

        black = dict((e.surname, e.posterior) for e in posteriors[Race.BLACK].ranked)
        # AAA: 0.75 * 0.2 = 0.15, BBB: 0.25 * 0.1 = 0.025
        assert black["AAA"] == pytest.approx(0.15 / 0.175)
        assert black["BBB"] == pytest.approx(0.025 / 0.175)
        for posterior in posteriors.values():
            total = math.fsum(e.posterior for e in posterior.ranked)
            assert total == pytest.approx(1.0)

    def test_ties_go_to_count_then_surname(self):
        """Equal posteriors rank by descending count, then alphabetically."""
        records = [
            record("BBB", 100, **MOSTLY_WHITE),
            record("AAA", 300, **EVEN),
            record("CCC", 100, **MOSTLY_WHITE),
        ]

        white = compute_posteriors(records)[Race.WHITE]

        # White joints: AAA 0.6 * 0.2, BBB and CCC 0.2 * 0.6; all equal
        assert white.surnames() == ["AAA", "BBB", "CCC"]

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_direct_bayes_evaluation(self, seed):
        """Posteriors equal Pr(race|name) Pr(name) / sum over names, per race."""
        records = random_records(np.random.default_rng(seed))
        total = sum(r.count for r in records)

        posteriors = compute_posteriors(records)

        for race in RACES:
            joints = {
                r.surname: r.pct_by_race[race] / 100 * r.count / total
                for r in records
            }
            mass = math.fsum(joints.values())
            ours = {e.surname: e.posterior for e in posteriors[race].ranked}
            for surname, joint in joints.items():
                assert ours[surname] == pytest.approx(joint / mass, rel=0, abs=1e-12)

    def test_scaling_counts_changes_nothing(self):
        """Only relative counts matter."""
        records = random_records(np.random.default_rng(3))
        scaled = [replace(r, count=r.count * 1000) for r in records]

        before = compute_posteriors(records)
        after = compute_posteriors(scaled)

        for race in RACES:
            assert after[race].surnames() == before[race].surnames()
            assert [e.posterior for e in after[race].ranked] == pytest.approx(
                [e.posterior for e in before[race].ranked], rel=0, abs=1e-12
            )

    def test_row_order_does_not_change_rankings(self):
        """Shuffling the census gives the same ranked lists, ties included."""
        rng = np.random.default_rng(11)
        records = random_records(rng)
        records.append(replace(records[0], surname="ZZTWIN"))
        shuffled = [records[i] for i in rng.permutation(len(records))]

        before = compute_posteriors(records)
        after = compute_posteriors(shuffled)

        for race in RACES:
            assert after[race].surnames() == before[race].surnames()
            assert sorted(after[race].surnames()) == sorted(r.surname for r in records)

    def test_empty_input_is_census_error(self):
        """Ranking needs at least one record."""
        with pytest.raises(CensusError):
            compute_posteriors([])

    def test_race_without_mass_is_census_error(self):
        """A race no surname carries has no posterior."""
        with pytest.raises(CensusError):
            compute_posteriors([record("ONLY", 10, white=100)])

    def test_top_k_requires_positive_k(self):
        """k must be at least one."""
        posterior = compute_posteriors([record("AAA", 1, **EVEN)])[Race.WHITE]

        assert top_k(posterior, 5) == ["AAA"]
        with pytest.raises(ValueError):
            top_k(posterior, 0)

    def test_write_rankings_one_file_per_race(self, tmp_path):
        """Each race gets <Race>.csv with rank, surname, posterior, count."""
        posteriors = compute_posteriors(
            [record("AAA", 3, **EVEN), record("BBB", 1, **EVEN)]
        )

        written = write_rankings(posteriors, tmp_path / "curated", k=1)

        assert set(written) == set(RACES)
        lines = written[Race.WHITE].read_text(encoding="utf-8").splitlines()
        assert lines[0] == "rank,surname,posterior,count"
        assert lines[1] == "1,AAA,0.75,3"
        assert len(lines) == 2


class TestReferenceComparison:
    """Tests for agreement with the published top-100 lists."""

    def test_reference_lists_have_100_names_per_race(self):
        """The shipped lists cover all five races."""
        reference = load_reference_surnames()

        assert set(reference) == set(RACES)
        assert all(len(names) == 100 for names in reference.values())

    def test_identical_ranking_matches_fully(self):
        """A ranking equal to the published one agrees on the whole prefix."""
        reference = load_reference_surnames()
        posteriors = {
            race: RacePosterior(
                race, [RankedSurname(name.upper(), 0.01, 1) for name in names]
            )
            for race, names in reference.items()
        }

        agreement = compare_to_reference(posteriors)

        for race in RACES:
            assert agreement[race].matched_prefix == 100
            assert agreement[race].overlap == 100
            assert agreement[race].first_mismatch is None

    def test_swapped_names_report_first_mismatch(self):
        """Swapping two names ends the matched prefix at the swap."""
        names = list(load_reference_surnames()[Race.ASIAN])
        names[2], names[3] = names[3], names[2]
        posteriors = {
            Race.ASIAN: RacePosterior(
                Race.ASIAN, [RankedSurname(n, 0.01, 1) for n in names]
            )
        }

        agreement = compare_to_reference(posteriors)[Race.ASIAN]

        assert agreement.matched_prefix == 2
        assert agreement.overlap == 100
        assert agreement.first_mismatch == (names[2].title(), names[3].title())
