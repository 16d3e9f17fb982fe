"""End-to-end tests for the Moniker CLI against the mock backend."""

import json

import pytest
from typer.testing import CliRunner

from moniker.cli import app
from moniker.demographics import DEFAULT_RACE_PHRASES, RACES
from moniker.rundir import VerificationSummary, save_verification, verification_dir

runner = CliRunner()

SURNAMES = {
    "Asian": ["NGUYEN", "KIM", "TRAN"],
    "Black": ["WASHINGTON", "JEFFERSON", "BANKS"],
    "Hispanic": ["GARCIA", "LOPEZ", "HERNANDEZ"],
    "NativeAmerican": ["BEGAY", "YAZZIE", "TSOSIE"],
    "White": ["SMITH", "MILLER", "JOHNSON"],
}
COLUMNS = {
    "White": "pctwhite",
    "Black": "pctblack",
    "Asian": "pctapi",
    "NativeAmerican": "pctaian",
    "Hispanic": "pcthispanic",
}
HEADER = [
    "name",
    "count",
    "pctwhite",
    "pctblack",
    "pctapi",
    "pctaian",
    "pct2prace",
    "pcthispanic",
]


def write_census(path):
    """Fifteen surnames, each 90% one race."""
    lines = [",".join(HEADER)]
    for race, names in SURNAMES.items():
        for rank, name in enumerate(names):
            pcts = {column: 2.5 for column in COLUMNS.values()}
            pcts[COLUMNS[race]] = 90.0
            pcts["pct2prace"] = 0.0
            row = [name, str(1000 - rank)] + [str(pcts[c]) for c in HEADER[2:]]
            lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_fixtures(path):
    """A model that recognizes every surname's race with log-odds 3."""
    entries = []
    for race in RACES:
        names = "|".join(n.title() for n in SURNAMES[race.value])
        pattern = rf"({names}) is {DEFAULT_RACE_PHRASES[race]}\."
        entries += [
            {"prompt": pattern, "continuation": "True", "score": 0.0},
            {"prompt": pattern, "continuation": "False", "score": -3.0},
        ]
    entries += [
        {"prompt": "is .*\\.\\n### Answer", "continuation": "True", "score": -3.0},
        {"prompt": "is .*\\.\\n### Answer", "continuation": "False", "score": 0.0},
    ]
    path.write_text(
        json.dumps({"normalized": False, "entries": entries}), encoding="utf-8"
    )


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Census, fixtures and a config for a three-pair design."""
    monkeypatch.chdir(tmp_path)
    for env_var in ("MONIKER_ENDPOINT", "MONIKER_OUTPUT_DIR", "MONIKER_MODEL_ID"):
        monkeypatch.delenv(env_var, raising=False)
    write_census(tmp_path / "census.csv")
    write_fixtures(tmp_path / "fixtures.json")
    config = {
        "backend": {
            "kind": "mock",
            "model_id": "mock-llama",
            "fixtures": str(tmp_path / "fixtures.json"),
        },
        "census_path": str(tmp_path / "census.csv"),
        "seed_size": 3,
        "per_gender": 3,
        "experiment": {"investor_groups": ["White,M"], "pairs_per_group": 3},
        "output_dir": str(tmp_path / "out"),
    }
    (tmp_path / "moniker.json").write_text(json.dumps(config), encoding="utf-8")
    return tmp_path


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args])


def probe_pairs(workspace):
    result = invoke("probe", "--config", workspace / "moniker.json")
    assert result.exit_code == 0, result.output
    return workspace / "out" / "pairs" / "mock-llama.csv"


class TestCurate:
    """Tests for the curate command."""

    def test_writes_rankings_and_summary(self, workspace):
        """One ranking per race plus the top-3 summary."""
        result = invoke(
            "curate", "--config", workspace / "moniker.json", "--out", workspace / "cur"
        )

        assert result.exit_code == 0, result.output
        for race in SURNAMES:
            assert (workspace / "cur" / f"{race}.csv").exists()
        asian_csv = workspace / "cur" / "Asian.csv"
        asian = asian_csv.read_text(encoding="utf-8").splitlines()
        assert asian[1].split(",")[1] == "NGUYEN"
        assert (workspace / "cur" / "summary.csv").exists()

    def test_missing_census_writes_nothing(self, workspace):
        """A config error exits with code 2 before any output."""
        result = invoke(
            "curate", "--census", workspace / "absent.csv", "--out", workspace / "cur"
        )

        assert result.exit_code == 2
        assert not (workspace / "cur").exists()


class TestProbe:
    """Tests for the probe command."""

    def test_selects_pairs_and_logs_probes(self, workspace):
        """Three pairs per gender and race, plus the raw probe log."""
        pair_file = probe_pairs(workspace)

        lines = pair_file.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1 + 30
        assert lines[1].startswith("Asian,Kim,M,3,")
        log_path = pair_file.with_suffix(".probe.jsonl")
        log = log_path.read_text(encoding="utf-8").splitlines()
        assert len(log) == 30

    def test_instruct_models_are_not_probed(self, workspace):
        """Instruction-tuned styles reuse base-model pairs."""
        config = json.loads((workspace / "moniker.json").read_text(encoding="utf-8"))
        config["backend"]["prompt_style"] = "instruct"
        (workspace / "instruct.json").write_text(json.dumps(config), encoding="utf-8")

        result = invoke("probe", "--config", workspace / "instruct.json")

        assert result.exit_code == 2
        assert not (workspace / "out" / "pairs").exists()

    def test_shortfall_exit_code(self, workspace):
        """A missing extra list exits 2; too few qualifying pairs exits 5."""
        result = invoke(
            "probe",
            "--config",
            workspace / "moniker.json",
            "--extra",
            "White=missing.txt",
        )
        assert result.exit_code == 2

        config = json.loads((workspace / "moniker.json").read_text(encoding="utf-8"))
        config["per_gender"] = 4
        (workspace / "four.json").write_text(json.dumps(config), encoding="utf-8")

        result = invoke("probe", "--config", workspace / "four.json")

        assert result.exit_code == 5


class TestRunAnalyzeReport:
    """Tests for running games and analyzing them."""

    def test_full_pipeline(self, workspace):
        """probe, verify, run, analyze and report on one model."""
        pair_file = probe_pairs(workspace)
        config = workspace / "moniker.json"

        verify = invoke(
            "verify", "--config", config, "--pairs", pair_file, "--limit", 2
        )
        assert verify.exit_code == 0, verify.output
        verification = workspace / "out" / "verification" / "mock-llama"
        raw = (verification / "verification.json").read_text(encoding="utf-8")
        summary = json.loads(raw)
        assert summary["pairings"] == 2
        assert summary["rows"] == 22

        run = invoke("run", "--config", config, "--pairs", pair_file, "--run-id", "r1")
        assert run.exit_code == 0, run.output
        run_dir = workspace / "out" / "r1"
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["experiments"]["White-M"]["completed_games"] == 60
        assert not (run_dir / ".lock").exists()

        analyze = invoke("analyze", run_dir)
        assert analyze.exit_code == 0, analyze.output
        assert (run_dir / "analysis" / "White-M" / "interaction.svg").exists()

        report = invoke("report", run_dir)
        assert report.exit_code == 0, report.output
        text = (run_dir / "report.md").read_text(encoding="utf-8")
        assert text.startswith("# Run r1")
        assert "Verification pass rate" in text

    def test_two_runs_get_a_comparison_plot(self, workspace):
        """Analyzing several runs plots them side by side."""
        pair_file = probe_pairs(workspace)
        config = workspace / "moniker.json"
        for run_id in ("a", "b"):
            result = invoke(
                "run", "--config", config, "--pairs", pair_file, "--run-id", run_id
            )
            assert result.exit_code == 0, result.output

        result = invoke("analyze", workspace / "out" / "a", workspace / "out" / "b")

        assert result.exit_code == 0, result.output
        assert (workspace / "out" / "comparisons" / "White-M.svg").exists()

    def test_gated_run_is_incomplete(self, workspace):
        """Pairings that failed verification make the run incomplete."""
        pair_file = probe_pairs(workspace)
        save_verification(
            verification_dir(workspace / "out", "mock-llama"),
            VerificationSummary(
                model_id="mock-llama",
                prompt_style="base-llama-mistral",
                pairings=1,
                passed_pairings=0,
                rows=11,
                passed_rows=0,
                failed_pairings=[("Mr. Smith", "Mr. Miller")],
            ),
            [],
        )
        config = json.loads((workspace / "moniker.json").read_text(encoding="utf-8"))
        config["gate_on_verification"] = True
        (workspace / "gated.json").write_text(json.dumps(config), encoding="utf-8")

        run = invoke(
            "run",
            "--config",
            workspace / "gated.json",
            "--pairs",
            pair_file,
            "--run-id",
            "g",
        )
        assert run.exit_code == 0, run.output
        run_dir = workspace / "out" / "g"

        assert invoke("analyze", run_dir).exit_code == 8
        allowed = invoke("analyze", run_dir, "--allow-incomplete")
        assert allowed.exit_code == 0, allowed.output
        cells_csv = run_dir / "analysis" / "White-M" / "cells.csv"
        cells = cells_csv.read_text(encoding="utf-8")
        assert cells.splitlines()[1].split(",")[2] == "5"

    def test_locked_run_directory(self, workspace):
        """A second invocation on a run in use exits with code 9."""
        pair_file = probe_pairs(workspace)
        run_dir = workspace / "out" / "busy"
        run_dir.mkdir(parents=True)
        (run_dir / ".lock").write_text("1", encoding="utf-8")

        result = invoke(
            "run",
            "--config",
            workspace / "moniker.json",
            "--pairs",
            pair_file,
            "--run-id",
            "busy",
        )

        assert result.exit_code == 9

    def test_reference_pairs_need_matching_design(self, workspace):
        """Published lists hold 17 pairs per group."""
        result = invoke(
            "run", "--config", workspace / "moniker.json", "--pairs", "reference:phi-2"
        )

        assert result.exit_code == 2
