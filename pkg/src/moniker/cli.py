"""Moniker CLI - curate names, probe a model, verify prompts, run and analyze."""

import asyncio
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import typer

from moniker.backend.client import ScoringClient, create_client
from moniker.census import (
    compare_to_reference,
    compute_posteriors,
    curate_records,
    parse_census,
    summarize_top,
    write_rankings,
)
from moniker.config import PromptStyle, RunConfig, load_config, validate_paths
from moniker.demographics import RACES, parse_race
from moniker.errors import CensusError, ConfigError, IncompleteRunError, MonikerError
from moniker.experiment import (
    balance_cells,
    cell_values,
    check_pairs,
    designs_from_config,
    enumerate_games,
    execute_run,
    load_experiment,
    resolve_run_id,
)
from moniker.game import verify_prompt
from moniker.probe import (
    build_seed_list,
    load_pairs,
    load_surname_list,
    pairs_by_group,
    probe_seed_list,
    select_pairs,
    write_pair_file,
    write_probe_log,
)
from moniker.prompts import load_templates
from moniker.report import plot_comparison, render_report, write_analysis
from moniker.rundir import (
    PairingCheck,
    RunDirectory,
    VerificationSummary,
    load_verification,
    save_verification,
    verification_dir,
)
from moniker.stats import ExperimentAnalysis, analyze_experiment

logger = logging.getLogger(__name__)

app = typer.Typer(
    name="moniker",
    help="Name-based bias auditing for language models through Trust Game simulation",
    add_completion=False,
)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

ConfigOption = typer.Option(None, "--config", "-c", help="JSON config file")


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
) -> None:
    """Configure logging for every command."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


@contextmanager
def _exit_on_error() -> Iterator[None]:
    """Turn Moniker errors into a red message and the error's exit code."""
    try:
        yield
    except MonikerError as e:
        typer.secho(f"Error: {e}", fg=typer.colors.RED, err=True)
        raise typer.Exit(e.exit_code) from e


def _client(config: RunConfig) -> ScoringClient:
    cache_dir = config.backend.cache_dir or config.output_dir / "cache"
    return create_client(config.backend, cache_dir=cache_dir)


def _parse_extra(values: list[str] | None) -> dict[str, Path]:
    extra: dict[str, Path] = {}
    for value in values or []:
        if "=" not in value:
            raise ConfigError(f"--extra expects RACE=PATH, got {value!r}")
        race, path = value.split("=", 1)
        extra[parse_race(race).value] = Path(path)
    return extra


@app.command()
def curate(
    config_path: Path = ConfigOption,
    census: Path = typer.Option(None, "--census", help="Census surname CSV"),
    top_k: int = typer.Option(None, "--top-k", "-k", help="Surnames per race"),
    out: Path = typer.Option(None, "--out", "-o", help="Output directory"),
    check_reference: bool = typer.Option(
        False, "--check-reference", help="Compare rankings with the published lists"
    ),
) -> None:
    """Rank census surnames per race by Pr(name | race)."""
    with _exit_on_error():
        config = load_config(
            config_path, {"census_path": census, "curate_top_k": top_k}
        )
        validate_paths(config, {"census"})
        out_dir = out or config.output_dir / "curated"

        records = parse_census(config.census_path)
        if not records:
            raise CensusError(f"{config.census_path} has no surname rows")
        clean, excluded = curate_records(records)
        posteriors = compute_posteriors(clean)

        written = write_rankings(posteriors, out_dir, config.curate_top_k)
        summarize_top(records, posteriors).to_csv(out_dir / "summary.csv", index=False)
        if excluded:
            (out_dir / "excluded.txt").write_text(
                "".join(f"{name}\t{reason}\n" for name, reason in excluded),
                encoding="utf-8",
            )

        typer.echo(f"Ranked {len(clean)} surnames ({len(excluded)} excluded)")
        for race, path in written.items():
            top = ", ".join(e.surname.title() for e in posteriors[race].ranked[:3])
            typer.echo(f"  {race.value:<15} {top}  -> {path}")

        if check_reference:
            typer.echo("Agreement with published top lists:")
            for race, agreement in compare_to_reference(
                posteriors, config.curate_top_k
            ).items():
                line = (
                    f"  {race.value:<15} prefix {agreement.matched_prefix}/"
                    f"{agreement.compared}, overlap {agreement.overlap}"
                )
                if agreement.first_mismatch:
                    ours, theirs = agreement.first_mismatch
                    line += f" (first mismatch: {ours} vs {theirs})"
                typer.echo(line)


@app.command()
def probe(
    config_path: Path = ConfigOption,
    extra: list[str] = typer.Option(
        None, "--extra", "-e", help="External surname list as RACE=PATH (repeatable)"
    ),
    out: Path = typer.Option(None, "--out", "-o", help="Pair file to write"),
) -> None:
    """Probe a base model's race perception and select gender-surname pairs."""
    with _exit_on_error():
        config = load_config(config_path)
        if extra:
            merged = {r.value: p for r, p in config.extra_surnames.items()}
            merged.update(_parse_extra(extra))
            config = load_config(config_path, {"extra_surnames": merged})
        validate_paths(config, {"census", "extra"})
        style = config.backend.prompt_style
        if style == PromptStyle.INSTRUCT:
            raise ConfigError(
                "Instruction-tuned models are not probed; reuse the base model's pairs"
            )
        templates = load_templates(config.templates_path)
        out_path = out or config.output_dir / "pairs" / f"{config.backend.model_id}.csv"

        clean, _ = curate_records(parse_census(config.census_path))
        posteriors = compute_posteriors(clean)
        seeds = [
            build_seed_list(
                posteriors[race],
                load_surname_list(config.extra_surnames[race])
                if race in config.extra_surnames
                else [],
                config.seed_size,
            )
            for race in RACES
        ]

        async def run_probes():
            async with _client(config) as client:
                return await asyncio.gather(
                    *(
                        probe_seed_list(
                            seed,
                            client,
                            style,
                            config.race_phrases,
                            templates,
                            config.backend.answer_tokens,
                        )
                        for seed in seeds
                    )
                )

        batches = asyncio.run(run_probes())
        log_path = out_path.with_suffix(".probe.jsonl")
        write_probe_log([row for batch in batches for row in batch.log], log_path)
        typer.echo(f"Probe log written to {log_path}")

        candidates = [pair for batch in batches for pair in batch.candidates]
        selected = select_pairs(candidates, config.per_gender, races=list(RACES))
        write_pair_file(selected, out_path)
        typer.secho(
            f"Selected {len(selected)} pairs -> {out_path}", fg=typer.colors.GREEN
        )


@app.command()
def verify(
    config_path: Path = ConfigOption,
    pairs: str = typer.Option(
        None, "--pairs", "-p", help="Pair file or reference:<model>"
    ),
    limit: int = typer.Option(None, "--limit", "-n", help="Verify at most N pairings"),
) -> None:
    """Ask the three probing questions for every pairing and amount."""
    with _exit_on_error():
        config = load_config(
            config_path, {"pair_file": pairs, "verification_limit": limit}
        )
        validate_paths(config, {"pairs"})
        templates = load_templates(config.templates_path)
        grouped = pairs_by_group(load_pairs(config.pair_file))

        specs = []
        seen: set[tuple[str, str]] = set()
        for design in designs_from_config(config):
            check_pairs(grouped, design)
            for trustee_group in design.trustee_groups:
                for spec in enumerate_games(
                    grouped[design.investor_group],
                    grouped[trustee_group],
                    design.pairs_per_group,
                    design.amt_a,
                    design.amt_b,
                    design.prompt_style,
                ):
                    key = (spec.investor.display, spec.trustee.display)
                    if key not in seen:
                        seen.add(key)
                        specs.append(spec)
        if config.verification_limit is not None:
            specs = specs[: config.verification_limit]

        async def run_checks():
            async with _client(config) as client:
                return await asyncio.gather(
                    *(verify_prompt(spec, client, templates) for spec in specs)
                )

        reports = asyncio.run(run_checks())
        checks = [
            PairingCheck(
                investor=r.spec.investor.display,
                trustee=r.spec.trustee.display,
                amt=c.amt,
                q1_ok=c.q1_ok,
                q2_ok=c.q2_ok,
                q3_ok=c.q3_ok,
                q1_answer=c.answers[0],
                q2_answer=c.answers[1],
                q3_answer=c.answers[2],
            )
            for r in reports
            for c in r.per_amt.values()
        ]
        summary = VerificationSummary(
            model_id=config.backend.model_id,
            prompt_style=config.backend.prompt_style.value,
            pairings=len(reports),
            passed_pairings=sum(r.passed for r in reports),
            rows=len(checks),
            passed_rows=sum(c.passed for c in checks),
            failed_pairings=[
                (r.spec.investor.display, r.spec.trustee.display)
                for r in reports
                if not r.passed
            ],
        )
        directory = verification_dir(config.output_dir, config.backend.model_id)
        save_verification(directory, summary, checks)

        color = typer.colors.GREEN if summary.pass_rate == 1.0 else typer.colors.YELLOW
        typer.secho(
            f"{summary.passed_pairings}/{summary.pairings} pairings passed "
            f"({summary.passed_rows}/{summary.rows} rows) -> {directory}",
            fg=color,
        )


@app.command()
def run(
    config_path: Path = ConfigOption,
    pairs: str = typer.Option(
        None, "--pairs", "-p", help="Pair file or reference:<model>"
    ),
    investor: list[str] = typer.Option(
        None, "--investor", "-i", help="Investor group as 'Race,G' (repeatable)"
    ),
    run_id: str = typer.Option(None, "--run-id", help="Run directory name"),
) -> None:
    """Play every Trust Game of the configured experiments."""
    with _exit_on_error():
        config = load_config(
            config_path,
            {
                "pair_file": pairs,
                "experiment.investor_groups": list(investor) if investor else None,
            },
        )
        validate_paths(config, {"pairs"})
        templates = load_templates(config.templates_path)
        pair_list = load_pairs(config.pair_file)
        grouped = pairs_by_group(pair_list)
        for design in designs_from_config(config):
            check_pairs(grouped, design)

        blocked: set[tuple[str, str]] = set()
        if config.gate_on_verification:
            summary = load_verification(
                verification_dir(config.output_dir, config.backend.model_id)
            )
            blocked = {tuple(p) for p in summary.failed_pairings}

        run_dir = RunDirectory(config.output_dir / resolve_run_id(config, run_id))

        async def run_games():
            async with _client(config) as client:
                return await execute_run(
                    config, pair_list, client, run_dir, templates, blocked
                )

        with run_dir.lock():
            manifest = asyncio.run(run_games())

        for status in manifest.experiments.values():
            line = (
                f"  {status.experiment_id}: {status.completed_games}/"
                f"{status.expected_games} games"
            )
            if status.failures:
                typer.secho(
                    f"{line}, {len(status.failures)} failed", fg=typer.colors.YELLOW
                )
            else:
                typer.echo(line)
        typer.echo(
            f"Run written to {run_dir.path} "
            f"({manifest.backend_calls} backend calls, "
            f"{manifest.cache_hits} cache hits)"
        )


def _analyze_experiment(
    run_dir: RunDirectory,
    experiment_id: str,
    expected_games: int,
    config: RunConfig,
    allow_incomplete: bool,
) -> ExperimentAnalysis:
    """Analyze one experiment from its raw records.

    Raises:
        IncompleteRunError: If games failed and ``allow_incomplete`` is off.
    """
    cells, failures = load_experiment(run_dir, experiment_id)
    completed = sum(len(c.outcomes) for c in cells)
    if failures or completed != expected_games:
        if not allow_incomplete:
            raise IncompleteRunError(
                f"{run_dir.path}: experiment {experiment_id} has {completed}/"
                f"{expected_games} games (use --allow-incomplete)"
            )
        cells = balance_cells(cells)
    return analyze_experiment(
        experiment_id, cell_values(cells), config.anova_alpha, config.posthoc_alpha
    )


def _plot_title(model_id: str, experiment_id: str) -> str:
    return f"{model_id}: {experiment_id} investors"


@app.command()
def analyze(
    run_dirs: list[Path] = typer.Argument(..., help="Run directories"),
    config_path: Path = ConfigOption,
    allow_incomplete: bool = typer.Option(
        False, "--allow-incomplete", help="Analyze runs with failed games"
    ),
) -> None:
    """ANOVA, post-hoc tests and interaction plots for one or more runs.

    With several runs, also writes a side-by-side comparison plot per
    investor group the runs share.
    """
    with _exit_on_error():
        runs = [RunDirectory(path) for path in run_dirs]
        manifests = [r.load_manifest() for r in runs]
        results = []
        for run_dir, manifest in zip(runs, manifests):
            if config_path is not None:
                config = load_config(config_path)
            else:
                config = RunConfig.model_validate(manifest.config)
            allow = allow_incomplete or config.allow_incomplete
            analyses: dict[str, ExperimentAnalysis] = {}
            with run_dir.lock():
                for experiment_id, status in manifest.experiments.items():
                    analysis = _analyze_experiment(
                        run_dir, experiment_id, status.expected_games, config, allow
                    )
                    paths = write_analysis(
                        analysis,
                        run_dir.analysis_dir / experiment_id,
                        _plot_title(manifest.model_id, experiment_id),
                    )
                    race = analysis.anova.race
                    typer.echo(
                        f"{manifest.run_id} {experiment_id}: race F({race.df}, "
                        f"{analysis.anova.residual.df}) = {race.f:.4f}, "
                        f"p = {race.p:.4g} -> {paths['plot']}"
                    )
                    analyses[experiment_id] = analysis
            results.append((manifest, analyses))

        if len(results) > 1:
            shared = set.intersection(*(set(a) for _, a in results))
            out_dir = runs[0].path.parent / "comparisons"
            for experiment_id in sorted(shared):
                panels = [
                    (f"{m.model_id} ({m.prompt_style})", a[experiment_id].cells)
                    for m, a in results
                ]
                path = plot_comparison(
                    panels,
                    f"{experiment_id} investors",
                    out_dir / f"{experiment_id}.svg",
                )
                typer.echo(f"Comparison plot -> {path}")


@app.command()
def report(
    run_dir_path: Path = typer.Argument(..., help="Run directory"),
) -> None:
    """Write report.md summarizing a run."""
    with _exit_on_error():
        run_dir = RunDirectory(run_dir_path)
        manifest = run_dir.load_manifest()
        config = RunConfig.model_validate(manifest.config)

        sections = []
        with run_dir.lock():
            for experiment_id, status in manifest.experiments.items():
                text = f"{status.completed_games}/{status.expected_games} games"
                if status.failures:
                    text += f", {len(status.failures)} failed"
                analysis = None
                try:
                    analysis = _analyze_experiment(
                        run_dir,
                        experiment_id,
                        status.expected_games,
                        config,
                        config.allow_incomplete,
                    )
                except IncompleteRunError:
                    logger.warning(f"{experiment_id} is incomplete; not analyzed")
                else:
                    write_analysis(
                        analysis,
                        run_dir.analysis_dir / experiment_id,
                        _plot_title(manifest.model_id, experiment_id),
                    )
                plot = f"analysis/{experiment_id}/interaction.svg"
                sections.append((experiment_id, analysis, text, plot))

        pass_rate = None
        try:
            pass_rate = load_verification(
                verification_dir(run_dir.path.parent, manifest.model_id)
            ).pass_rate
        except ConfigError:
            logger.debug(f"No verification report for {manifest.model_id}")

        text = render_report(
            manifest.run_id,
            manifest.model_id,
            manifest.prompt_style,
            sections,
            pass_rate,
        )
        path = run_dir.path / "report.md"
        path.write_text(text, encoding="utf-8")
        typer.echo(f"Report written to {path}")


if __name__ == "__main__":
    app()
