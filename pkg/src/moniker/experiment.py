"""Balanced 2x5 factorial Trust Game experiments.

Each experiment fixes one investor group and plays its pairs against the
pairs of all ten trustee groups. Game (i, j) pits investor pair i against
trustee pair j; the diagonal i == j is dropped in every cell, which removes
same-name games from same-group cells and keeps all cells the same size.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from moniker.backend.client import ScoringClient
from moniker.config import PromptStyle, RunConfig, config_snapshot, is_reference_pairs
from moniker.demographics import ALL_GROUPS, Group
from moniker.errors import BackendError, ConfigError, DesignError, NumericError
from moniker.game import GameSpec, Player, predict_investment
from moniker.probe import GenderSurnamePair, pairs_by_group
from moniker.prompts import PromptTemplates
from moniker.rundir import (
    ExperimentStatus,
    GameFailure,
    OutcomeRecord,
    RunDirectory,
    RunManifest,
    default_run_id,
    file_sha256,
    load_failures,
    load_outcomes,
    utc_now,
)

logger = logging.getLogger(__name__)

VERIFICATION_GATE = "verification gate"


@dataclass(frozen=True)
class ExperimentDesign:
    """One investor group crossed with every trustee group."""

    investor_group: Group
    pairs_per_group: int = 17
    amt_a: int = 10
    amt_b: int = 2
    prompt_style: PromptStyle = PromptStyle.BASE_LLAMA_MISTRAL
    model_id: str = "unnamed-model"
    run_id: str | None = None
    trustee_groups: tuple[Group, ...] = ALL_GROUPS

    @property
    def experiment_id(self) -> str:
        return self.investor_group.label

    @property
    def games_per_cell(self) -> int:
        return self.pairs_per_group**2 - self.pairs_per_group

    @property
    def total_games(self) -> int:
        return self.games_per_cell * len(self.trustee_groups)


@dataclass
class CellResult:
    """Outcomes of every game against one trustee group."""

    trustee_group: Group
    outcomes: list[OutcomeRecord] = field(default_factory=list)

    def values(self) -> list[float]:
        return [o.mean for o in self.outcomes]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values())) if self.outcomes else math.nan

    @property
    def stddev(self) -> float:
        return float(np.std(self.values(), ddof=1)) if len(self.outcomes) > 1 else 0.0


@dataclass
class ExperimentRun:
    """Raw results of one experiment before aggregation."""

    design: ExperimentDesign
    records: list[OutcomeRecord]
    failures: list[GameFailure]


def game_indices(n: int) -> list[tuple[int, int]]:
    """Every (i, j) with i != j, row-major."""
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def enumerate_games(
    investor_pairs: list[GenderSurnamePair],
    trustee_pairs: list[GenderSurnamePair],
    pairs_per_group: int = 17,
    amt_a: int = 10,
    amt_b: int = 2,
    prompt_style: PromptStyle = PromptStyle.BASE_LLAMA_MISTRAL,
) -> list[GameSpec]:
    """Games for one cell, aligned with ``game_indices(pairs_per_group)``.

    Raises:
        DesignError: If either list does not hold exactly ``pairs_per_group``.
    """
    for role, pairs in (("investor", investor_pairs), ("trustee", trustee_pairs)):
        if len(pairs) != pairs_per_group:
            raise DesignError(
                f"Expected {pairs_per_group} {role} pairs, got {len(pairs)}"
            )
    return [
        GameSpec(
            investor=Player(investor_pairs[i]),
            trustee=Player(trustee_pairs[j]),
            amt_a=amt_a,
            amt_b=amt_b,
            prompt_style=prompt_style,
        )
        for i, j in game_indices(pairs_per_group)
    ]


def check_pairs(
    grouped: dict[Group, list[GenderSurnamePair]], design: ExperimentDesign
) -> None:
    """Ensure every group the design needs has exactly enough pairs.

    Raises:
        ConfigError: Naming each group that is missing or the wrong size.
    """
    needed = {design.investor_group, *design.trustee_groups}
    problems = [
        f"{group.label} has {len(grouped.get(group, []))} pairs"
        for group in ALL_GROUPS
        if group in needed and len(grouped.get(group, [])) != design.pairs_per_group
    ]
    if problems:
        raise ConfigError(
            f"Pair file must give {design.pairs_per_group} pairs per group: "
            + "; ".join(problems)
        )


async def run_experiment(
    design: ExperimentDesign,
    grouped: dict[Group, list[GenderSurnamePair]],
    client: ScoringClient,
    templates: PromptTemplates | None = None,
    blocked: set[tuple[str, str]] | None = None,
) -> ExperimentRun:
    """Play every game of the design.

    Games whose (investor, trustee) pairing is in ``blocked`` and games the
    backend cannot score are recorded as failures; they never abort the run.
    """
    check_pairs(grouped, design)
    investors = grouped[design.investor_group]
    blocked = blocked or set()

    async def play(
        trustee_group: Group, i: int, j: int, spec: GameSpec
    ) -> OutcomeRecord | GameFailure:
        base = {
            "experiment": design.experiment_id,
            "trustee_group": trustee_group.label,
            "i": i,
            "j": j,
            "investor": spec.investor.display,
            "trustee": spec.trustee.display,
        }
        if (spec.investor.display, spec.trustee.display) in blocked:
            return GameFailure(**base, reason=VERIFICATION_GATE)
        try:
            outcome = await predict_investment(spec, client, templates)
        except (BackendError, NumericError) as e:
            logger.error(
                f"Game {spec.investor.display} x {spec.trustee.display} failed: {e}"
            )
            return GameFailure(**base, reason=str(e))
        dist = outcome.distribution
        return OutcomeRecord(
            **base,
            continuations=list(dist.continuations),
            logprob_raw=list(dist.logprob_raw),
            probabilities=list(dist.probabilities),
            mean=outcome.mean,
        )

    tasks = []
    indices = game_indices(design.pairs_per_group)
    for trustee_group in design.trustee_groups:
        specs = enumerate_games(
            investors,
            grouped[trustee_group],
            design.pairs_per_group,
            design.amt_a,
            design.amt_b,
            design.prompt_style,
        )
        tasks.extend(
            play(trustee_group, i, j, spec) for (i, j), spec in zip(indices, specs)
        )

    logger.info(f"Experiment {design.experiment_id}: playing {len(tasks)} games")
    results = await asyncio.gather(*tasks)
    records = [r for r in results if isinstance(r, OutcomeRecord)]
    failures = [r for r in results if isinstance(r, GameFailure)]
    if failures:
        logger.warning(
            f"Experiment {design.experiment_id}: {len(failures)} games failed"
        )
    return ExperimentRun(design, records, failures)


def build_cells(
    records: list[OutcomeRecord], trustee_groups: tuple[Group, ...] = ALL_GROUPS
) -> list[CellResult]:
    """Group raw records into cells, ordered race-major then M, F."""
    by_label = {group.label: CellResult(group) for group in trustee_groups}
    for record in records:
        if record.trustee_group in by_label:
            by_label[record.trustee_group].outcomes.append(record)
    return [by_label[group.label] for group in trustee_groups]


def cell_values(cells: list[CellResult]) -> dict[Group, list[float]]:
    return {cell.trustee_group: cell.values() for cell in cells}


def export_matrix(cell: CellResult, pairs_per_group: int | None = None) -> pd.DataFrame:
    """Investor-by-trustee table of game means; omitted games stay empty.

    Built from the cell's raw records alone.
    """
    n = pairs_per_group or (max((max(o.i, o.j) for o in cell.outcomes), default=-1) + 1)
    investors = [""] * n
    trustees = [""] * n
    grid = np.full((n, n), np.nan)
    for o in cell.outcomes:
        investors[o.i] = o.investor
        trustees[o.j] = o.trustee
        grid[o.i, o.j] = o.mean
    frame = pd.DataFrame(grid, index=investors, columns=trustees)
    frame.index.name = "investor"
    return frame


def write_matrix(
    cell: CellResult, path: Path, pairs_per_group: int | None = None
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    export_matrix(cell, pairs_per_group).to_csv(path, float_format="%.4f", na_rep="")


def designs_from_config(
    config: RunConfig, run_id: str | None = None
) -> list[ExperimentDesign]:
    settings = config.experiment
    return [
        ExperimentDesign(
            investor_group=group,
            pairs_per_group=settings.pairs_per_group,
            amt_a=settings.amt_a,
            amt_b=settings.amt_b,
            prompt_style=config.backend.prompt_style,
            model_id=config.backend.model_id,
            run_id=run_id,
        )
        for group in settings.investor_groups
    ]


def start_manifest(
    config: RunConfig, run_id: str, designs: list[ExperimentDesign]
) -> RunManifest:
    pair_file = config.pair_file
    sha = None
    if pair_file and not is_reference_pairs(pair_file):
        sha = file_sha256(Path(pair_file))
    return RunManifest(
        run_id=run_id,
        model_id=config.backend.model_id,
        prompt_style=config.backend.prompt_style.value,
        pair_file=pair_file,
        pair_file_sha256=sha,
        config=config_snapshot(config),
        started_at=utc_now(),
        experiments={
            d.experiment_id: ExperimentStatus(
                experiment_id=d.experiment_id,
                investor_group=d.investor_group.label,
                pairs_per_group=d.pairs_per_group,
                expected_games=d.total_games,
            )
            for d in designs
        },
    )


async def execute_run(
    config: RunConfig,
    pairs: list[GenderSurnamePair],
    client: ScoringClient,
    run_dir: RunDirectory,
    templates: PromptTemplates | None = None,
    blocked: set[tuple[str, str]] | None = None,
) -> RunManifest:
    """Run every configured experiment into ``run_dir``.

    Raw outcomes are written before any matrix is derived from them. The
    caller holds the run lock.
    """
    designs = designs_from_config(config, run_dir.path.name)
    grouped = pairs_by_group(pairs)
    for design in designs:
        check_pairs(grouped, design)

    manifest = start_manifest(config, run_dir.path.name, designs)
    run_dir.save_manifest(manifest)

    for design in designs:
        result = await run_experiment(design, grouped, client, templates, blocked)
        run_dir.write_outcomes(design.experiment_id, result.records)
        run_dir.write_failures(design.experiment_id, result.failures)

        status = manifest.experiments[design.experiment_id]
        status.completed_games = len(result.records)
        status.failures = sorted(result.failures, key=GameFailure.sort_key)

        reloaded = load_outcomes(run_dir.outcomes_path(design.experiment_id))
        for cell in build_cells(reloaded, design.trustee_groups):
            write_matrix(
                cell,
                run_dir.matrix_path(design.experiment_id, cell.trustee_group.label),
                design.pairs_per_group,
            )

    manifest.backend_calls = client.backend_calls
    manifest.cache_hits = client.cache_hits
    manifest.finished_at = utc_now()
    run_dir.save_manifest(manifest)
    logger.info(
        f"Run {manifest.run_id} finished: {client.backend_calls} backend calls, "
        f"{client.cache_hits} cache hits"
    )
    return manifest


def resolve_run_id(config: RunConfig, run_id: str | None) -> str:
    return run_id or default_run_id(config.backend.model_id, config_snapshot(config))


def load_experiment(
    run_dir: RunDirectory, experiment_id: str
) -> tuple[list[CellResult], list[GameFailure]]:
    """Re-derive an experiment's cells from its raw records."""
    records = load_outcomes(run_dir.outcomes_path(experiment_id))
    failures = load_failures(run_dir.failures_path(experiment_id))
    return build_cells(records), failures


def balance_cells(cells: list[CellResult]) -> list[CellResult]:
    """Keep only the (i, j) games present in every cell.

    Applied to incomplete runs so a failed game removes the same game
    position from all cells, leaving the design balanced.
    """
    if not cells:
        return cells
    common = set.intersection(*({(o.i, o.j) for o in c.outcomes} for c in cells))
    dropped = sum(len(c.outcomes) for c in cells) - len(common) * len(cells)
    if dropped:
        logger.warning(f"Dropped {dropped} games to rebalance incomplete cells")
    return [
        CellResult(c.trustee_group, [o for o in c.outcomes if (o.i, o.j) in common])
        for c in cells
    ]
