"""Run directory layout and persistence.

A run directory holds::

    manifest.json                       config snapshot, hashes, status
    .lock                               present while a command owns the run
    experiments/<investor>/outcomes.jsonl   one raw record per game
    experiments/<investor>/failures.jsonl   games that produced no outcome
    experiments/<investor>/matrices/<trustee>.csv
    analysis/                           tables and plots from ``analyze``

Outcome files are written sorted by (trustee cell, i, j) so reruns produce
byte-identical files.
"""

import hashlib
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from moniker.demographics import ALL_GROUPS
from moniker.errors import ConfigError, RunLockedError

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
LOCK_FILE = ".lock"
OUTCOMES_FILE = "outcomes.jsonl"
FAILURES_FILE = "failures.jsonl"

_CELL_ORDER = {group.label: index for index, group in enumerate(ALL_GROUPS)}


class OutcomeRecord(BaseModel):
    """One game's raw result."""

    experiment: str = Field(..., description="Investor group label, e.g. White-M")
    trustee_group: str = Field(..., description="Trustee group label")
    i: int = Field(..., description="Investor index in selection order")
    j: int = Field(..., description="Trustee index in selection order")
    investor: str
    trustee: str
    continuations: list[str]
    logprob_raw: list[float]
    probabilities: list[float]
    mean: float

    def sort_key(self) -> tuple[int, int, int]:
        return (_CELL_ORDER.get(self.trustee_group, len(_CELL_ORDER)), self.i, self.j)


class GameFailure(BaseModel):
    """A game that produced no outcome, and why."""

    experiment: str
    trustee_group: str
    i: int
    j: int
    investor: str
    trustee: str
    reason: str

    def sort_key(self) -> tuple[int, int, int]:
        return (_CELL_ORDER.get(self.trustee_group, len(_CELL_ORDER)), self.i, self.j)


class ExperimentStatus(BaseModel):
    """Completion bookkeeping for one experiment."""

    experiment_id: str
    investor_group: str
    pairs_per_group: int
    expected_games: int
    completed_games: int = 0
    failures: list[GameFailure] = Field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.completed_games == self.expected_games and not self.failures


class RunManifest(BaseModel):
    """Everything needed to audit how a run's numbers were produced."""

    run_id: str
    model_id: str
    prompt_style: str
    pair_file: str | None = None
    pair_file_sha256: str | None = None
    config: dict[str, Any] = Field(default_factory=dict)
    started_at: str
    finished_at: str | None = None
    experiments: dict[str, ExperimentStatus] = Field(default_factory=dict)
    backend_calls: int = 0
    cache_hits: int = 0

    @property
    def complete(self) -> bool:
        return bool(self.experiments) and all(
            e.complete for e in self.experiments.values()
        )


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def default_run_id(model_id: str, snapshot: dict[str, Any]) -> str:
    """Model id plus a short hash of the effective configuration."""
    digest = hashlib.sha256(
        json.dumps(snapshot, sort_keys=True).encode()
    ).hexdigest()[:8]
    safe_model = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in model_id)
    return f"{safe_model}-{digest}"


class RunLock:
    """Exclusive marker file guarding a run directory."""

    def __init__(self, directory: Path) -> None:
        self.path = directory / LOCK_FILE

    def __enter__(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise RunLockedError(
                f"{self.path.parent} is in use (remove {self.path} if stale)"
            ) from e
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.path.unlink(missing_ok=True)


class RunDirectory:
    """Paths and persistence for one run."""

    def __init__(self, path: Path) -> None:
        self.path = path

    @property
    def manifest_path(self) -> Path:
        return self.path / MANIFEST_FILE

    @property
    def analysis_dir(self) -> Path:
        return self.path / "analysis"

    def lock(self) -> RunLock:
        return RunLock(self.path)

    def experiment_dir(self, experiment_id: str) -> Path:
        return self.path / "experiments" / experiment_id

    def outcomes_path(self, experiment_id: str) -> Path:
        return self.experiment_dir(experiment_id) / OUTCOMES_FILE

    def failures_path(self, experiment_id: str) -> Path:
        return self.experiment_dir(experiment_id) / FAILURES_FILE

    def matrix_path(self, experiment_id: str, trustee_group: str) -> Path:
        return self.experiment_dir(experiment_id) / "matrices" / f"{trustee_group}.csv"

    def save_manifest(self, manifest: RunManifest) -> None:
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(
            manifest.model_dump_json(indent=2), encoding="utf-8"
        )

    def load_manifest(self) -> RunManifest:
        """Read the manifest.

        Raises:
            ConfigError: If the directory is not a run directory.
        """
        if not self.manifest_path.exists():
            raise ConfigError(
                f"{self.path} is not a run directory (no {MANIFEST_FILE})"
            )
        return RunManifest.model_validate_json(
            self.manifest_path.read_text(encoding="utf-8")
        )

    def write_outcomes(self, experiment_id: str, records: list[OutcomeRecord]) -> Path:
        path = self.outcomes_path(experiment_id)
        _write_jsonl(path, sorted(records, key=OutcomeRecord.sort_key))
        return path

    def write_failures(self, experiment_id: str, failures: list[GameFailure]) -> Path:
        path = self.failures_path(experiment_id)
        _write_jsonl(path, sorted(failures, key=GameFailure.sort_key))
        return path

    def experiment_ids(self) -> list[str]:
        root = self.path / "experiments"
        if not root.exists():
            return []
        return sorted(p.name for p in root.iterdir() if (p / OUTCOMES_FILE).exists())


def _write_jsonl(path: Path, models: list[BaseModel]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as f:
        for model in models:
            f.write(model.model_dump_json() + "\n")
    os.replace(tmp, path)


def load_outcomes(path: Path) -> list[OutcomeRecord]:
    """Read raw outcome records back, in file order."""
    if not path.exists():
        return []
    with path.open(encoding="utf-8") as f:
        return [OutcomeRecord.model_validate_json(line) for line in f if line.strip()]


def load_failures(path: Path) -> list[GameFailure]:
    if not path.exists():
        return []
    with path.open(encoding="utf-8") as f:
        return [GameFailure.model_validate_json(line) for line in f if line.strip()]


class PairingCheck(BaseModel):
    """Probing-question flags for one (investor, trustee, amount)."""

    investor: str
    trustee: str
    amt: int
    q1_ok: bool
    q2_ok: bool
    q3_ok: bool
    q1_answer: str | None = None
    q2_answer: str | None = None
    q3_answer: str | None = None

    @property
    def passed(self) -> bool:
        return self.q1_ok and self.q2_ok and self.q3_ok


class VerificationSummary(BaseModel):
    """Verification results for a model, as written by ``verify``."""

    model_id: str
    prompt_style: str
    pairings: int
    passed_pairings: int
    rows: int
    passed_rows: int
    failed_pairings: list[tuple[str, str]] = Field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        return self.passed_pairings / self.pairings if self.pairings else 0.0


def verification_dir(output_dir: Path, model_id: str) -> Path:
    safe_model = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in model_id)
    return output_dir / "verification" / safe_model


def save_verification(
    directory: Path, summary: VerificationSummary, checks: list[PairingCheck]
) -> None:
    """Write ``verification.json`` and the per-row ``verification.jsonl``."""
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "verification.json").write_text(
        summary.model_dump_json(indent=2), encoding="utf-8"
    )
    _write_jsonl(directory / "verification.jsonl", checks)


def load_verification(directory: Path) -> VerificationSummary:
    """Read a verification summary.

    Raises:
        ConfigError: If ``verify`` has not been run for this model.
    """
    path = directory / "verification.json"
    if not path.exists():
        raise ConfigError(
            f"No verification report at {path}; run 'moniker verify' first"
        )
    return VerificationSummary.model_validate_json(path.read_text(encoding="utf-8"))
