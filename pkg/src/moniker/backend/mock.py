"""Fixture-driven mock backend for offline runs and tests.

A fixture file is JSON::

    {
      "normalized": false,
      "entries": [
        {"prompt": "Mr\\. Nguyen is Asian", "continuation": "True", "score": -0.1},
        {"prompt": "will pass to the banker \\$$", "continuation": "10",
         "tokens": [-1.0, -0.5]}
      ]
    }

``prompt`` is a regular expression searched in the prompt; the first entry
matching both prompt and continuation wins. ``tokens`` lists per-token
log-probabilities and scores as their sum. Anything unmatched gets a
deterministic hash-derived score in [-5, 0].
"""

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from moniker.backend.protocol import ScoreRequest, ScoreResult
from moniker.errors import ConfigError

logger = logging.getLogger(__name__)

FALLBACK_RANGE = 5.0


@dataclass(frozen=True)
class FixtureEntry:
    pattern: re.Pattern[str]
    continuation: str
    score: float


def fallback_score(prompt: str, continuation: str, seed: int) -> float:
    """Deterministic pseudo-score in [-5, 0] for an unmatched pair."""
    digest = hashlib.sha256(
        f"{seed}\x00{prompt}\x00{continuation}".encode()
    ).digest()
    unit = int.from_bytes(digest[:8], "big") / 2**64
    return -FALLBACK_RANGE * unit


def load_fixtures(path: Path) -> tuple[list[FixtureEntry], bool]:
    """Parse a fixture file.

    Returns:
        Tuple of (entries in file order, whether scores are normalized).

    Raises:
        ConfigError: If the file is unreadable or malformed.
    """
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read mock fixtures {path}: {e}") from e

    if isinstance(data, list):
        data = {"entries": data}
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise ConfigError(f"{path}: expected an 'entries' list")

    entries: list[FixtureEntry] = []
    for index, raw in enumerate(data["entries"]):
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: entry {index} is not an object")
        try:
            pattern = re.compile(raw["prompt"])
            continuation = str(raw["continuation"])
            if "tokens" in raw:
                score = float(sum(float(t) for t in raw["tokens"]))
            else:
                score = float(raw["score"])
        except (KeyError, TypeError, ValueError, re.error) as e:
            raise ConfigError(f"{path}: entry {index} is malformed: {e}") from e
        entries.append(FixtureEntry(pattern, continuation, score))

    return entries, bool(data.get("normalized", False))


class MockBackend:
    """Backend answering from fixtures, then from a seeded hash."""

    def __init__(
        self,
        entries: list[FixtureEntry] | None = None,
        fallback_seed: int = 0,
        normalized: bool = False,
        name: str = "mock",
    ) -> None:
        self.entries = entries or []
        self.fallback_seed = fallback_seed
        self.normalized = normalized
        self.name = name
        self.requests: list[ScoreRequest] = []

    @classmethod
    def from_file(
        cls, path: Path | None, fallback_seed: int = 0, name: str = "mock"
    ) -> "MockBackend":
        """Build a mock from a fixture file (or none, for pure fallback)."""
        if path is None:
            return cls(fallback_seed=fallback_seed, name=name)
        entries, normalized = load_fixtures(path)
        logger.debug(f"Loaded {len(entries)} mock fixtures from {path}")
        return cls(entries, fallback_seed, normalized, name)

    @property
    def fixture_digest(self) -> str:
        """Hash of the fixture entries and the normalized flag."""
        material = json.dumps(
            [[e.pattern.pattern, e.continuation, e.score] for e in self.entries]
            + [self.normalized]
        )
        return hashlib.sha256(material.encode()).hexdigest()[:16]

    @property
    def identity(self) -> str:
        base = f"mock:{self.name}:{self.fallback_seed}"
        # cached scores must not outlive an edit to the fixtures
        if self.entries or self.normalized:
            return f"{base}:{self.fixture_digest}"
        return base

    def lookup(self, prompt: str, continuation: str) -> float:
        for entry in self.entries:
            if entry.continuation == continuation and entry.pattern.search(prompt):
                return entry.score
        return fallback_score(prompt, continuation, self.fallback_seed)

    async def score(self, request: ScoreRequest) -> ScoreResult:
        self.requests.append(request)
        scores = tuple(self.lookup(request.prompt, c) for c in request.continuations)
        return ScoreResult(scores=scores, normalized=self.normalized)

    async def aclose(self) -> None:
        pass
