"""Scoring protocol shared by every backend."""

from dataclasses import dataclass
from typing import Protocol


@dataclass(frozen=True)
class ScoreRequest:
    """A prompt and the candidate continuations to score after it."""

    prompt: str
    continuations: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if not self.continuations:
            raise ValueError("at least one continuation is required")
        if len(set(self.continuations)) != len(self.continuations):
            raise ValueError(f"duplicate continuations in {self.continuations}")


@dataclass(frozen=True)
class ScoreResult:
    """Raw log-scores aligned with the request's continuations.

    ``normalized`` is True when the scores are full-vocabulary
    log-probabilities, so their exponentials are meaningful on their own.
    """

    scores: tuple[float, ...]
    normalized: bool = False


class ScoreBackend(Protocol):
    """Anything that can score continuations of a prompt."""

    @property
    def identity(self) -> str:
        """Stable name of the model behind the backend, used in cache keys."""
        ...

    async def score(self, request: ScoreRequest) -> ScoreResult: ...

    async def aclose(self) -> None: ...
