"""Scoring client: cache, retry and a bound on in-flight requests."""

import asyncio
import logging
from collections.abc import Sequence
from pathlib import Path

from moniker.backend.cache import ScoreCache
from moniker.backend.distribution import (
    CompletionDistribution,
    renormalize,
    valid_mass,
)
from moniker.backend.http import HttpBackend
from moniker.backend.mock import MockBackend
from moniker.backend.protocol import ScoreBackend, ScoreRequest, ScoreResult
from moniker.config import BackendConfig
from moniker.errors import TransportError

logger = logging.getLogger(__name__)


class ScoringClient:
    """Wraps a backend with the on-disk cache, retries and parallelism bound.

    Only continuations missing from the cache are sent to the backend, so a
    rerun over a warm cache makes no backend calls at all.
    """

    def __init__(
        self,
        backend: ScoreBackend,
        cache: ScoreCache | None = None,
        max_parallel: int = 4,
        retries: int = 3,
        backoff_seconds: float = 0.5,
    ) -> None:
        self.backend = backend
        self.cache = cache
        self.retries = retries
        self.backoff_seconds = backoff_seconds
        self._semaphore = asyncio.Semaphore(max_parallel)
        self.backend_calls = 0
        self.cache_hits = 0

    async def __aenter__(self) -> "ScoringClient":
        return self

    async def __aexit__(self, *exc_info: object) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        await self.backend.aclose()

    async def score(self, request: ScoreRequest) -> ScoreResult:
        """Raw scores for a request, from the cache where possible.

        Raises:
            TransportError: Still failing after the configured retries.
            ProtocolError: The backend rejected the request.
        """
        identity = self.backend.identity
        cached: dict[str, tuple[float, bool]] = {}
        if self.cache is not None:
            for continuation in request.continuations:
                hit = self.cache.get(identity, request.prompt, continuation)
                if hit is not None:
                    cached[continuation] = hit
            self.cache_hits += len(cached)

        missing = tuple(c for c in request.continuations if c not in cached)
        if missing:
            result = await self._score_with_retry(
                ScoreRequest(request.prompt, missing)
            )
            for continuation, value in zip(missing, result.scores):
                cached[continuation] = (value, result.normalized)
                if self.cache is not None:
                    self.cache.put(
                        identity, request.prompt, continuation, value, result.normalized
                    )

        scores = tuple(cached[c][0] for c in request.continuations)
        normalized = all(cached[c][1] for c in request.continuations)
        return ScoreResult(scores=scores, normalized=normalized)

    async def _score_with_retry(self, request: ScoreRequest) -> ScoreResult:
        for attempt in range(self.retries):
            try:
                async with self._semaphore:
                    self.backend_calls += 1
                    return await self.backend.score(request)
            except TransportError as e:
                if attempt == self.retries - 1:
                    raise
                delay = self.backoff_seconds * 2**attempt
                logger.warning(
                    f"Transport error (attempt {attempt + 1}/{self.retries}), "
                    f"retrying in {delay:.1f}s: {e}"
                )
                await asyncio.sleep(delay)
        raise TransportError("No attempts configured")

    async def score_distribution(
        self, prompt: str, continuations: Sequence[str]
    ) -> tuple[CompletionDistribution, float | None]:
        """Renormalized distribution plus valid mass when the scores allow it."""
        result = await self.score(ScoreRequest(prompt, tuple(continuations)))
        dist = renormalize(result.scores, continuations)
        mass = valid_mass(result.scores) if result.normalized else None
        return dist, mass


def create_backend(config: BackendConfig) -> ScoreBackend:
    """Instantiate the backend a config names."""
    if config.kind == "mock":
        return MockBackend.from_file(
            config.fixtures, config.fallback_seed, name=config.model_id
        )
    return HttpBackend(
        endpoint=config.endpoint,
        model_id=config.model_id,
        timeout=config.timeout,
        normalized_default=config.normalized_scores,
    )


def create_client(
    config: BackendConfig, cache_dir: Path | None = None
) -> ScoringClient:
    """Build a ScoringClient from config; ``cache_dir`` overrides the config's."""
    directory = cache_dir or config.cache_dir
    cache = ScoreCache(directory) if directory is not None else None
    return ScoringClient(
        create_backend(config),
        cache=cache,
        max_parallel=config.max_parallel,
        retries=config.retries,
        backoff_seconds=config.backoff_seconds,
    )
