"""Model scoring backends."""

from moniker.backend.cache import ScoreCache
from moniker.backend.client import ScoringClient, create_backend, create_client
from moniker.backend.distribution import (
    CompletionDistribution,
    expected_value,
    integer_values,
    renormalize,
)
from moniker.backend.http import HttpBackend
from moniker.backend.mock import MockBackend
from moniker.backend.protocol import ScoreBackend, ScoreRequest, ScoreResult

__all__ = [
    "CompletionDistribution",
    "HttpBackend",
    "MockBackend",
    "ScoreBackend",
    "ScoreCache",
    "ScoreRequest",
    "ScoreResult",
    "ScoringClient",
    "create_backend",
    "create_client",
    "expected_value",
    "integer_values",
    "renormalize",
]
