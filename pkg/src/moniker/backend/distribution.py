"""Conditional completion distributions.

A model's raw log-scores over a designated set of candidate continuations are
renormalized with a softmax into a distribution over that set, and the
model's prediction is the expected value of the distribution.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from moniker.errors import NumericError

SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CompletionDistribution:
    """Probabilities over candidate continuations, in request order."""

    continuations: tuple[str, ...]
    logprob_raw: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.continuations)

    def probability_of(self, continuation: str) -> float:
        return self.probabilities[self.continuations.index(continuation)]

    def argmax(self) -> str:
        """Most probable continuation; the earliest one wins ties."""
        return self.continuations[int(np.argmax(self.probabilities))]

    def entries(self) -> list[tuple[str, float, float]]:
        return list(zip(self.continuations, self.logprob_raw, self.probabilities))


def renormalize(
    raw_scores: Sequence[float], continuations: Sequence[str] | None = None
) -> CompletionDistribution:
    """Softmax raw log-scores over the candidate set.

    Probabilities are exp(s_i - logsumexp(s)), computed in log space.

    Args:
        raw_scores: One log-score per candidate.
        continuations: Candidate strings; defaults to "0", "1", ... .

    Returns:
        The renormalized distribution.

    Raises:
        NumericError: If the list is empty or any score is not finite.
        ValueError: If scores and continuations differ in length.
    """
    scores = np.asarray(raw_scores, dtype=float)
    if scores.size == 0:
        raise NumericError("Cannot renormalize an empty score list")
    if not np.all(np.isfinite(scores)):
        raise NumericError(f"Non-finite score in {list(raw_scores)}")
    if continuations is None:
        continuations = [str(i) for i in range(scores.size)]
    if len(continuations) != scores.size:
        raise ValueError(
            f"{scores.size} scores for {len(continuations)} continuations"
        )

    probabilities = np.exp(scores - logsumexp(scores))
    return CompletionDistribution(
        continuations=tuple(continuations),
        logprob_raw=tuple(float(s) for s in scores),
        probabilities=tuple(float(p) for p in probabilities),
    )


def expected_value(
    dist: CompletionDistribution, value_of: Mapping[str, float]
) -> float:
    """Probability-weighted mean of the values attached to each continuation.

    The result is clamped to the value range to absorb float rounding.

    Raises:
        ValueError: If a continuation has no value.
    """
    missing = [c for c in dist.continuations if c not in value_of]
    if missing:
        raise ValueError(f"No value for continuations: {missing}")
    values = np.array([value_of[c] for c in dist.continuations], dtype=float)
    mean = float(np.dot(np.asarray(dist.probabilities), values))
    return min(max(mean, float(values.min())), float(values.max()))


def integer_values(continuations: Sequence[str]) -> dict[str, float]:
    """Map integer candidate strings to their numeric value."""
    return {c: float(int(c)) for c in continuations}


def valid_mass(raw_scores: Sequence[float]) -> float:
    """Total probability a full-vocabulary model puts on the candidate set."""
    return float(np.exp(logsumexp(np.asarray(raw_scores, dtype=float))))
