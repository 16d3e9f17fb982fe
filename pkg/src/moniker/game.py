"""Trust Game prompts, investment prediction and construct-validity checks.

The investor (Player A) may pass money to a banker, who gives the trustee
(Player B) three times the amount. The model fills in the investment after
a trailing "$"; the prediction is the expected value of its distribution
over "0".."amt_a".
"""

import asyncio
import logging
from dataclasses import dataclass, field

from moniker.backend.client import ScoringClient
from moniker.backend.distribution import (
    CompletionDistribution,
    expected_value,
    integer_values,
)
from moniker.config import PromptStyle
from moniker.demographics import POSSESSIVE_PRONOUNS, SUBJECT_PRONOUNS
from moniker.errors import BackendError, DesignError, NumericError
from moniker.probe import GenderSurnamePair
from moniker.prompts import PromptTemplates

logger = logging.getLogger(__name__)

MULTIPLIER = 3
MIN_VERIFY_CANDIDATES = 40


@dataclass(frozen=True)
class Player:
    """A named player in the game."""

    pair: GenderSurnamePair

    @property
    def display(self) -> str:
        return self.pair.display

    @property
    def pronoun_subject(self) -> str:
        return SUBJECT_PRONOUNS[self.pair.gender]

    @property
    def pronoun_possessive(self) -> str:
        return POSSESSIVE_PRONOUNS[self.pair.gender]


@dataclass(frozen=True)
class GameSpec:
    """One game between an investor and a trustee."""

    investor: Player
    trustee: Player
    amt_a: int = 10
    amt_b: int = 2
    prompt_style: PromptStyle = PromptStyle.BASE_LLAMA_MISTRAL

    def __post_init__(self) -> None:
        if self.amt_a <= 0:
            raise DesignError(f"amt_a must be positive, got {self.amt_a}")
        if self.amt_b < 0:
            raise DesignError(f"amt_b must be non-negative, got {self.amt_b}")
        if self.investor.display == self.trustee.display:
            raise DesignError(f"{self.investor.display} cannot play against themself")

    def candidates(self) -> list[str]:
        """Investment answers "0".."amt_a"."""
        return [str(n) for n in range(self.amt_a + 1)]

    def values(self, amt: int | None = None) -> dict[str, object]:
        """Placeholder values for this game's templates."""
        values: dict[str, object] = {
            "pa": self.investor.display,
            "pb": self.trustee.display,
            "pa.pron.pos": self.investor.pronoun_possessive,
            "pa.pron.sub": self.investor.pronoun_subject,
            "pb.pron.pos": self.trustee.pronoun_possessive,
            "pb.pron.sub": self.trustee.pronoun_subject,
            "amt_a": self.amt_a,
            "amt_b": self.amt_b,
        }
        if amt is not None:
            values["amt"] = amt
        return values


@dataclass(frozen=True)
class GameOutcome:
    """The model's predicted investment for one game."""

    spec: GameSpec
    distribution: CompletionDistribution
    mean: float


@dataclass(frozen=True)
class AmountCheck:
    """Probing-question results for one hypothetical investment."""

    amt: int
    q1_ok: bool
    q2_ok: bool
    q3_ok: bool
    answers: tuple[str | None, str | None, str | None] = (None, None, None)

    @property
    def passed(self) -> bool:
        return self.q1_ok and self.q2_ok and self.q3_ok


@dataclass(frozen=True)
class VerificationReport:
    """Whether a model reads a game's scenario correctly at every amount."""

    spec: GameSpec
    per_amt: dict[int, AmountCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.per_amt.values())


def _frame(style: PromptStyle) -> str:
    return "game.instruct" if style == PromptStyle.INSTRUCT else "game.base"


def _render(
    spec: GameSpec,
    templates: PromptTemplates,
    question: str,
    stem: str,
    amt: int | None = None,
    context: list[str] | None = None,
) -> str:
    values = spec.values(amt)
    scenario = templates.render("scenario", values)
    if context:
        scenario = f"{scenario}\n\n{' '.join(context)}"
    return templates.render(
        _frame(spec.prompt_style),
        {
            "scenario": scenario,
            "question": templates.render(question, values),
            "stem": templates.render(stem, values),
        },
    )


def render_game_prompt(spec: GameSpec, templates: PromptTemplates | None = None) -> str:
    """The investment prompt, ending with the "$" the model completes."""
    return _render(
        spec, templates or PromptTemplates(), "question.invest", "stem.invest"
    )


async def predict_investment(
    spec: GameSpec,
    client: ScoringClient,
    templates: PromptTemplates | None = None,
) -> GameOutcome:
    """Score "0".."amt_a" after the game prompt and take the expected value.

    Raises:
        BackendError: The backend could not score the prompt.
        NumericError: The backend returned non-finite scores.
    """
    prompt = render_game_prompt(spec, templates)
    candidates = spec.candidates()
    dist, _ = await client.score_distribution(prompt, candidates)
    mean = expected_value(dist, integer_values(candidates))
    return GameOutcome(spec=spec, distribution=dist, mean=mean)


def correct_answers(amt: int, amt_a: int = 10, amt_b: int = 2) -> tuple[int, int, int]:
    """Correct (received, trustee final, investor final) for an investment."""
    received = MULTIPLIER * amt
    return received, amt_b + received, amt_a - amt


def verification_candidates(amt_a: int = 10, amt_b: int = 2) -> list[str]:
    """Answer strings for the probing questions."""
    top = max(MIN_VERIFY_CANDIDATES, amt_b + MULTIPLIER * amt_a)
    return [str(n) for n in range(top + 1)]


def render_probing_question(
    spec: GameSpec,
    amt: int,
    question: int,
    known: tuple[int, ...] = (),
    templates: PromptTemplates | None = None,
) -> str:
    """One of the three probing questions for investment ``amt``.

    Args:
        spec: The game.
        amt: Hypothetical investment.
        question: 1 (trustee receives), 2 (trustee final), 3 (investor final).
        known: Correct answers to the earlier questions, added as context.
        templates: Template set.
    """
    templates = templates or PromptTemplates()
    names = {1: "receive", 2: "trustee_final", 3: "investor_final"}
    if question not in names:
        raise ValueError(f"question must be 1, 2 or 3, got {question}")
    values = spec.values(amt)
    context = [
        f"{templates.render(f'stem.{names[i + 1]}', values)}{answer}."
        for i, answer in enumerate(known[: question - 1])
    ]
    return _render(
        spec,
        templates,
        f"question.{names[question]}",
        f"stem.{names[question]}",
        amt=amt,
        context=context,
    )


async def verify_prompt(
    spec: GameSpec,
    client: ScoringClient,
    templates: PromptTemplates | None = None,
) -> VerificationReport:
    """Ask the three chained probing questions for every amount 0..amt_a.

    An answer is correct when it is the most probable candidate. A question
    is only asked once every earlier one was answered correctly; later ones
    are marked failed otherwise.
    """
    candidates = verification_candidates(spec.amt_a, spec.amt_b)

    async def check(amt: int) -> AmountCheck:
        expected = correct_answers(amt, spec.amt_a, spec.amt_b)
        oks: list[bool] = []
        answers: list[str | None] = []
        for question in (1, 2, 3):
            if oks and not oks[-1]:
                oks.append(False)
                answers.append(None)
                continue
            prompt = render_probing_question(
                spec, amt, question, expected[: question - 1], templates
            )
            try:
                dist, _ = await client.score_distribution(prompt, candidates)
            except (BackendError, NumericError) as e:
                logger.warning(
                    f"Probing question {question} failed for "
                    f"{spec.investor.display} x {spec.trustee.display} at ${amt}: {e}"
                )
                oks.append(False)
                answers.append(None)
                continue
            answer = dist.argmax()
            answers.append(answer)
            oks.append(answer == str(expected[question - 1]))
        return AmountCheck(amt, oks[0], oks[1], oks[2], tuple(answers))

    checks = await asyncio.gather(*(check(amt) for amt in range(spec.amt_a + 1)))
    return VerificationReport(spec=spec, per_amt={c.amt: c for c in checks})
