"""Two-way ANOVA, pooled t-tests and Cohen's d for factorial outcomes.

Tail probabilities come from the regularized incomplete beta function:
the F upper tail is I_{d2/(d2+d1 F)}(d2/2, d1/2) and the two-sided t tail
is I_{df/(df+t^2)}(df/2, 1/2).
"""

import logging
import math
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

from moniker.demographics import ALL_GROUPS, RACES, Gender, Group, Race
from moniker.errors import DesignError

logger = logging.getLogger(__name__)

Z_95 = 1.96


def _is_zero(value: float, scale: float) -> bool:
    # rounding noise in sums of squares grows with the data's magnitude
    return value <= 1e-20 * max(1.0, scale)


def f_sf(f: float, df1: int, df2: int) -> float:
    """Upper-tail probability of the F distribution."""
    if math.isnan(f):
        return 1.0
    if math.isinf(f):
        return 0.0
    if f <= 0:
        return 1.0
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


def t_two_sided(t: float, df: int) -> float:
    """Two-sided p-value of Student's t."""
    if math.isnan(t):
        return 1.0
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class AnovaRow:
    effect: str
    sum_of_squares: float
    df: int
    mean_square: float
    f: float | None = None
    p: float | None = None


@dataclass(frozen=True)
class AnovaTable:
    """Fixed-effects two-way ANOVA with interaction."""

    gender: AnovaRow
    race: AnovaRow
    interaction: AnovaRow
    residual: AnovaRow
    n: int

    def rows(self) -> list[AnovaRow]:
        return [self.gender, self.race, self.interaction, self.residual]

    @property
    def total_ss(self) -> float:
        return sum(row.sum_of_squares for row in self.rows())


def two_way_anova(
    observations: Sequence[tuple[Hashable, Hashable, float]],
) -> AnovaTable:
    """Decompose variance into gender, race, interaction and residual.

    Args:
        observations: (gender, race, value) triples. Level labels may be any
            hashable; the first factor is reported as gender.

    Returns:
        The ANOVA table.

    Raises:
        DesignError: Missing or unequal cells, or no replication.
    """
    if not observations:
        raise DesignError("No observations")
    a_levels = sorted({o[0] for o in observations}, key=str)
    b_levels = sorted({o[1] for o in observations}, key=str)
    a_index = {level: k for k, level in enumerate(a_levels)}
    b_index = {level: k for k, level in enumerate(b_levels)}

    cells: list[list[list[float]]] = [[[] for _ in b_levels] for _ in a_levels]
    for a, b, value in observations:
        cells[a_index[a]][b_index[b]].append(float(value))

    sizes = {len(cell) for row in cells for cell in row}
    if 0 in sizes:
        raise DesignError("Every (gender, race) cell needs observations")
    if len(sizes) != 1:
        raise DesignError(f"Unbalanced design: cell sizes {sorted(sizes)}")
    n = sizes.pop()
    if len(a_levels) < 2 or len(b_levels) < 2:
        raise DesignError("Each factor needs at least two levels")
    if n < 2:
        raise DesignError("Need at least two observations per cell")

    data = np.array(cells, dtype=float)  # shape (a, b, n)
    a, b = len(a_levels), len(b_levels)
    grand = data.mean()
    cell_means = data.mean(axis=2)
    a_means = data.mean(axis=(1, 2))
    b_means = data.mean(axis=(0, 2))

    ss_a = n * b * float(np.sum((a_means - grand) ** 2))
    ss_b = n * a * float(np.sum((b_means - grand) ** 2))
    interaction = cell_means - a_means[:, None] - b_means[None, :] + grand
    ss_ab = n * float(np.sum(interaction**2))
    ss_res = float(np.sum((data - cell_means[:, :, None]) ** 2))

    scale = float(np.sum(data**2))
    ss_a, ss_b, ss_ab, ss_res = (
        0.0 if _is_zero(ss, scale) else ss for ss in (ss_a, ss_b, ss_ab, ss_res)
    )

    df_a, df_b = a - 1, b - 1
    df_ab = df_a * df_b
    df_res = a * b * (n - 1)
    ms_res = ss_res / df_res

    def effect(name: str, ss: float, df: int) -> AnovaRow:
        ms = ss / df
        if ms_res == 0.0:
            f = math.inf if ss > 0 else math.nan
        else:
            f = ms / ms_res
        return AnovaRow(name, ss, df, ms, f, f_sf(f, df, df_res))

    return AnovaTable(
        gender=effect("gender", ss_a, df_a),
        race=effect("race", ss_b, df_b),
        interaction=effect("interaction", ss_ab, df_ab),
        residual=AnovaRow("residual", ss_res, df_res, ms_res),
        n=int(data.size),
    )


@dataclass(frozen=True)
class TTestResult:
    """Pooled two-sample t-test of group_a minus group_b."""

    group_a: str
    group_b: str
    t: float
    df: int
    p: float
    cohens_d: float
    mean_diff: float


def _pooled_variance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = a.size, b.size
    return ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)


def _validate_samples(
    a: Sequence[float], b: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    x, y = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        raise DesignError(
            f"Each sample needs at least 2 values, got {x.size} and {y.size}"
        )
    return x, y


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference (a minus b) with the pooled SD.

    Raises:
        DesignError: If either sample has fewer than two values.
    """
    x, y = _validate_samples(a, b)
    diff = float(x.mean() - y.mean())
    pooled = _pooled_variance(x, y)
    scale = float(np.sum(x**2) + np.sum(y**2))
    if _is_zero(pooled, scale):
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / math.sqrt(pooled)


def t_test(
    a: Sequence[float],
    b: Sequence[float],
    group_a: str = "a",
    group_b: str = "b",
) -> TTestResult:
    """Student's two-sample t-test with pooled variance (df = na + nb - 2).

    Raises:
        DesignError: If either sample has fewer than two values.
    """
    x, y = _validate_samples(a, b)
    df = x.size + y.size - 2
    diff = float(x.mean() - y.mean())
    pooled = _pooled_variance(x, y)
    scale = float(np.sum(x**2) + np.sum(y**2))
    if _is_zero(pooled, scale):
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        t = diff / math.sqrt(pooled * (1.0 / x.size + 1.0 / y.size))
    return TTestResult(
        group_a=group_a,
        group_b=group_b,
        t=t,
        df=df,
        p=t_two_sided(t, df),
        cohens_d=cohens_d(x, y),
        mean_diff=diff,
    )


class CellSummary(NamedTuple):
    """Mean and normal-approximation 95% CI half-width of one cell."""

    group: Group
    n: int
    mean: float
    sd: float
    ci_half_width: float


def interaction_summary(cells: Mapping[Group, Sequence[float]]) -> list[CellSummary]:
    """Per-cell means and 95% CIs, ordered race-major then M, F."""
    summaries = []
    for group in ALL_GROUPS:
        if group not in cells:
            continue
        values = np.asarray(cells[group], dtype=float)
        n = int(values.size)
        mean = float(values.mean()) if n else math.nan
        sd = float(values.std(ddof=1)) if n > 1 else 0.0
        half = Z_95 * sd / math.sqrt(n) if n else math.nan
        summaries.append(CellSummary(group, n, mean, sd, half))
    return summaries


def posthoc_gender(cells: Mapping[Group, Sequence[float]]) -> list[TTestResult]:
    """Female-minus-male t-test within each race present in both genders."""
    results = []
    for race in RACES:
        female, male = Group(race, Gender.F), Group(race, Gender.M)
        if female in cells and male in cells:
            results.append(
                t_test(cells[female], cells[male], female.label, male.label)
            )
    return results


def anova_observations(
    cells: Mapping[Group, Sequence[float]],
) -> list[tuple[Gender, Race, float]]:
    return [
        (group.gender, group.race, float(value))
        for group in ALL_GROUPS
        if group in cells
        for value in cells[group]
    ]


def _finite_or_none(value):
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {key: _finite_or_none(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_finite_or_none(item) for item in value]
    return value


@dataclass
class ExperimentAnalysis:
    """Everything ``analyze`` reports for one experiment."""

    experiment_id: str
    anova: AnovaTable
    posthoc: list[TTestResult]
    cells: list[CellSummary]
    anova_alpha: float
    posthoc_alpha: float
    significant: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Plain values for JSON; undefined or infinite statistics become None."""
        return _finite_or_none({
            "experiment_id": self.experiment_id,
            "anova": [asdict(row) for row in self.anova.rows()],
            "n": self.anova.n,
            "posthoc": [
                {**asdict(r), "significant": r.p < self.posthoc_alpha}
                for r in self.posthoc
            ],
            "cells": [
                {
                    "group": c.group.label,
                    "n": c.n,
                    "mean": c.mean,
                    "sd": c.sd,
                    "ci_half_width": c.ci_half_width,
                }
                for c in self.cells
            ],
            "anova_alpha": self.anova_alpha,
            "posthoc_alpha": self.posthoc_alpha,
            "significant": self.significant,
        })


def analyze_experiment(
    experiment_id: str,
    cells: Mapping[Group, Sequence[float]],
    anova_alpha: float = 0.001,
    posthoc_alpha: float = 0.01,
) -> ExperimentAnalysis:
    """ANOVA, post-hoc gender tests and cell summaries with significance flags."""
    anova = two_way_anova(anova_observations(cells))
    significant = {
        row.effect: row.p is not None and row.p < anova_alpha
        for row in anova.rows()[:3]
    }
    logger.info(
        f"{experiment_id}: race F({anova.race.df}, {anova.residual.df}) = "
        f"{anova.race.f:.4f}, p = {anova.race.p:.4g}"
    )
    return ExperimentAnalysis(
        experiment_id=experiment_id,
        anova=anova,
        posthoc=posthoc_gender(cells),
        cells=interaction_summary(cells),
        anova_alpha=anova_alpha,
        posthoc_alpha=posthoc_alpha,
        significant=significant,
    )
