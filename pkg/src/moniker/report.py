"""Analysis tables, interaction plots and the run report.

Plot styling constants live here. Plots are SVG with their numbers
embedded in the ``Description`` metadata, and no timestamp, so reruns are
diffable.
"""

import json
import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from moniker.demographics import (  # noqa: E402
    DEFAULT_RACE_PHRASES,
    GENDERS,
    RACES,
    Group,
)
from moniker.stats import CellSummary, ExperimentAnalysis  # noqa: E402

logger = logging.getLogger(__name__)

FIG_WIDTH = 5.0
FIG_HEIGHT = 3.6
LINEWIDTH = 1.2
ELINEWIDTH = 0.75
CAPSIZE = 3
MARKERS = {"M": "o", "F": "s"}
COLORS = {"M": "#1f77b4", "F": "#d62728"}
SERIES_LABELS = {"M": "Male trustee", "F": "Female trustee"}
HASH_SALT = "moniker"

plt.rcParams["svg.hashsalt"] = HASH_SALT


def anova_frame(analysis: ExperimentAnalysis) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "effect": row.effect,
                "sum_of_squares": row.sum_of_squares,
                "df": row.df,
                "mean_square": row.mean_square,
                "F": row.f,
                "p": row.p,
                "significant": analysis.significant.get(row.effect),
            }
            for row in analysis.anova.rows()
        ]
    )


def posthoc_frame(analysis: ExperimentAnalysis) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "race": r.group_a.split("-")[0],
                "comparison": f"{r.group_a} - {r.group_b}",
                "mean_diff": r.mean_diff,
                "t": r.t,
                "df": r.df,
                "p": r.p,
                "cohens_d": r.cohens_d,
                "significant": r.p < analysis.posthoc_alpha,
            }
            for r in analysis.posthoc
        ]
    )


def cells_frame(summaries: Sequence[CellSummary]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "race": s.group.race.value,
                "gender": s.group.gender.value,
                "n": s.n,
                "mean": s.mean,
                "sd": s.sd,
                "ci_half_width": s.ci_half_width,
            }
            for s in summaries
        ]
    )


def plot_series(summaries: Sequence[CellSummary]) -> dict[str, dict[str, list[float]]]:
    """Per-gender means and CI half-widths across the five races."""
    by_group = {s.group: s for s in summaries}
    series = {}
    for gender in GENDERS:
        points = [by_group.get(Group(race, gender)) for race in RACES]
        series[gender.value] = {
            "mean": [p.mean if p else float("nan") for p in points],
            "ci": [p.ci_half_width if p else float("nan") for p in points],
        }
    return series


def _draw(ax: plt.Axes, summaries: Sequence[CellSummary], title: str) -> None:
    xs = list(range(len(RACES)))
    for gender, values in plot_series(summaries).items():
        ax.errorbar(
            xs,
            values["mean"],
            yerr=values["ci"],
            marker=MARKERS[gender],
            color=COLORS[gender],
            linewidth=LINEWIDTH,
            elinewidth=ELINEWIDTH,
            capsize=CAPSIZE,
            label=SERIES_LABELS[gender],
        )
    ax.set_xticks(xs)
    ax.set_xticklabels([DEFAULT_RACE_PHRASES[r] for r in RACES], rotation=20)
    ax.set_xlabel("Trustee race")
    ax.set_ylabel("Mean investment ($)")
    ax.set_title(title)
    ax.legend(frameon=False)


def _save(fig: plt.Figure, path: Path, title: str, data: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(
        path,
        format="svg",
        metadata={
            "Title": title,
            "Description": json.dumps(data, sort_keys=True),
            "Date": None,
        },
    )
    plt.close(fig)


def plot_interaction(summaries: Sequence[CellSummary], title: str, path: Path) -> Path:
    """Interaction plot: trustee race on x, one line per trustee gender."""
    fig, ax = plt.subplots(figsize=(FIG_WIDTH, FIG_HEIGHT))
    _draw(ax, summaries, title)
    _save(fig, path, title, plot_series(summaries))
    return path


def plot_comparison(
    panels: Sequence[tuple[str, Sequence[CellSummary]]], title: str, path: Path
) -> Path:
    """Side-by-side interaction plots (e.g. base and instruction-tuned runs)."""
    fig, axes = plt.subplots(
        1,
        len(panels),
        figsize=(FIG_WIDTH * len(panels), FIG_HEIGHT),
        sharey=True,
        squeeze=False,
    )
    for ax, (label, summaries) in zip(axes[0], panels):
        _draw(ax, summaries, label)
    fig.suptitle(title)
    _save(
        fig,
        path,
        title,
        {label: plot_series(summaries) for label, summaries in panels},
    )
    return path


def write_analysis(
    analysis: ExperimentAnalysis, out_dir: Path, title: str
) -> dict[str, Path]:
    """Write the tables, ``analysis.json`` and the interaction plot."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "anova": out_dir / "anova.csv",
        "posthoc": out_dir / "posthoc.csv",
        "cells": out_dir / "cells.csv",
        "analysis": out_dir / "analysis.json",
        "plot": out_dir / "interaction.svg",
    }
    anova_frame(analysis).to_csv(paths["anova"], index=False)
    posthoc_frame(analysis).to_csv(paths["posthoc"], index=False)
    cells_frame(analysis.cells).to_csv(paths["cells"], index=False)
    paths["analysis"].write_text(
        json.dumps(analysis.to_dict(), indent=2, allow_nan=False), encoding="utf-8"
    )
    plot_interaction(analysis.cells, title, paths["plot"])
    logger.info(f"Wrote analysis for {analysis.experiment_id} to {out_dir}")
    return paths


def _fmt(value: object, digits: int = 4) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _markdown_table(frame: pd.DataFrame) -> str:
    header = "| " + " | ".join(frame.columns) + " |"
    rule = "| " + " | ".join("---" for _ in frame.columns) + " |"
    body = [
        "| " + " | ".join(_fmt(v) for v in row) + " |"
        for row in frame.itertuples(index=False)
    ]
    return "\n".join([header, rule, *body])


def render_report(
    run_id: str,
    model_id: str,
    prompt_style: str,
    sections: Sequence[tuple[str, ExperimentAnalysis | None, str, str]],
    pass_rate: float | None = None,
) -> str:
    """Markdown report for a run.

    Args:
        run_id: Run identifier.
        model_id: Model identifier.
        prompt_style: Prompt style of the run.
        sections: Per experiment: (experiment id, analysis or None when it
            was not analyzed, completion status text, relative plot path).
        pass_rate: Verification pass rate, when a report exists.
    """
    lines = [
        f"# Run {run_id}",
        "",
        f"- Model: {model_id}",
        f"- Prompt style: {prompt_style}",
    ]
    if pass_rate is not None:
        lines.append(f"- Verification pass rate: {pass_rate:.1%}")
    for experiment, analysis, status, plot in sections:
        lines += ["", f"## Investor group {experiment}", "", f"Status: {status}", ""]
        if analysis is None:
            lines.append("Not analyzed.")
            continue
        lines += [
            "### Two-way ANOVA",
            "",
            _markdown_table(anova_frame(analysis)),
            "",
            "### Gender differences by race (female minus male)",
            "",
            _markdown_table(posthoc_frame(analysis)),
            "",
            f"![Interaction plot]({plot})",
        ]
    return "\n".join(lines) + "\n"
