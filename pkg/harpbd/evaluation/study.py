"""Seed studies: medians of evaluated runs per group and the orderings they should show."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from typing import Literal

import pandas as pd
import structlog
from pydantic import BaseModel

from harpbd.evaluation.report import MetricsReport, comparison_table, format_table

logger = structlog.get_logger()

SUMMARY_METRICS = ["har_macro_f1", "pbd_macro_f1", "pr_auc"]
CHECKED_METRICS = ("pbd_macro_f1", "pr_auc")

Relation = Literal[">", ">="]
Claim = tuple[str, Relation, str]

# (better, relation, worse) over the frozen-strategy PBD variants
ABLATION_CLAIMS: tuple[Claim, ...] = (
    ("pbd_cfcc", ">", "pbd"),
    ("hierarchical", ">", "pbd"),
    ("hierarchical_cfcc", ">=", "pbd_cfcc"),
    ("hierarchical_cfcc", ">=", "hierarchical"),
)
SENSOR_TIERS = (("full22",), ("one_side14",), ("one_side7", "symmetric7"))


class OrderingCheck(BaseModel):
    metric: str
    better: str
    relation: Relation
    worse: str
    better_value: float
    worse_value: float
    holds: bool

    def to_text(self) -> str:
        verdict = "holds" if self.holds else "does not hold"
        return (
            f"{self.metric}: {self.better} {self.relation} {self.worse} {verdict} "
            f"({self.better_value:.4f} vs {self.worse_value:.4f})"
        )


class StudySummary(BaseModel):
    group: str
    seeds: list[int]
    runs: int
    checks: list[OrderingCheck]


def sensor_claims(labels: Iterable[str]) -> list[Claim]:
    """Each present tier at least matches the next present one; custom sets are not ranked."""
    present = set(labels)
    tiers = [[name for name in tier if name in present] for tier in SENSOR_TIERS]
    tiers = [tier for tier in tiers if tier]
    return [
        (better, ">=", worse)
        for upper, lower in zip(tiers, tiers[1:])
        for better in upper
        for worse in lower
    ]


def seed_table(runs: Sequence[tuple[str, int, MetricsReport]], group: str) -> pd.DataFrame:
    table = comparison_table([report for _, _, report in runs])
    table.insert(0, "seed", [seed for _, seed, _ in runs])
    table.insert(0, group, [label for label, _, _ in runs])
    return table


def median_table(runs: pd.DataFrame, group: str) -> pd.DataFrame:
    grouped = runs.groupby(group, sort=False)
    medians = grouped[SUMMARY_METRICS].median()
    medians.insert(0, "seeds", grouped["seed"].nunique())
    return medians.reset_index()


def ordering_checks(medians: pd.DataFrame, group: str, claims: Iterable[Claim]) -> list[OrderingCheck]:
    values = medians.set_index(group)
    checks = []
    for metric in CHECKED_METRICS:
        for better, relation, worse in claims:
            if better not in values.index or worse not in values.index:
                continue
            a = float(values.at[better, metric])
            b = float(values.at[worse, metric])
            checks.append(
                OrderingCheck(
                    metric=metric,
                    better=better,
                    relation=relation,
                    worse=worse,
                    better_value=a,
                    worse_value=b,
                    holds=a > b if relation == ">" else a >= b,
                )
            )
    return checks


def summarize(
    runs: Sequence[tuple[str, int, MetricsReport]], group: str, claims: Iterable[Claim]
) -> tuple[pd.DataFrame, pd.DataFrame, StudySummary]:
    """Per-run table, per-group medians and the ordering checks on those medians."""
    table = seed_table(runs, group)
    medians = median_table(table, group)
    checks = ordering_checks(medians, group, claims)
    summary = StudySummary(
        group=group,
        seeds=sorted({int(seed) for seed in table["seed"]}),
        runs=len(table),
        checks=checks,
    )
    for check in checks:
        logger.info(
            "Ordering check",
            metric=check.metric,
            better=check.better,
            relation=check.relation,
            worse=check.worse,
            holds=check.holds,
        )
    return table, medians, summary


def study_text(medians: pd.DataFrame, summary: StudySummary) -> str:
    lines = [f"median over {len(summary.seeds)} seed(s)", format_table(medians).rstrip("\n")]
    if summary.checks:
        lines += ["", *(check.to_text() for check in summary.checks)]
    return "\n".join(lines) + "\n"


def focal_selection_text(selections: pd.DataFrame) -> str:
    """How often each module's search picked a focusing gamma above zero."""
    lines = []
    for module, rows in selections.groupby("module", sort=False):
        chosen = int((rows["gamma"] > 0).sum())
        lines.append(f"{module}: gamma > 0 selected in {chosen} of {len(rows)} seed(s)")
    return "\n".join(lines) + "\n"
