"""Glycemic summary metrics and multi-seed report aggregation.

Zone conventions: time-in-range counts 70 <= x <= 180 inclusive; above/below
use the strict inequalities x > 180 and x < 70, so the three percentages
partition every trajectory exactly. Severe events (AIME — also published
under the alias ANIE; one quantity) count down-crossings into the region
below 40 mg/dL per day, not samples spent there.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

ZONE_LOW = 70.0
ZONE_HIGH = 180.0
SEVERE_LOW = 40.0


def _require_values(values: Sequence[float]) -> None:
    if len(values) == 0:
        raise ValueError("empty trajectory")


def time_in_range(values: Sequence[float]) -> float:
    """Percent of samples inside [70, 180], boundaries inclusive."""
    _require_values(values)
    inside = sum(1 for x in values if ZONE_LOW <= x <= ZONE_HIGH)
    return 100.0 * inside / len(values)


def time_above_below(values: Sequence[float]) -> tuple[float, float]:
    """(percent strictly above 180, percent strictly below 70)."""
    _require_values(values)
    above = sum(1 for x in values if x > ZONE_HIGH)
    below = sum(1 for x in values if x < ZONE_LOW)
    return 100.0 * above / len(values), 100.0 * below / len(values)


def mean_glucose(values: Sequence[float]) -> float:
    _require_values(values)
    return float(sum(values) / len(values))


def aime(values: Sequence[float], steps_per_day: int) -> float:
    """Severe events per day: down-crossings into the sub-40 region (a stay
    below 40 is one event however long). A trajectory that starts below 40
    entered the region at its first sample."""
    if steps_per_day < 1:
        raise ValueError(f"steps_per_day must be >= 1, got {steps_per_day}")
    _require_values(values)
    events = 0
    previous_above = True
    for x in values:
        below = x < SEVERE_LOW
        if below and previous_above:
            events += 1
        previous_above = not below
    days = max(1.0, (len(values) - 1) / steps_per_day)
    return events / days


@dataclass(frozen=True)
class GlycemicSummary:
    """One seed's episode summary."""

    tir: float
    tar: float
    tbr: float
    mean_glucose: float
    aime: float
    episodes: int = 1
    seed: int | None = None


def summarise(values: Sequence[float], steps_per_day: int, seed: int | None = None) -> GlycemicSummary:
    tar, tbr = time_above_below(values)
    return GlycemicSummary(
        tir=time_in_range(values),
        tar=tar,
        tbr=tbr,
        mean_glucose=mean_glucose(values),
        aime=aime(values, steps_per_day),
        seed=seed,
    )


METRIC_FIELDS = ("tir", "tar", "tbr", "mean_glucose", "aime")


@dataclass(frozen=True)
class AggregateRow:
    """Mean +/- sample standard deviation of each metric across seeds."""

    task: str
    model: str
    means: dict[str, float]
    stds: dict[str, float]
    seeds: tuple[int | None, ...]

    def cell(self, metric: str, precision: int = 2) -> str:
        return f"{self.means[metric]:.{precision}f} ± {self.stds[metric]:.{precision}f}"


def aggregate(
    summaries: Sequence[GlycemicSummary], task: str = "", model: str = ""
) -> AggregateRow:
    """Mean and sample standard deviation (ddof=1) per metric; needs >= 2
    summaries for the deviation to exist."""
    if len(summaries) < 2:
        raise ValueError(f"aggregation needs >= 2 summaries, got {len(summaries)}")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    n = len(summaries)
    for metric in METRIC_FIELDS:
        values = [getattr(s, metric) for s in summaries]
        mean = sum(values) / n
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        means[metric] = mean
        stds[metric] = math.sqrt(var)
    return AggregateRow(
        task=task, model=model, means=means, stds=stds, seeds=tuple(s.seed for s in summaries)
    )


REPORT_COLUMNS = ("Task", "Model", "TIR", "TAR", "TBR", "MeanGlucose", "AIME")
_COLUMN_METRIC = {
    "TIR": "tir",
    "TAR": "tar",
    "TBR": "tbr",
    "MeanGlucose": "mean_glucose",
    "AIME": "aime",
}


def write_report_csv(path: str | Path, rows: Sequence[AggregateRow]) -> None:
    """Summary-table CSV, one aggregated row per (task, model), cells as
    'mean +/- std' strings with fixed precision."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.task, row.model]
                + [row.cell(_COLUMN_METRIC[c]) for c in REPORT_COLUMNS[2:]]
            )


def report_payload(rows: Sequence[AggregateRow]) -> list[dict]:
    payload = []
    for row in rows:
        entry: dict = {"task": row.task, "model": row.model, "seeds": list(row.seeds)}
        for metric in METRIC_FIELDS:
            entry[metric] = {"mean": row.means[metric], "std": row.stds[metric]}
        entry["anie"] = entry["aime"]  # published alias for the same quantity
        payload.append(entry)
    return payload


def write_report_json(path: str | Path, rows: Sequence[AggregateRow]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report_payload(rows), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_plot_csv(path: str | Path, trajectories: Mapping[int, Sequence[float]]) -> None:
    """Plot-ready long-format CSV: one (step, seed, x) row per sample."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("step", "seed", "x"))
        for seed in sorted(trajectories):
            for step, x in enumerate(trajectories[seed]):
                writer.writerow((step, seed, repr(float(x))))
