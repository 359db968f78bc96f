"""Aggregation of per-episode reports into per-category and overall tables."""

from __future__ import annotations

from collections import defaultdict

from ..errors import EmptyInput, MixedTask
from .metrics import TASKS, MetricReport

_TASK_ORDER = {name: i for i, name in enumerate(TASKS.values())}


def _numeric(value) -> bool:
    return isinstance(value, (int, float))


def _means(reports, keys):
    return {k: sum(float(r.metrics[k]) for r in reports) / len(reports) for k in keys}


def aggregate_reports(reports: list[MetricReport]) -> dict:
    """Mean of every scalar metric per (task, category) and per task overall.

    The merge is order-insensitive: groups and keys come out sorted.
    """
    if not reports:
        raise EmptyInput("no reports to aggregate")
    by_task = defaultdict(list)
    for r in reports:
        by_task[r.task].append(r)
    tasks = {}
    for task in sorted(by_task, key=lambda t: (_TASK_ORDER.get(t, len(_TASK_ORDER)), t)):
        group = by_task[task]
        keys = sorted(k for k, v in group[0].metrics.items() if _numeric(v))
        for r in group[1:]:
            if sorted(k for k, v in r.metrics.items() if _numeric(v)) != keys:
                raise MixedTask(f"reports for task {task!r} carry different metrics")
        cats = defaultdict(list)
        for r in group:
            cats[r.category].append(r)
        tasks[task] = {
            "episodes": len(group),
            "planner_failures": sum(r.planner_failures for r in group),
            "overall": _means(group, keys),
            "categories": {c: {"episodes": len(rs), **_means(rs, keys)} for c, rs in sorted(cats.items())},
        }
    return {"tasks": tasks}


def format_table(summary: dict) -> str:
    """Aligned text rendering of :func:`aggregate_reports` output."""
    rows = [("task", "category", "n", "metric", "value")]
    for task, block in summary["tasks"].items():
        for cat, stats in list(block["categories"].items()) + [("overall", {"episodes": block["episodes"], **block["overall"]})]:
            for key, value in stats.items():
                if key == "episodes":
                    continue
                rows.append((task, cat, str(stats["episodes"]), key, f"{value:.4f}"))
        rows.append((task, "planner_failures", "", "", str(block["planner_failures"])))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"
