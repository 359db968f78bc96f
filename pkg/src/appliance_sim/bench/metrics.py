"""Scoring functions for the five benchmark tasks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from ..actions import Plan, action_equal
from ..errors import PageOutOfRange
from ..spec import BoundingBox

IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class RetrievalMetrics:
    precision: float
    recall: float
    f1: float


def eval_page_retrieval(predicted: Iterable[int], truth: Iterable[int], n_pages: int | None = None) -> RetrievalMetrics:
    """Set precision/recall over 1-based page indices.

    An empty prediction is perfect only when nothing was relevant.
    """
    p, t = set(predicted), set(truth)
    if n_pages is not None:
        bad = sorted(i for i in p | t if isinstance(i, bool) or not isinstance(i, int) or not 1 <= i <= n_pages)
        if bad:
            raise PageOutOfRange(f"page indices {bad} outside 1..{n_pages}")
    hit = len(p & t)
    if not p:
        precision = 1.0 if not t else 0.0
    else:
        precision = hit / len(p)
    recall = hit / len(t) if t else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return RetrievalMetrics(precision, recall, f1)


@dataclass(frozen=True)
class OpenLoopMetrics:
    completion_rate: float
    success: bool


def correct_prefix(pred: Plan, gt: Plan) -> int:
    n = 0
    for a, b in zip(pred, gt):
        if not action_equal(a, b):
            break
        n += 1
    return n


def eval_open_loop(pred: Plan, gt: Plan) -> OpenLoopMetrics:
    if len(gt) == 0:
        raise ValueError("ground-truth plan must not be empty")
    n = correct_prefix(pred, gt)
    completion = n / len(gt)
    return OpenLoopMetrics(completion, len(pred) == len(gt) and n == len(gt))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


def map50(ious: Iterable[float]) -> float:
    """Hit rate at IoU >= 0.5: AP@0.5 when every query has one box and one guess."""
    values = list(ious)
    if not values:
        return 0.0
    return sum(v >= IOU_THRESHOLD for v in values) / len(values)


TASKS = {1: "retrieval", 2: "open_loop", 3: "grounding", 4: "closed_loop", 5: "full_process"}


@dataclass
class MetricReport:
    task: str
    episode: str
    appliance: str
    category: str
    metrics: dict[str, Any]
    planner_failures: int = 0
    failure_stage: str | None = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "task": self.task,
            "episode": self.episode,
            "appliance": self.appliance,
            "category": self.category,
            "metrics": self.metrics,
            "planner_failures": self.planner_failures,
        }
        if self.failure_stage is not None:
            out["failure_stage"] = self.failure_stage
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    @classmethod
    def from_json(cls, data) -> "MetricReport":
        return cls(
            data["task"],
            data["episode"],
            data["appliance"],
            data["category"],
            dict(data["metrics"]),
            data.get("planner_failures", 0),
            data.get("failure_stage"),
            list(data.get("notes", [])),
        )
