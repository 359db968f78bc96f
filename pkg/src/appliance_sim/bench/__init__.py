"""Episode corpus, the five evaluators, planner endpoints and report aggregation."""

from .episodes import Corpus, Episode, load_episode_file, verify_episode
from .metrics import MetricReport, eval_open_loop, eval_page_retrieval, iou, map50
from .planners import PlannerEndpoint, make_planner
from .report import aggregate_reports, format_table
from .tasks import (
    run_bench,
    run_closed_loop,
    run_full_process,
    run_grounding,
    run_open_loop,
    run_page_retrieval,
    write_bench,
)

__all__ = [
    "Corpus",
    "Episode",
    "MetricReport",
    "PlannerEndpoint",
    "aggregate_reports",
    "eval_open_loop",
    "eval_page_retrieval",
    "format_table",
    "iou",
    "load_episode_file",
    "make_planner",
    "map50",
    "run_bench",
    "run_closed_loop",
    "run_full_process",
    "run_grounding",
    "run_open_loop",
    "run_page_retrieval",
    "verify_episode",
    "write_bench",
]
