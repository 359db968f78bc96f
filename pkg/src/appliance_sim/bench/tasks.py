"""The five benchmark tasks and the corpus-wide driver.

1. retrieval     pick the manual pages of a category relevant to the task
2. open_loop     write the whole plan up front
3. grounding     box a named part on the panel schematic
4. closed_loop   choose the next action after a scripted disturbance
5. full_process  all of the above chained, with execution in the loop
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..actions import OBJECT_KINDS, Plan, action_equal, format_action
from ..errors import PageOutOfRange, PlannerError, UnreachableGoal
from ..manual import render_panel_schematic
from ..statespace import first_actions
from . import protocol
from .episodes import Corpus, Episode, start_session
from .metrics import TASKS, MetricReport, eval_open_loop, eval_page_retrieval, iou, map50
from .planners import Planner, QueryContext
from .report import aggregate_reports, format_table

RETRIEVAL_CATEGORIES = ("component_description", "operating_procedure")


@dataclass
class EpisodeRun:
    report: MetricReport
    log: list = field(default_factory=list)
    trace: list = field(default_factory=list)


class _Asker:
    """Sends requests for one episode/task, numbering and logging each exchange."""

    def __init__(self, planner: Planner, ctx: QueryContext, log: list):
        self.planner, self.ctx, self.log = planner, ctx, log
        self.failures = 0

    def __call__(self, request, parse, *args, step=None):
        self.ctx.serial += 1
        self.ctx.step = step
        entry = {"serial": self.ctx.serial, "step": step, "request": request}
        try:
            reply = self.planner.respond(request, self.ctx)
            entry["reply"] = reply
            value = parse(reply, *args)
        except (PlannerError, PageOutOfRange) as exc:
            self.failures += 1
            code = getattr(exc, "code", "MalformedResponse")
            entry["error"] = code
            entry["message"] = str(exc)
            self.log.append(entry)
            return None, code
        self.log.append(entry)
        return value, None


def _report(task, spec, episode, metrics, asker, stage=None, notes=()):
    return MetricReport(TASKS[task], episode.id, spec.id, spec.category, metrics, asker.failures, stage, list(notes))


def _context(corpus, episode, task, seed):
    spec = corpus.spec_for(episode)
    return spec, QueryContext(spec, episode, corpus.manual(spec.id, seed), TASKS[task])


# --- task 1 -------------------------------------------------------------------


def run_page_retrieval(corpus: Corpus, episode: Episode, planner: Planner, seed: int = 0) -> EpisodeRun:
    spec, ctx = _context(corpus, episode, 1, seed)
    run = EpisodeRun(None)
    ask = _Asker(planner, ctx, run.log)
    n = len(ctx.manual)
    scores = []
    for category in sorted(episode.relevant_pages):
        request = protocol.make_request(
            "retrieve_pages", instruction=episode.instruction, manual_pages=ctx.manual.pages, query={"category": category}
        )
        pages, _ = ask(request, protocol.parse_pages, n)
        scores.append(eval_page_retrieval(pages or (), episode.relevant_pages[category]) if pages is not None else None)
    zero = (0.0, 0.0, 0.0)
    rows = [(s.precision, s.recall, s.f1) if s else zero for s in scores]
    k = len(rows) or 1
    metrics = {name: sum(r[i] for r in rows) / k for i, name in enumerate(("precision", "recall", "f1"))}
    run.report = _report(1, spec, episode, metrics, ask)
    return run


# --- task 2 -------------------------------------------------------------------


def run_open_loop(corpus: Corpus, episode: Episode, planner: Planner, seed: int = 0) -> EpisodeRun:
    spec, ctx = _context(corpus, episode, 2, seed)
    run = EpisodeRun(None)
    ask = _Asker(planner, ctx, run.log)
    obs = start_session(spec, episode).observe()
    request = protocol.make_request("plan", instruction=episode.instruction, manual_pages=ctx.manual.pages, observation=obs.to_dict())
    plan, _ = ask(request, protocol.parse_plan_reply)
    result = eval_open_loop(plan if plan is not None else Plan(), episode.gt_plan)
    metrics = {"completion_rate": result.completion_rate, "success": result.success, "predicted_steps": len(plan or ())}
    run.report = _report(2, spec, episode, metrics, ask)
    return run


# --- task 3 -------------------------------------------------------------------


def _ground(ask, ctx, part_name, svg, pages):
    spec = ctx.spec
    request = protocol.make_request(
        "ground",
        manual_pages=pages,
        query={"part": part_name, "schematic": svg, "panel": {"width": spec.panel_width, "height": spec.panel_height}},
    )
    box, _ = ask(request, protocol.parse_bbox)
    truth = spec.part_map[part_name].panel_rect
    return iou(box, truth) if box is not None else 0.0


def run_grounding(corpus: Corpus, episode: Episode, planner: Planner, seed: int = 0) -> EpisodeRun:
    spec, ctx = _context(corpus, episode, 3, seed)
    run = EpisodeRun(None)
    ask = _Asker(planner, ctx, run.log)
    svg = render_panel_schematic(spec)
    ious = {q: _ground(ask, ctx, q, svg, ctx.manual.pages) for q in episode.grounding_queries}
    values = list(ious.values())
    metrics = {"mean_iou": sum(values) / len(values), "map50": map50(values), "ious": ious}
    run.report = _report(3, spec, episode, metrics, ask)
    return run


# --- task 4 -------------------------------------------------------------------


def _is_valid_next(action, valid) -> bool:
    return any(action_equal(action, v) for v in valid)


def _rejection(spec, session, action):
    """Executor error code the action would raise, without touching the session."""
    try:
        trial = session.copy()
        outcome = trial.execute_action(action)
    except Exception as exc:  # rule or cascade trouble counts as a rejection too
        return type(exc).__name__
    return outcome.error


def _step_limit(episode) -> int:
    return 4 * len(episode.gt_plan) + 10


def run_closed_loop(corpus: Corpus, episode: Episode, planner: Planner, seed: int = 0) -> EpisodeRun:
    spec, ctx = _context(corpus, episode, 4, seed)
    run = EpisodeRun(None)
    ask = _Asker(planner, ctx, run.log)
    session = start_session(spec, episode)
    ctx.session = session
    history, queries, hits, notes = [], 0, 0, []
    disturbed = False
    step = 0
    while not session.satisfies(episode.goal) and step < _step_limit(episode):
        pert = episode.perturbation_at(step)
        if pert is not None:
            session.apply_perturbation(pert)
            disturbed = True
        if disturbed or step >= len(episode.gt_plan):
            try:
                valid = first_actions(spec, session, episode.goal)
            except UnreachableGoal as exc:
                notes.append(f"step {step}: {exc}")
                break
            if not valid:
                break
        if pert is not None:
            request = protocol.make_request(
                "next_action",
                instruction=episode.instruction,
                manual_pages=ctx.manual.pages,
                observation=session.observe().to_dict(),
                history=history,
                initial_plan=episode.gt_plan.to_list(),
            )
            action, _ = ask(request, protocol.parse_action_reply, step=step)
            queries += 1
            if action is not None and _is_valid_next(action, valid):
                hits += 1
            elif action is not None:
                run.log[-1]["scored"] = "wrong"
                error = _rejection(spec, session, action)
                if error:
                    run.log[-1]["executor_error"] = error
        chosen = valid[0] if disturbed or step >= len(episode.gt_plan) else episode.gt_plan[step]
        session.execute_action(chosen)
        history.append(format_action(chosen))
        step += 1
    metrics = {"stepwise_success_rate": hits / queries if queries else 0.0, "queries": queries, "successes": hits}
    run.report = _report(4, spec, episode, metrics, ask, notes=notes)
    run.trace = session.trace_lines()
    return run


# --- task 5 -------------------------------------------------------------------


def _plan_parts(spec, plan):
    seen = []
    for action in plan:
        name = action.part if action.kind not in OBJECT_KINDS or action.kind == "Pour" else None
        if name is not None and name in spec.part_map and name not in seen:
            seen.append(name)
    return seen


def run_full_process(corpus: Corpus, episode: Episode, planner: Planner, seed: int = 0) -> EpisodeRun:
    spec, ctx = _context(corpus, episode, 5, seed)
    run = EpisodeRun(None)
    ask = _Asker(planner, ctx, run.log)
    gt_len = len(episode.gt_plan)
    session = start_session(spec, episode)
    ctx.session = session

    def finish(correct, stage, notes=()):
        metrics = {"completion_rate": min(1.0, correct / gt_len), "success": stage is None}
        run.report = _report(5, spec, episode, metrics, ask, stage, notes)
        run.trace = session.trace_lines()
        return run

    # 1. retrieval: only the retrieved pages travel downstream
    retrieved = set()
    for category in RETRIEVAL_CATEGORIES:
        request = protocol.make_request("retrieve_pages", instruction=episode.instruction, manual_pages=ctx.manual.pages, query={"category": category})
        pages, _ = ask(request, protocol.parse_pages, len(ctx.manual))
        retrieved |= pages or set()
    pages = [p for p in ctx.manual.pages if p.index in retrieved]

    # 2. planning
    request = protocol.make_request("plan", instruction=episode.instruction, manual_pages=pages, observation=session.observe().to_dict())
    plan, error = ask(request, protocol.parse_plan_reply)
    if plan is None:
        return finish(0, "planning", [f"plan rejected: {error}"])
    if len(plan) == 0:
        return finish(0, "planning", ["empty plan"])

    # 3. grounding of every part the plan touches
    svg = render_panel_schematic(spec)
    for name in _plan_parts(spec, plan):
        score = _ground(ask, ctx, name, svg, pages)
        if score < 0.5:
            return finish(0, "grounding", [f"{name}: IoU {score:.4f} below 0.5"])

    # 4. execution, switching to next-action queries once disturbed
    history, correct, step, disturbed = [], 0, 0, False
    while step < _step_limit(episode):
        pert = episode.perturbation_at(step)
        if pert is not None:
            session.apply_perturbation(pert)
            disturbed = True
        if session.satisfies(episode.goal):
            if not disturbed and step < len(plan):
                return finish(correct, "execution", [f"plan has {len(plan) - step} extra steps"])
            return finish(correct, None)
        if disturbed:
            request = protocol.make_request(
                "next_action",
                instruction=episode.instruction,
                manual_pages=pages,
                observation=session.observe().to_dict(),
                history=history,
                initial_plan=plan.to_list(),
            )
            action, error = ask(request, protocol.parse_action_reply, step=step)
            if action is None:
                return finish(correct, "execution", [f"step {step}: {error}"])
        elif step < len(plan):
            action = plan[step]
        else:
            return finish(correct, "execution", ["plan ended before the goal was reached"])
        try:
            valid = first_actions(spec, session, episode.goal)
        except UnreachableGoal as exc:
            return finish(correct, "execution", [f"step {step}: {exc}"])
        if not _is_valid_next(action, valid):
            error = _rejection(spec, session, action)
            return finish(correct, "execution", [f"step {step}: {format_action(action)} is not a valid next action" + (f" ({error})" if error else "")])
        session.execute_action(action)
        history.append(format_action(action))
        correct += 1
        step += 1
    return finish(correct, "execution", ["step limit reached"])


# --- driver -------------------------------------------------------------------

RUNNERS = {1: run_page_retrieval, 2: run_open_loop, 3: run_grounding, 4: run_closed_loop, 5: run_full_process}


def eligible(task: int, episode: Episode) -> bool:
    if task == 3:
        return bool(episode.grounding_queries)
    if task == 4:
        return bool(episode.perturbations)
    return True


@dataclass
class BenchResult:
    runs: dict  # task number -> list of EpisodeRun in episode order
    summary: dict

    @property
    def reports(self) -> list[MetricReport]:
        return [r.report for task in sorted(self.runs) for r in self.runs[task]]

    def to_json(self) -> dict:
        return {"summary": self.summary, "episodes": [r.to_json() for r in self.reports]}

    def table(self) -> str:
        return format_table(self.summary)


def run_bench(corpus: Corpus, planner: Planner, tasks=(1, 2, 3, 4, 5), *, seed: int = 0, jobs: int = 1, episodes=None) -> BenchResult:
    """Run ``tasks`` over every eligible episode; results are in episode-id order."""
    chosen = [e for e in corpus.episodes if episodes is None or e.id in episodes]
    runs = {}
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for task in tasks:
            todo = [e for e in chosen if eligible(task, e)]
            runner = RUNNERS[task]
            runs[task] = list(pool.map(lambda e: runner(corpus, e, planner, seed), todo))
    reports = [r.report for task in sorted(runs) for r in runs[task]]
    return BenchResult(runs, aggregate_reports(reports))


def write_bench(result: BenchResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for task, task_runs in result.runs.items():
        name = TASKS[task]
        for run in task_runs:
            ep = run.report.episode
            log_dir = out / "logs" / name
            log_dir.mkdir(parents=True, exist_ok=True)
            with open(log_dir / f"{ep}.jsonl", "w", encoding="utf-8") as fh:
                for entry in run.log:
                    fh.write(json.dumps(entry, ensure_ascii=False, separators=(",", ":")) + "\n")
            if run.trace:
                trace_dir = out / "traces" / name
                trace_dir.mkdir(parents=True, exist_ok=True)
                (trace_dir / f"{ep}.trace.jsonl").write_text("".join(line + "\n" for line in run.trace), encoding="utf-8")
    (out / "report.json").write_text(json.dumps(result.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(result.table(), encoding="utf-8")

