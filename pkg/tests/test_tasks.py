import pytest

from appliance_sim.bench import make_planner, run_bench, write_bench
from appliance_sim.bench.planners import OraclePlanner, Planner
from appliance_sim.bench.tasks import run_closed_loop, run_full_process, run_grounding, run_open_loop, run_page_retrieval


class Scripted(OraclePlanner):
    """Oracle except for the request kinds overridden in ``replies``."""

    def __init__(self, **replies):
        super().__init__()
        self.replies = replies

    def respond(self, request, ctx):
        fn = self.replies.get(request["kind"])
        return fn(request, ctx) if fn else super().respond(request, ctx)


def test_closed_loop_close_door_after_disturbance(corpus):
    seen = []

    def reply(request, ctx):
        seen.append(request["observation"])
        return {"action_text": "Close(door)"}

    run = run_closed_loop(corpus, corpus.by_id["microwave-02"], Scripted(next_action=reply))
    assert run.report.metrics == {"stepwise_success_rate": 1.0, "queries": 1, "successes": 1}
    door = next(p for p in seen[0]["parts"] if p["name"] == "door")
    assert door["state_label"] == "open"


def test_closed_loop_wrong_answer_logs_executor_error(corpus):
    run = run_closed_loop(corpus, corpus.by_id["microwave-02"], Scripted(next_action=lambda r, c: {"action_text": "Open(door)"}))
    assert run.report.metrics["stepwise_success_rate"] == 0.0
    query = [e for e in run.log if e["step"] is not None][0]
    assert query["scored"] == "wrong"
    assert query["executor_error"] == "IncompatibleAction"


def test_grounding_whole_panel_scores_area_ratio(corpus):
    ep = corpus.by_id["microwave-02"]
    spec = corpus.spec_for(ep)
    whole = [0, 0, spec.panel_width, spec.panel_height]
    run = run_grounding(corpus, ep, Scripted(ground=lambda r, c: {"bbox": whole}))
    panel = spec.panel_width * spec.panel_height
    for name, value in run.report.metrics["ious"].items():
        assert value == pytest.approx(spec.part_map[name].panel_rect.area / panel, abs=1e-12)


def _shrunk(request, ctx):
    r = ctx.spec.part_map[request["query"]["part"]].panel_rect
    return {"bbox": [r.x1, r.y1, r.x1 + 0.45 * (r.x2 - r.x1), r.y2]}


def test_grounding_shrunk_box(corpus):
    run = run_grounding(corpus, corpus.by_id["microwave-02"], Scripted(ground=_shrunk))
    assert run.report.metrics["mean_iou"] == pytest.approx(0.45, abs=1e-12)
    assert run.report.metrics["map50"] == 0.0


def test_full_process_stops_at_grounding(corpus):
    run = run_full_process(corpus, corpus.by_id["microwave-02"], Scripted(ground=_shrunk))
    assert run.report.failure_stage == "grounding"
    assert run.report.metrics == {"completion_rate": 0.0, "success": False}


def test_full_process_unknown_part(corpus):
    plan = {"plan_text": 'Press(nonexistent, "pressed", 1)\n'}
    run = run_full_process(corpus, corpus.by_id["microwave-02"], Scripted(plan=lambda r, c: plan))
    assert run.report.metrics == {"completion_rate": 0.0, "success": False}
    assert run.report.failure_stage == "execution"
    assert "UnknownPart" in run.report.notes[0]


def test_full_process_only_passes_retrieved_pages(corpus):
    sizes = []

    def plan(request, ctx):
        sizes.append(len(request["manual_pages"]))
        return {"plan_text": ctx.episode.gt_plan.to_text()}

    ep = corpus.by_id["microwave-02"]
    run = run_full_process(corpus, ep, Scripted(plan=plan))
    assert sizes == [len(set().union(*ep.relevant_pages.values()))]
    assert run.report.metrics["success"]


def test_open_loop_malformed_plan(corpus):
    run = run_open_loop(corpus, corpus.by_id["oven-01"], Scripted(plan=lambda r, c: {"plan_text": "Set(knob)"}))
    assert run.report.metrics["completion_rate"] == 0.0
    assert run.report.planner_failures == 1
    assert run.log[0]["error"] == "MalformedResponse"


def test_retrieval_oracle_is_perfect(corpus):
    run = run_page_retrieval(corpus, corpus.by_id["stand_mixer-01"], OraclePlanner())
    assert run.report.metrics == {"precision": 1.0, "recall": 1.0, "f1": 1.0}


def test_bench_writes_outputs(corpus, tmp_path):
    result = run_bench(corpus, make_planner("builtin:oracle"), tasks=(2, 4), episodes={"microwave-01", "kettle-02"})
    write_bench(result, tmp_path)
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "logs" / "open_loop" / "microwave-01.jsonl").exists()
    assert (tmp_path / "traces" / "closed_loop" / "microwave-01.trace.jsonl").exists()
    assert "closed_loop" in (tmp_path / "report.txt").read_text()


def test_jobs_do_not_change_results(corpus):
    ids = {e.id for e in corpus.episodes[:8]}
    a = run_bench(corpus, make_planner("builtin:oracle"), episodes=ids, jobs=1)
    b = run_bench(corpus, make_planner("builtin:oracle"), episodes=ids, jobs=4)
    assert a.to_json() == b.to_json()


def test_planner_base_is_abstract():
    with pytest.raises(NotImplementedError):
        Planner().respond({}, None)
