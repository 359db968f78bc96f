"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line each."""

import filecmp
import json
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from appliance_sim.actions import ACTION_KINDS, SIGNATURES, action_equal, format_action, make, parse_action, parse_plan
from appliance_sim.bench import make_planner, run_bench
from appliance_sim.bench.episodes import start_session
from appliance_sim.bench.metrics import eval_page_retrieval, iou, map50
from appliance_sim.bench.planners import CorruptPlanner
from appliance_sim.bench.tasks import run_full_process, run_open_loop
from appliance_sim.errors import ActionParseError
from appliance_sim.session import create_session, restore
from appliance_sim.spec import POSITION_EPS, BoundingBox, dump_spec, load_spec
from appliance_sim.statespace import candidate_actions, oracle_plan

from oracles import random_int_box, random_real_box, raster_iou_int, raster_iou_real

RUNTIME_BUDGET_S = 60.0


# --- 1. determinism -----------------------------------------------------------


def _bench_all(out):
    env = {k: v for k, v in os.environ.items() if not k.startswith("APPSIM_")}
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "appliance_sim", "bench", "all", "--planner", "builtin:oracle", "--seed", "0", "--out", str(out)],
        capture_output=True, text=True, env=env, timeout=300,
    )
    return proc, time.perf_counter() - start


def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_same_tree(a / d, b / d) for d in cmp.common_dirs)


def test_criterion_01_bench_is_deterministic(tmp_path):
    first, t1 = _bench_all(tmp_path / "a")
    second, t2 = _bench_all(tmp_path / "b")
    assert first.returncode == 0 and second.returncode == 0, first.stderr + second.stderr
    assert first.stdout == second.stdout
    assert any((tmp_path / "a" / "traces").rglob("*.trace.jsonl"))
    assert _same_tree(tmp_path / "a", tmp_path / "b")
    assert max(t1, t2) < RUNTIME_BUDGET_S


# --- 2. oracle calibration ----------------------------------------------------


def test_criterion_02_oracle_is_perfect(corpus):
    result = run_bench(corpus, make_planner("builtin:oracle"))
    by_task = {}
    for r in result.reports:
        by_task.setdefault(r.task, []).append(r)
    assert all(r.metrics["success"] is True for r in by_task["open_loop"])
    assert all(r.metrics["stepwise_success_rate"] == 1.0 for r in by_task["closed_loop"])
    assert all(r.metrics["success"] is True for r in by_task["full_process"])
    assert all(r.metrics["mean_iou"] == 1.0 for r in by_task["grounding"])
    assert len(by_task["closed_loop"]) > 0 and len(by_task["grounding"]) > 0


# --- 3. corruption calibration ------------------------------------------------


def test_criterion_03_corruption_scores_prefix(corpus):
    checked = 0
    for ep in corpus.episodes:
        n = len(ep.gt_plan)
        for k in range(1, n + 1):
            planner = CorruptPlanner(k)
            for runner in (run_open_loop, run_full_process):
                metrics = runner(corpus, ep, planner).report.metrics
                assert metrics["completion_rate"] == (k - 1) / n, (ep.id, k, runner.__name__)
                assert metrics["success"] is False, (ep.id, k, runner.__name__)
            checked += 1
    assert checked >= len(corpus.episodes)


# --- 4. IoU oracle ------------------------------------------------------------


def test_criterion_04_iou_matches_rasterization():
    rng = np.random.default_rng(20240)
    for _ in range(1000):
        a, b = random_int_box(rng), random_int_box(rng)
        assert iou(BoundingBox(*a), BoundingBox(*b)) == raster_iou_int(a, b), (a, b)
    for _ in range(1000):
        a, b = random_real_box(rng), random_real_box(rng)
        assert abs(iou(BoundingBox(*a), BoundingBox(*b)) - raster_iou_real(a, b)) <= 1e-9, (a, b)


# --- 5. mechanism suite -------------------------------------------------------


def _countdown(specs):
    spec = specs["air_fryer"]
    s = create_session(spec)
    cfg = spec.part_map["timer_knob"].mechanism("knob_countdown")
    assert s.execute_action(make("Rotate", "timer_knob", "15", 90.0)).ok
    n = spec.part_map["timer_knob"].detent_index(90.0)
    stop = n * cfg.ticks_per_detent
    s.step(stop - 1)
    assert dict(s.observe().motors)["fan"] == "running"
    assert s.observe().label("timer_knob") != "0"
    obs = s.step(1)
    assert obs.tick == stop
    assert obs.label("timer_knob") == "0"
    assert dict(obs.motors)["fan"] == "stopped"
    assert dict(obs.screen)["time"] == "0"


def _safety_lock(specs):
    s = create_session(specs["stand_mixer"])
    out = s.execute_action(make("Open", "motor_head"))
    assert (out.status, out.error) == ("rejected", "GuardViolation")
    assert s.observe().label("motor_head") == "closed"
    assert s.execute_action(make("Flip", "lock_lever", "unlocked")).ok
    assert s.execute_action(make("Open", "motor_head")).ok
    assert s.observe().label("motor_head") == "open"


def _trigger(specs):
    s = create_session(specs["microwave"])
    out = s.execute_action(make("Press", "door_open_button", "pressed", 1))
    assert out.ok
    assert out.observation.tick == 0
    assert out.observation.label("door") == "open"


def _spring(specs):
    spec = specs["toaster"]
    s = create_session(spec)
    lever = spec.part_map["lever"]
    ticks = lever.mechanism("inner_spring").return_ticks
    assert s.execute_action(make("Push", "lever")).ok
    s.step(ticks * 3)
    assert s.observe().label("lever") == "down"  # latched while toasting
    assert s.execute_action(make("Press", "cancel_button", "pressed", 1)).ok
    seen = [s.step(1).part("lever").joint_value for _ in range(ticks)]
    assert seen[-1] == lever.joint.rest
    assert all(v != lever.joint.rest for v in seen[:-1])
    assert s.step(5).part("lever").joint_value == lever.joint.rest


def _motor(specs):
    spec = specs["microwave"]
    snap = create_session(spec).snapshot()
    snap["joints"]["turntable"] = 350
    s = restore(spec, snap)
    rate = spec.part_map["turntable"].mechanism("rotary_motor").rate
    s.execute_action(make("Rotate", "timer_knob", "5", 180.0))
    s.execute_action(make("Press", "start_button", "pressed", 1))
    assert s.step(5).part("turntable").joint_value == (350 + rate * 5) % 360
    assert s.step(5).part("turntable").joint_value == (350 + rate * 10) % 360 == 10


MECHANISMS = {"a_countdown": _countdown, "b_safety_lock": _safety_lock, "c_trigger": _trigger, "d_spring": _spring, "e_motor": _motor}


@pytest.mark.parametrize("case", sorted(MECHANISMS))
def test_criterion_05_mechanisms(specs, case):
    MECHANISMS[case](specs)


# --- 6. fuzz safety -----------------------------------------------------------

FUZZ_ACTIONS = 10_000


def _labels(spec):
    out = {"ghost", "0"}
    for p in spec.parts:
        out.update(label for _, label in p.state_labels)
    return sorted(out)


def _random_action(rng, spec, session, names, labels):
    if rng.random() < 0.5:
        options = candidate_actions(spec, session)
        if options:
            return options[rng.integers(len(options))]
    kind = ACTION_KINDS[rng.integers(len(ACTION_KINDS))]
    args = []
    for _, typ in SIGNATURES[kind]:
        if typ == "name":
            args.append(names[rng.integers(len(names))])
        elif typ == "label":
            args.append(labels[rng.integers(len(labels))])
        elif typ == "count":
            args.append(int(rng.integers(1, 12)))
        else:
            args.append(float(rng.choice([rng.uniform(-400, 400), rng.integers(-8, 9) * 45.0])))
    return make(kind, *args)


def _check_domains(spec, session):
    state = session.snapshot()
    for part in spec.parts:
        v = state["joints"][part.name]
        assert part.joint.lo - POSITION_EPS <= v <= part.joint.hi + POSITION_EPS, (part.name, v)
    for name, value in state["parameters"].items():
        assert spec.param_map[name].contains(value), (name, value)
    for obj in spec.objects:
        assert state["objects"][obj.name] in obj.positions
    assert state["held_object"] is None or state["held_object"] in spec.object_map


@pytest.mark.parametrize(
    "name", ["air_fryer", "coffee_machine", "induction_cooker", "kettle", "microwave", "oven", "stand_mixer", "toaster", "washing_machine"]
)
def test_criterion_06_fuzz_executor(specs, name):
    spec = specs[name]
    rng = np.random.default_rng(sum(map(ord, name)))
    names = [p.name for p in spec.parts] + [o.name for o in spec.objects]
    names += sorted({pos for o in spec.objects for pos in o.positions}) + ["ghost"]
    labels = _labels(spec)
    session = create_session(spec)
    for i in range(FUZZ_ACTIONS):
        outcome = session.execute_action(_random_action(rng, spec, session, names, labels))
        assert outcome.status in ("ok", "rejected")
        if i % 7 == 0:
            session.step(int(rng.integers(0, 15)))
        if i % 50 == 0:
            _check_domains(spec, session)
            session.trace.clear()
    _check_domains(spec, session)


def test_criterion_06_fuzz_parser():
    rng = np.random.default_rng(6)
    alphabet = np.frombuffer(b'Press(Rotate,Touch "\\)\x00\xff 0.5-1e9abc_\n', dtype=np.uint8)
    for i in range(FUZZ_ACTIONS):
        n = int(rng.integers(0, 64))
        data = rng.integers(0, 256, n, dtype=np.uint8) if i % 2 else rng.choice(alphabet, n)
        blob = data.tobytes()
        for candidate in (blob, blob.decode("latin-1")):
            try:
                action = parse_action(candidate)
            except ActionParseError:
                continue
            assert parse_action(format_action(action)) == action
        try:
            parse_plan(blob)
        except ActionParseError:
            pass


# --- 7. metric hand checks ----------------------------------------------------


def test_criterion_07_metric_hand_checks():
    m = eval_page_retrieval({2, 3, 4}, {2, 3})
    assert abs(m.precision - float(Fraction(2, 3))) <= 1e-12
    assert abs(m.recall - 1.0) <= 1e-12
    assert abs(m.f1 - float(Fraction(4, 5))) <= 1e-12
    assert abs(map50([0.6, 0.4, 0.9]) - float(Fraction(2, 3))) <= 1e-12


# --- 8. episode integrity -----------------------------------------------------


def test_criterion_08_episode_integrity(corpus):
    assert len(corpus.episodes) >= 40
    assert sum(len(e.perturbations) for e in corpus.episodes) >= 30
    for ep in corpus.episodes:
        spec = corpus.spec_for(ep)
        session = start_session(spec, ep)
        for action in ep.gt_plan:
            outcome = session.execute_action(action)
            assert outcome.ok, (ep.id, format_action(action), outcome.message)
        assert session.satisfies(ep.goal), ep.id
        assert len(oracle_plan(spec, ep.initial_state, ep.goal)) <= len(ep.gt_plan), ep.id


# --- 9. round trips -----------------------------------------------------------


def test_criterion_09_spec_round_trip(specs):
    for spec in specs.values():
        again = load_spec(dump_spec(spec))
        assert again == spec
        assert dump_spec(again) == dump_spec(spec)


def test_criterion_09_action_round_trip():
    samples = {
        "Press": ("b", "pressed", 2), "Rotate": ("k", "3", 108.0), "Open": ("door",), "Close": ("door",),
        "Touch": ("key", 3), "Slide": ("vent", "open"), "Flip": ("switch", "on"), "Pull": ("basket",),
        "Push": ("lever",), "Pick": ("bowl",), "Place": ("bowl",), "Move": ("bowl", "counter", "plate"),
        "Pour": ("jug", "tank"),
    }
    assert set(samples) == set(ACTION_KINDS)
    for kind, args in samples.items():
        action = make(kind, *args)
        text = format_action(action)
        assert parse_action(text) == action
        assert format_action(parse_action(text)) == text
        assert action_equal(parse_action(text), action)


def test_criterion_09_snapshot_round_trip(specs):
    spec = specs["microwave"]
    a = create_session(spec)
    a.execute_action(make("Rotate", "timer_knob", "4", 144.0))
    a.execute_action(make("Press", "start_button", "pressed", 1))
    a.step(17)
    snap = a.snapshot()
    assert snap["countdown_remainders"]["timer_knob"] == 7
    b = restore(spec, json.loads(json.dumps(snap)))
    assert b.observe() == a.observe()
    assert b.snapshot() == snap
    for n in (2, 1, 20, 0, 40):
        assert a.step(n) == b.step(n)
    assert a.snapshot() == b.snapshot()
