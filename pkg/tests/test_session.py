import json

import pytest

from appliance_sim.actions import make
from appliance_sim.errors import InvalidEffect, RuleOscillation, SchemaMismatch
from appliance_sim.session import Perturbation, Session, create_session, read_trace, replay_trace, restore
from appliance_sim.spec import Effect


def test_fresh_session(specs):
    s = create_session(specs["microwave"])
    obs = s.observe()
    assert obs.tick == 0
    assert obs.label("door") == "closed"
    assert obs.label("timer_knob") == "0"
    assert dict(obs.lights)["cavity_light"] == "off"
    assert obs.held_object is None


def test_door_press_opens_same_tick(specs):
    s = create_session(specs["microwave"])
    out = s.execute_action(make("Press", "door_open_button", "pressed", 1))
    assert out.ok
    assert out.observation.tick == 0
    assert out.observation.label("door") == "open"
    assert dict(out.observation.lights)["cavity_light"] == "on"


def test_rejection_is_atomic(specs):
    s = create_session(specs["microwave"])
    before = s.snapshot()
    out = s.execute_action(make("Open", "door"))
    assert out.status == "rejected"
    assert out.error == "IncompatibleAction"
    assert s.snapshot() == before
    assert s.trace[-1]["payload"]["status"] == "rejected"


@pytest.mark.parametrize(
    "action, code",
    [
        (make("Press", "ghost", "pressed", 1), "UnknownPart"),
        (make("Rotate", "timer_knob", "3", 100.0), "ParameterOutOfRange"),
        (make("Rotate", "timer_knob", "9", 324.0), "ParameterOutOfRange"),
        (make("Place", "bowl"), "ObjectHandError"),
    ],
)
def test_rejection_codes(specs, action, code):
    s = create_session(specs["microwave"])
    out = s.execute_action(action)
    assert (out.status, out.error) == ("rejected", code)


def test_microwave_run_stops_on_zero(specs):
    s = create_session(specs["microwave"])
    assert s.execute_action(make("Rotate", "timer_knob", "3", 108.0)).ok
    assert s.execute_action(make("Press", "start_button", "pressed", 1)).ok
    assert s.view.param("running") == 1
    s.step(29)
    assert s.view.param("running") == 1
    assert s.observe().label("timer_knob") == "1"
    obs = s.step(1)
    assert obs.label("timer_knob") == "0"
    assert s.view.param("running") == 0
    assert dict(obs.screen)["time"] == "0 min"


def test_door_pauses_countdown(specs):
    s = create_session(specs["microwave"])
    s.execute_action(make("Rotate", "timer_knob", "2", 72.0))
    s.execute_action(make("Press", "start_button", "pressed", 1))
    s.step(5)
    s.execute_action(make("Press", "door_open_button", "pressed", 1))
    assert s.view.param("running") == 0
    s.step(50)
    assert s.observe().label("timer_knob") == "2"


def test_pick_and_place(specs):
    s = create_session(specs["microwave"])
    assert s.execute_action(make("Pick", "bowl")).ok
    assert s.observe().held_object == "bowl"
    out = s.execute_action(make("Move", "bowl", "counter", "turntable"))
    assert out.error == "GuardViolation"
    s.execute_action(make("Press", "door_open_button", "pressed", 1))
    assert s.execute_action(make("Move", "bowl", "counter", "turntable")).ok
    assert s.execute_action(make("Place", "bowl")).ok
    assert dict(s.observe().objects)["bowl"] == "turntable"


def test_step_validates_argument(specs):
    s = create_session(specs["microwave"])
    for bad in (-1, 1.5, True):
        with pytest.raises(ValueError):
            s.step(bad)


def test_perturbation_rules(specs):
    s = create_session(specs["microwave"])
    obs = s.apply_perturbation(Perturbation(0, (Effect("part_state", "door", "open"),)))
    assert obs.label("door") == "open"
    with pytest.raises(InvalidEffect):
        s.apply_perturbation(Perturbation(0, (Effect("parameter", "running", 1),)))
    with pytest.raises(InvalidEffect):
        s.apply_perturbation(Perturbation(0, (Effect("part_state", "door", "ajar"),)))


def test_exposed_parameter_may_be_perturbed(specs):
    s = create_session(specs["induction_cooker"])
    obs = s.apply_perturbation(Perturbation(0, (Effect("parameter", "level", 4),)))
    # power is off, so the level rule settles it straight back
    assert s.view.param("level") == 0
    assert dict(obs.screen)["level"] == "0"
    assert s.trace[-1]["kind"] != "perturbation"


def test_oscillating_rules_raise_and_roll_back(fixture_spec):
    s = Session(fixture_spec("invalid/rule_oscillation.json"))
    before = s.snapshot()
    with pytest.raises(RuleOscillation):
        s.execute_action(make("Touch", "button", 1))
    assert s.snapshot() == before


def _busy(spec):
    s = create_session(spec)
    s.execute_action(make("Rotate", "timer_knob", "3", 108.0))
    s.execute_action(make("Press", "start_button", "pressed", 1))
    s.step(14)
    return s


def test_snapshot_restore_observational_equality(specs):
    spec = specs["microwave"]
    a = _busy(spec)
    snap = a.snapshot()
    assert snap["countdown_remainders"]["timer_knob"] == 4
    b = restore(spec, json.loads(json.dumps(snap)))
    assert b.observe() == a.observe()
    for s in (a, b):
        s.step(6)
    assert a.observe() == b.observe()
    assert a.observe().label("timer_knob") == "1"
    assert a.snapshot() == b.snapshot()


def test_restore_rejects_foreign_state(specs):
    snap = create_session(specs["microwave"]).snapshot()
    with pytest.raises(SchemaMismatch):
        restore(specs["oven"], snap)
    bad = dict(snap, parameters={"running": 7})
    with pytest.raises(SchemaMismatch):
        restore(specs["microwave"], bad)


def test_trace_deterministic_and_replayable(specs, tmp_path):
    spec = specs["microwave"]
    a, b = _busy(spec), _busy(spec)
    assert a.trace_lines() == b.trace_lines()
    path = tmp_path / "t.jsonl"
    a.write_trace(path)
    events = read_trace(path)
    _, div = replay_trace(spec, events)
    assert div is None
    events[1]["payload"]["action"] = 'Press(start_button, "pressed", 2)'
    _, div = replay_trace(spec, events)
    assert div is not None


def test_min_spec_cycle_touch(fixture_spec):
    s = create_session(fixture_spec("minimal.json"))
    s.execute_action(make("Touch", "button", 1))
    assert s.view.param("power") == "on"
    s.execute_action(make("Touch", "button", 3))
    assert s.view.param("power") == "off"
