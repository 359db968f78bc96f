import json

import pytest

from appliance_sim.actions import make
from appliance_sim.errors import CascadeLimitExceeded
from appliance_sim.mechanisms import MechanismEvent, View, countdown_advance, motor_advance, trigger_propagate
from appliance_sim.session import Session
from appliance_sim.spec import Effect, KnobCountdown, MechanicalTrigger, load_spec


def _switch(name, x):
    return {
        "name": name,
        "joint": {"kind": "revolute", "limits": [0, 90], "rest": 0, "detents": [0, 90]},
        "state_labels": {"0": "off", "90": "on"},
        "panel_rect": [x, 0, x + 10, 10],
        "actions": ["Rotate"],
        "mechanisms": [],
    }


@pytest.fixture(scope="module")
def chain_spec():
    doc = {
        "id": "chain",
        "category": "oven",
        "panel": {"width": 100, "height": 20},
        "parts": [_switch(n, 10 * i) for i, n in enumerate("abc")] + [_switch(f"k{i}", 40 + 10 * i) for i in (1, 2, 3)],
        "parameters": [{"name": "running", "domain": {"range": [0, 1, 1]}, "initial": 0}],
        "rules": [],
        "objects": [],
    }
    return load_spec(json.dumps(doc))


def test_countdown_reaches_zero():
    cfg = KnobCountdown(part="k", ticks_per_detent=10)
    assert countdown_advance(cfg, 3, 30) == (0, True, 0)


def test_countdown_idle_at_zero():
    cfg = KnobCountdown(part="k", ticks_per_detent=10)
    assert countdown_advance(cfg, 0, 100) == (0, False, 0)


def test_countdown_no_ticks():
    cfg = KnobCountdown(part="k", ticks_per_detent=10)
    assert countdown_advance(cfg, 2, 0) == (2, False, 0)


def test_countdown_carries_remainder():
    cfg = KnobCountdown(part="k", ticks_per_detent=10)
    first = countdown_advance(cfg, 3, 14)
    assert first == (2, False, 4)
    assert countdown_advance(cfg, first.index, 6, first.remainder) == (1, False, 0)


def test_countdown_rejects_negative():
    cfg = KnobCountdown(part="k", ticks_per_detent=10)
    with pytest.raises(ValueError):
        countdown_advance(cfg, 1, -1)


def _view(spec, session=None):
    return View(spec, (session or Session(spec))._s)


def test_motor_linear_and_wrap(specs):
    spec = specs["microwave"]
    cfg = spec.part_map["turntable"].mechanism("rotary_motor")
    assert cfg.rate == 2
    session = Session(spec)
    session._s["parameters"]["running"] = 1
    view = _view(spec, session)
    assert motor_advance(cfg, 0, 10, view) == 20
    assert motor_advance(cfg, 350, 10, view) == 10
    session._s["parameters"]["running"] = 0
    assert motor_advance(cfg, 350, 10, _view(spec, session)) == 350


def test_trigger_door_open(specs):
    spec = specs["microwave"]
    triggers = [m for p in spec.parts for m in p.mechanisms if m.kind == "mechanical_trigger"]
    event = MechanismEvent.applied(make("Press", "door_open_button", "pressed", 1))
    assert trigger_propagate(triggers, event, _view(spec)) == [Effect("part_state", "door", "open")]


def test_trigger_guard_blocks(specs):
    spec = specs["microwave"]
    triggers = [m for p in spec.parts for m in p.mechanisms if m.kind == "mechanical_trigger"]
    event = MechanismEvent.applied(make("Press", "start_button", "pressed", 1))
    # timer at 0: guard fails
    assert trigger_propagate(triggers, event, _view(spec)) == []


def test_trigger_cascade_follows_state_entries(chain_spec):
    spec = chain_spec
    chain = [
        MechanicalTrigger(part="a", on="Press", target="b", state="on"),
        MechanicalTrigger(part="b", on="entered:on", target="c", state="on"),
        MechanicalTrigger(part="c", on="entered:on", effects=(Effect("parameter", "running", 1),)),
    ]
    event = MechanismEvent.applied(make("Press", "a", "pressed", 1))
    assert trigger_propagate(chain, event, _view(spec)) == [
        Effect("part_state", "b", "on"),
        Effect("part_state", "c", "on"),
        Effect("parameter", "running", 1),
    ]


def test_trigger_resets_in_declaration_order(chain_spec):
    spec = chain_spec
    resets = [MechanicalTrigger(part="stop", on="Press", target=t, state="off") for t in ("k1", "k2", "k3")]
    event = MechanismEvent.applied(make("Press", "stop", "pressed", 1))
    assert [e.name for e in trigger_propagate(resets, event, _view(spec))] == ["k1", "k2", "k3"]


def test_trigger_cycle_is_bounded(chain_spec):
    spec = chain_spec
    loop = [
        MechanicalTrigger(part="a", on="entered:on", target="b", state="on"),
        MechanicalTrigger(part="b", on="entered:on", target="a", state="on"),
    ]
    with pytest.raises(CascadeLimitExceeded):
        trigger_propagate(loop, MechanismEvent.state_entered("a", "on"), _view(spec))
