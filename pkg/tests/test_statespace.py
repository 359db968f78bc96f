import json

import pytest

from appliance_sim.actions import format_action
from appliance_sim.bench.episodes import start_session
from appliance_sim.errors import StateSpaceExceeded, UnreachableGoal
from appliance_sim.session import create_session
from appliance_sim.spec import Comparison, load_spec
from appliance_sim.statespace import SearchLimits, canonical_state, enumerate_states, first_actions, oracle_plan


def _knob_spec():
    return load_spec(json.dumps({
        "id": "knob",
        "category": "oven",
        "panel": {"width": 100, "height": 100},
        "parts": [{
            "name": "knob",
            "joint": {"kind": "revolute", "limits": [0, 90], "rest": 0, "detents": [0, 45, 90]},
            "state_labels": {"0": "low", "45": "mid", "90": "high"},
            "panel_rect": [10, 10, 50, 50],
            "actions": ["Rotate"],
            "mechanisms": [],
        }],
        "parameters": [],
        "rules": [],
        "objects": [],
    }))


def test_toggle_button_graph(fixture_spec):
    g = enumerate_states(fixture_spec("minimal.json"))
    assert len(g.nodes) == 2
    assert [(a, format_action(x), b) for a, x, b in g.edges] == [(0, "Touch(button, 1)", 1), (1, "Touch(button, 1)", 0)]


def test_three_detent_knob_graph():
    g = enumerate_states(_knob_spec())
    assert len(g.nodes) == 3
    assert len(g.edges) == 6
    assert g.successors(0) == {'Rotate(knob, "mid", 45.0)': 1, 'Rotate(knob, "high", 90.0)': 2}


def test_nodes_are_unique_canonical_states(specs):
    g = enumerate_states(specs["microwave"], project=True)
    assert len(set(g.nodes)) == len(g.nodes)
    assert g.nodes[0] == canonical_state(create_session(specs["microwave"]))


def test_node_limit(specs):
    with pytest.raises(StateSpaceExceeded):
        enumerate_states(specs["oven"], SearchLimits(max_nodes=5))


def test_goal_already_met(specs):
    s = create_session(specs["microwave"])
    assert len(oracle_plan(specs["microwave"], s, (Comparison("part:door", "==", "closed"),))) == 0


def test_microwave_bowl_plan(specs):
    spec = specs["microwave"]
    goal = (Comparison("obj:bowl", "==", "turntable"), Comparison("hand", "==", "none"))
    plan = oracle_plan(spec, create_session(spec), goal)
    assert plan.to_text().splitlines() == [
        'Press(door_open_button, "pressed", 1)',
        "Pick(bowl)",
        "Move(bowl, counter, turntable)",
        "Place(bowl)",
    ]


def test_mixer_unlocks_first(specs):
    spec = specs["stand_mixer"]
    goal = (Comparison("part:motor_head", "==", "open"),)
    plan = oracle_plan(spec, create_session(spec), goal)
    assert [a.kind for a in plan] == ["Flip", "Open"]
    assert plan[0].part == "lock_lever"


def test_first_actions_cover_all_minimal_plans():
    spec = _knob_spec()
    goal = (Comparison("part:knob", "!=", "low"),)
    firsts = first_actions(spec, create_session(spec), goal)
    assert [format_action(a) for a in firsts] == ['Rotate(knob, "mid", 45.0)', 'Rotate(knob, "high", 90.0)']


def test_unreachable_goal():
    spec = _knob_spec()
    with pytest.raises(UnreachableGoal):
        oracle_plan(spec, create_session(spec), (Comparison("part:knob", "==", "low"), Comparison("part:knob", "==", "high")))


def test_snapshot_input(specs):
    spec = specs["stand_mixer"]
    goal = (Comparison("part:motor_head", "==", "open"),)
    s = create_session(spec)
    assert oracle_plan(spec, s.snapshot(), goal) == oracle_plan(spec, s, goal)


def test_plans_replay_to_goal(corpus):
    for ep in corpus.episodes:
        spec = corpus.spec_for(ep)
        s = start_session(spec, ep)
        for action in oracle_plan(spec, s.snapshot(), ep.goal):
            assert s.execute_action(action).ok
        assert s.satisfies(ep.goal)
