import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appliance_sim.actions import (
    ACTION_KINDS,
    Plan,
    action_equal,
    format_action,
    make,
    parse_action,
    parse_plan,
)
from appliance_sim.errors import ActionParseError, ArgTypeError, ArityError, PlanParseError, UnknownActionKind

NOMINAL = [
    'Press(start_button, "pressed", 1)',
    'Rotate(timer_knob, "3", 108.0)',
    "Open(door)",
    "Close(door)",
    "Touch(power_key, 2)",
    'Slide(vent, "open")',
    'Flip(switch, "on")',
    "Pull(basket)",
    "Push(lever)",
    "Pick(bowl)",
    "Place(bowl)",
    "Move(bowl, counter, turntable)",
    "Pour(jug, body)",
]


def test_vocabulary_has_thirteen_kinds():
    assert len(ACTION_KINDS) == 13
    assert [parse_action(t).kind for t in NOMINAL] == list(ACTION_KINDS)


@pytest.mark.parametrize("text", NOMINAL)
def test_format_parse_identity(text):
    action = parse_action(text)
    assert format_action(action) == text
    assert parse_action(format_action(action)) == action


def test_rotate_fields():
    a = parse_action('Rotate(timer_knob, "3", 108.0)')
    assert a.kind == "Rotate"
    assert a.part == "timer_knob"
    assert a.target_state == "3"
    assert a.args[2] == 108.0


def test_set_is_not_an_action():
    with pytest.raises(UnknownActionKind):
        parse_action('Set(timer_knob, "3")')


def test_missing_press_times():
    with pytest.raises(ArityError):
        parse_action('Press(start_button, "pressed")')


def test_bad_argument_types():
    with pytest.raises(ArgTypeError):
        parse_action('Press(start_button, "pressed", 0)')
    with pytest.raises(ActionParseError):
        parse_action("Touch(key, many)")


def test_whitespace_and_quoting_tolerated():
    a = parse_action('  Press( start_button ,"pressed" , 2 )  ')
    assert a == make("Press", "start_button", "pressed", 2)
    tricky = make("Flip", "switch", 'say "hi"')
    assert parse_action(format_action(tricky)) == tricky


def test_plan_error_cites_line():
    with pytest.raises(PlanParseError) as info:
        parse_plan("Open(door)\nWiggle(door)\nClose(door)\n")
    assert [n for n, _ in info.value.errors] == [2]
    assert "line 2" in str(info.value)


def test_empty_plan_text():
    assert len(parse_plan("")) == 0
    assert len(parse_plan("# comment only\n\n")) == 0


def test_plan_text_roundtrip():
    plan = parse_plan("\n".join(NOMINAL))
    assert isinstance(plan, Plan)
    assert parse_plan(plan.to_text()) == plan


def test_action_equal():
    p = make("Press", "b", "pressed", 1)
    assert action_equal(p, make("Press", "b", "pressed", 1))
    assert not action_equal(make("Rotate", "k", "3", 108.0), make("Rotate", "k", "3", 108.5))
    assert action_equal(make("Rotate", "k", "3", 108.0), make("Rotate", "k", "3", 108.0 + 1e-9))
    assert not action_equal(make("Open", "door"), make("Close", "door"))


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=200))
def test_parser_survives_arbitrary_bytes(data):
    try:
        parse_action(data)
    except ActionParseError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=120))
def test_parser_survives_arbitrary_text(text):
    try:
        action = parse_action(text)
    except ActionParseError:
        return
    assert parse_action(format_action(action)) == action


names = st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True)
labels = st.text(min_size=1, max_size=10).filter(lambda s: "\x00" not in s)


@settings(max_examples=300, deadline=None)
@given(
    st.one_of(
        st.builds(lambda n, l, c: make("Press", n, l, c), names, labels, st.integers(1, 50)),
        st.builds(lambda n, l, d: make("Rotate", n, l, d), names, labels, st.floats(-720, 720, allow_nan=False)),
        st.builds(lambda n, c: make("Touch", n, c), names, st.integers(1, 50)),
        st.builds(lambda o, a, b: make("Move", o, a, b), names, names, names),
        st.builds(lambda n, l: make("Slide", n, l), names, labels),
    )
)
def test_generated_actions_roundtrip(action):
    assert action_equal(parse_action(format_action(action)), action)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=300))
def test_plan_parser_survives_arbitrary_bytes(data):
    try:
        parse_plan(data)
    except ActionParseError:
        pass
