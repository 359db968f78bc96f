"""Mechanism behaviours.

Each mechanism config is a policy: :func:`handle_event` maps
``(config, event, view)`` to a list of :class:`~appliance_sim.spec.Effect`
and never mutates anything.  All mutable state (joint positions, countdown
remainders, registers) lives in the session and is read through a
:class:`View`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .actions import AtomicAction
from .errors import CascadeLimitExceeded, GuardViolation
from .spec import (
    POSITION_EPS,
    ApplianceSpec,
    Effect,
    KnobCountdown,
    MechanicalTrigger,
    RotaryMotor,
)

ACTION_APPLIED = "action_applied"
TICK_ELAPSED = "tick_elapsed"
STATE_ENTERED = "state_entered"


@dataclass(frozen=True)
class MechanismEvent:
    kind: str
    action: AtomicAction | None = None
    ticks: int | None = None
    entered: tuple | None = None  # (part or parameter name, label or value)

    def __post_init__(self):
        payloads = sum(x is not None for x in (self.action, self.ticks, self.entered))
        expected = {ACTION_APPLIED: self.action, TICK_ELAPSED: self.ticks, STATE_ENTERED: self.entered}
        if self.kind not in expected or payloads != 1 or expected[self.kind] is None:
            raise ValueError(f"malformed {self.kind} event")

    @classmethod
    def applied(cls, action):
        return cls(ACTION_APPLIED, action=action)

    @classmethod
    def elapsed(cls, ticks=1):
        return cls(TICK_ELAPSED, ticks=ticks)

    @classmethod
    def state_entered(cls, name, value):
        return cls(STATE_ENTERED, entered=(name, value))


class View:
    """Read-only window onto a session state dictionary."""

    def __init__(self, spec: ApplianceSpec, state: dict):
        self.spec = spec
        self._s = state

    def param(self, name):
        return self._s["parameters"][name]

    def joint(self, part):
        return self._s["joints"][part]

    def label(self, part):
        return self.spec.part_map[part].label_at(self.joint(part))

    def position(self, obj):
        return self._s["objects"][obj]

    @property
    def held(self):
        return self._s["held_object"]

    def remainder(self, part):
        return self._s["countdown_remainders"].get(part, 0)

    def screen(self, field):
        return self._s["screen"][field]

    def indicator(self, part):
        return self._s["indicators"][part]

    def light(self, part):
        return self._s["lights"][part]

    def motor(self, part):
        return self._s["motors"][part]

    def ref(self, ref):
        if ref == "hand":
            return self.held or "none"
        scope, _, name = ref.partition(":")
        if scope == "param":
            return self.param(name)
        if scope == "part":
            return self.label(name)
        if scope == "obj":
            return self.position(name)
        raise KeyError(ref)


class _Overlay(View):
    """A view with pending effects layered on top; used inside trigger cascades."""

    def __init__(self, base: View):
        super().__init__(base.spec, base._s)
        self._base = base
        self._joints = {}
        self._params = {}
        self._objects = {}

    def joint(self, part):
        if part in self._joints:
            return self._joints[part]
        return self._base.joint(part)

    def param(self, name):
        if name in self._params:
            return self._params[name]
        return self._base.param(name)

    def position(self, obj):
        if obj in self._objects:
            return self._objects[obj]
        return self._base.position(obj)

    def push(self, effect: Effect):
        eff = resolve(effect, self)
        if eff.target == "part_state":
            self._joints[eff.name] = self.spec.part_map[eff.name].position_of(eff.value)
        elif eff.target == "parameter":
            self._params[eff.name] = eff.value
        elif eff.target == "object":
            self._objects[eff.name] = eff.value


def _compare(lhs, op, rhs) -> bool:
    if op == "==":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if op == "in":
        return lhs in rhs
    if op == "not_in":
        return lhs not in rhs
    if not isinstance(lhs, (int, float)) or isinstance(lhs, bool):
        return False
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    return lhs >= rhs


def evaluate(predicate, view: View) -> bool:
    return all(_compare(view.ref(c.ref), c.op, c.value) for c in predicate)


def resolve(effect: Effect, view: View) -> Effect:
    """Turn relative parameter effects (add / cycle) into absolute sets."""
    if effect.target != "parameter" or effect.op == "set":
        return effect
    param = view.spec.param_map[effect.name]
    current = view.param(effect.name)
    if effect.op == "add":
        lo, hi, step = param.range
        value = min(hi, max(lo, current + effect.value))
        value = lo + ((value - lo) // step) * step
    else:
        values = param.values()
        value = values[(values.index(current) + 1) % len(values)]
    return Effect("parameter", effect.name, value)


# --- individual behaviours -----------------------------------------------------


class CountdownStep(NamedTuple):
    index: int
    fired_zero: bool
    remainder: int = 0


def countdown_advance(config: KnobCountdown, current_detent_index: int, ticks: int, remainder: int = 0) -> CountdownStep:
    """Advance a countdown knob by ``ticks``.

    ``remainder`` is the number of ticks already spent on the current detent;
    the returned remainder is what the session should carry forward.
    """
    if current_detent_index < 0 or ticks < 0:
        raise ValueError("detent index and ticks must be non-negative")
    if current_detent_index == 0:
        return CountdownStep(0, False, 0)
    total = remainder + ticks
    steps, left = divmod(total, config.ticks_per_detent)
    index = max(0, current_detent_index - steps)
    if index == 0:
        return CountdownStep(0, True, 0)
    return CountdownStep(index, False, left)


def motor_advance(config: RotaryMotor, joint_value: float, ticks: int, view: View) -> float:
    running = evaluate(config.on_when, view) if config.on_when is not None else view.motor(config.part) == "running"
    if not running or ticks == 0:
        return joint_value
    joint = view.spec.part_map[config.joint].joint
    value = joint_value + config.rate * ticks
    if joint.continuous:
        return joint.lo + (value - joint.lo) % joint.span
    return min(joint.hi, value)


def _spring_tick(config, event, view):
    part = view.spec.part_map[config.part]
    joint = part.joint
    if config.latch_param is not None:
        param = view.spec.param_map[config.latch_param]
        if param.is_active(view.param(config.latch_param)):
            return []
    value = view.joint(config.part)
    if value == joint.rest:
        return []
    step = joint.span / config.return_ticks * event.ticks
    gap = abs(value - joint.rest)
    if gap <= step + POSITION_EPS:
        new = joint.rest
    else:
        new = value - step if value > joint.rest else value + step
    return [Effect("joint", config.part, new)]


def _countdown_tick(config, event, view):
    if config.active_when and not evaluate(config.active_when, view):
        return []
    part = view.spec.part_map[config.part]
    index = part.detent_index(view.joint(config.part))
    remainder = view.remainder(config.part)
    res = countdown_advance(config, index, event.ticks, remainder)
    out = []
    if res.index != index:
        out.append(Effect("joint", config.part, part.joint.detents[res.index]))
    if res.remainder != remainder:
        out.append(Effect("countdown_remainder", config.part, res.remainder))
    if res.fired_zero:
        out.extend(config.on_zero)
    return out


def _acts_on(config, event, kinds) -> bool:
    return event.kind == ACTION_APPLIED and event.action.kind in kinds and event.action.part == config.part


def trigger_matches(trigger: MechanicalTrigger, event: MechanismEvent) -> bool:
    label = trigger.entered_label
    if label is not None:
        return event.kind == STATE_ENTERED and event.entered == (trigger.part, label)
    return _acts_on(trigger, event, (trigger.on,))


def _render_field(field, view) -> str:
    scope, _, name = field.source.partition(":")
    value = view.param(name) if scope == "param" else view.label(name)
    return field.format.format("-" if value is None else value)


def output_effects(config, view: View) -> list[Effect]:
    """Register values an electronic output mechanism derives from the view."""
    kind = config.kind
    if kind == "screen_display":
        return [Effect("screen_field", f.field, _render_field(f, view)) for f in config.fields if f.source is not None]
    if kind == "illumination":
        if config.on_when is None:
            return []
        return [Effect("light", config.part, "on" if evaluate(config.on_when, view) else "off")]
    if kind == "logo_indicator":
        for mode in config.mode_when:
            if evaluate(mode.when, view):
                return [Effect("indicator", config.part, mode.mode)]
        return []
    if kind == "rotary_motor":
        if config.on_when is None:
            return []
        return [Effect("motor", config.part, "running" if evaluate(config.on_when, view) else "stopped")]
    return []


OUTPUT_KINDS = ("screen_display", "illumination", "logo_indicator", "rotary_motor")
TICK_KINDS = ("inner_spring", "knob_countdown", "rotary_motor")


def handle_event(config, event: MechanismEvent, view: View) -> list[Effect]:
    """React to one event. Raises GuardViolation when a lock or magnet blocks the action."""
    kind = config.kind
    if kind == "safety_lock":
        if _acts_on(config, event, config.blocks) and not evaluate(config.unlocked_when, view):
            raise GuardViolation(f"{config.part} is locked; {event.action.kind} is blocked")
        return []
    if kind == "magnetic_attraction":
        if _acts_on(config, event, ("Open",)) and evaluate(config.hold, view):
            raise GuardViolation(f"{config.part} is held shut by its magnetic seal")
        return []
    if kind == "mechanical_trigger":
        if trigger_matches(config, event) and evaluate(config.guard, view):
            return list(config.fired_effects())
        return []
    if kind == "touch_sensing":
        return list(config.effects) if _acts_on(config, event, ("Touch",)) else []
    if kind == "inner_spring":
        return _spring_tick(config, event, view) if event.kind == TICK_ELAPSED else []
    if kind == "knob_countdown":
        return _countdown_tick(config, event, view) if event.kind == TICK_ELAPSED else []
    if kind == "rotary_motor" and event.kind == TICK_ELAPSED:
        value = view.joint(config.joint)
        new = motor_advance(config, value, event.ticks, view)
        return [Effect("joint", config.joint, new)] if new != value else []
    return output_effects(config, view)


def trigger_propagate(triggers, initial_event: MechanismEvent, view: View) -> list[Effect]:
    """Fire triggers in declaration order, following state entries they cause.

    Returns the whole cascade's effects in firing order.
    """
    limit = len(triggers) + 1
    overlay = _Overlay(view)
    queue = deque([initial_event])
    effects: list[Effect] = []
    firings = 0
    while queue:
        event = queue.popleft()
        for trig in triggers:
            if not (trigger_matches(trig, event) and evaluate(trig.guard, overlay)):
                continue
            fired = trig.fired_effects()
            firings += 1
            if firings > limit:
                raise CascadeLimitExceeded(f"trigger cascade exceeded {limit} firings")
            for eff in fired:
                effects.append(eff)
                overlay.push(eff)
                if eff.target == "part_state":
                    queue.append(MechanismEvent.state_entered(eff.name, eff.value))
    return effects
