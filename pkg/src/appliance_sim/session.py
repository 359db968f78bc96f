"""Live appliance state: atomic-action execution, the tick loop, the rule
fixpoint, perturbations, observations, snapshots and the trace log.

Time is discrete; one tick stands for one second of appliance time.  Actions
are applied instantly ("magic manipulation") without advancing the clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .actions import OBJECT_KINDS, AtomicAction, format_action, parse_action
from .errors import (
    ExecutorError,
    GuardViolation,
    IncompatibleAction,
    InvalidEffect,
    ObjectHandError,
    ParameterOutOfRange,
    RuleOscillation,
    SchemaMismatch,
    UnknownPart,
)
from .mechanisms import (
    OUTPUT_KINDS,
    TICK_KINDS,
    MechanismEvent,
    View,
    evaluate,
    handle_event,
    output_effects,
    resolve,
    trigger_propagate,
)
from .spec import POSITION_EPS, ApplianceSpec, Effect, _num, check_effect, parse_effect

MAX_SWEEPS = 8

SessionState = dict  # the JSON-ready dictionary produced by Session.snapshot()

_STATE_KEYS = (
    "spec_id",
    "tick",
    "joints",
    "pressed_counts",
    "countdown_remainders",
    "parameters",
    "screen",
    "indicators",
    "lights",
    "motors",
    "objects",
    "held_object",
    "rng",
)


@dataclass(frozen=True)
class PartObservation:
    name: str
    joint_value: float
    state_label: str | None


@dataclass(frozen=True)
class Observation:
    tick: int
    parts: tuple[PartObservation, ...]
    screen: tuple[tuple[str, str], ...]
    indicators: tuple[tuple[str, str], ...]
    lights: tuple[tuple[str, str], ...]
    motors: tuple[tuple[str, str], ...]
    objects: tuple[tuple[str, str], ...]
    held_object: str | None
    panel: tuple[float, float]

    def part(self, name) -> PartObservation:
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(name)

    def label(self, name):
        return self.part(name).state_label

    @property
    def screen_text(self) -> str:
        return " | ".join(f"{k}: {v}" for k, v in self.screen)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "parts": [{"name": p.name, "joint_value": _num(p.joint_value), "state_label": p.state_label} for p in self.parts],
            "screen": dict(self.screen),
            "indicators": dict(self.indicators),
            "lights": dict(self.lights),
            "motors": dict(self.motors),
            "objects": dict(self.objects),
            "held_object": self.held_object,
            "panel": {"width": _num(self.panel[0]), "height": _num(self.panel[1])},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    def to_text(self) -> str:
        lines = [f"tick {self.tick}"]
        for p in self.parts:
            label = p.state_label if p.state_label is not None else "-"
            lines.append(f"  {p.name}: {label} ({_num(p.joint_value)})")
        if self.screen:
            lines.append(f"  screen: {self.screen_text}")
        for title, pairs in (("indicators", self.indicators), ("lights", self.lights), ("motors", self.motors), ("objects", self.objects)):
            if pairs:
                lines.append(f"  {title}: " + ", ".join(f"{k}={v}" for k, v in pairs))
        lines.append(f"  hand: {self.held_object or 'empty'}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Perturbation:
    at_step: int
    changes: tuple[Effect, ...]

    def to_json(self):
        return {"at_step": self.at_step, "changes": [e.to_json() for e in self.changes]}

    @classmethod
    def from_json(cls, data) -> "Perturbation":
        at_step = data.get("at_step")
        if isinstance(at_step, bool) or not isinstance(at_step, int) or at_step < 0:
            raise InvalidEffect("perturbation at_step must be a non-negative integer")
        try:
            changes = tuple(parse_effect(e, f"changes[{i}]") for i, e in enumerate(data.get("changes", [])))
        except ValueError as exc:
            raise InvalidEffect(str(exc)) from None
        return cls(at_step, changes)


@dataclass(frozen=True)
class ActionOutcome:
    status: str  # "ok" | "rejected"
    error: str | None
    message: str
    effects_applied: tuple[Effect, ...]
    observation: Observation

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _copy_state(s: dict) -> dict:
    return {k: (dict(v) if isinstance(v, dict) else v) for k, v in s.items()}


def _effect_payload(e: Effect) -> dict:
    value = _num(e.value) if isinstance(e.value, float) else e.value
    return {"target": e.target, "name": e.name, "value": value}


class Session:
    """Single-owner mutable state of one appliance instance."""

    def __init__(self, spec: ApplianceSpec, seed: int = 0, *, _settle=True):
        self.spec = spec
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.trace: list[dict] = []
        s = {
            "tick": 0,
            "joints": {p.name: p.joint.rest for p in spec.parts},
            "pressed_counts": {p.name: 0 for p in spec.parts if p.joint.kind == "prismatic"},
            "countdown_remainders": {p.name: 0 for p in spec.parts if p.mechanism("knob_countdown")},
            "parameters": {p.name: p.initial for p in spec.parameters},
            "screen": {name: "" for name in spec.screen_fields},
            "indicators": {m.part: "off" for m in spec.mechanisms_of_kind("logo_indicator")},
            "lights": {m.part: "off" for m in spec.mechanisms_of_kind("illumination")},
            "motors": {m.part: "stopped" for m in spec.mechanisms_of_kind("rotary_motor")},
            "objects": {o.name: o.initial for o in spec.objects},
            "held_object": None,
        }
        self._set_state(s)
        if _settle:
            self._quiet(self._settle)

    # -- internal state plumbing --------------------------------------------

    def _set_state(self, s):
        self._s = s
        self.view = View(self.spec, s)

    @property
    def tick(self) -> int:
        return self._s["tick"]

    def _quiet(self, fn, *args):
        mark = len(self.trace)
        result = fn(*args)
        del self.trace[mark:]
        return result

    def _log(self, kind, payload):
        event = {"tick": self._s["tick"], "seq": len(self.trace), "kind": kind, "payload": payload}
        self.trace.append(event)
        return event

    def _apply(self, effect: Effect) -> Effect | None:
        """Apply one effect; return it (resolved to an absolute value) if it changed anything."""
        eff = resolve(effect, self.view)
        s, t, name, value = self._s, eff.target, eff.name, eff.value
        if t == "parameter":
            if s["parameters"][name] == value:
                return None
            s["parameters"][name] = value
        elif t == "part_state":
            part = self.spec.part_map[name]
            pos = part.position_of(value)
            changed = s["joints"][name] != pos
            s["joints"][name] = pos
            if name in s["countdown_remainders"] and s["countdown_remainders"][name] != 0:
                s["countdown_remainders"][name] = 0
                changed = True
            if not changed:
                return None
        elif t == "joint":
            joint = self.spec.part_map[name].joint
            value = min(joint.hi, max(joint.lo, float(value)))
            if s["joints"][name] == value:
                return None
            s["joints"][name] = value
            eff = Effect("joint", name, value)
        elif t == "countdown_remainder":
            if s["countdown_remainders"][name] == value:
                return None
            s["countdown_remainders"][name] = value
        elif t == "object":
            if s["objects"][name] == value:
                return None
            s["objects"][name] = value
        elif t == "hand":
            if s["held_object"] == value:
                return None
            s["held_object"] = value
        else:
            register = {"screen_field": "screen", "indicator": "indicators", "light": "lights", "motor": "motors"}[t]
            if s[register][name] == value:
                return None
            s[register][name] = value
        return eff

    def _apply_logged(self, effects) -> list[Effect]:
        done = []
        for effect in effects:
            eff = self._apply(effect)
            if eff is not None:
                self._log("effect", _effect_payload(eff))
                done.append(eff)
        return done

    def _settle(self) -> list[Effect]:
        """Run rules to a fixpoint, then refresh the electronic outputs."""
        applied = []
        for sweep in range(MAX_SWEEPS + 1):
            changed = False
            for rule in self.spec.sorted_rules:
                if not evaluate(rule.when, self.view):
                    continue
                fired = [e for e in (self._apply(eff) for eff in rule.then) if e is not None]
                if not fired:
                    continue
                if sweep == MAX_SWEEPS:
                    raise RuleOscillation(f"rules still changing state after {MAX_SWEEPS} sweeps (rule {rule.id!r})")
                self._log("rule_fire", {"rule": rule.id})
                for eff in fired:
                    self._log("effect", _effect_payload(eff))
                applied.extend(fired)
                changed = True
            if not changed:
                break
        for part in self.spec.parts:
            for mech in part.mechanisms:
                if mech.kind in OUTPUT_KINDS:
                    applied.extend(self._apply_logged(output_effects(mech, self.view)))
        return applied

    # -- actions ------------------------------------------------------------

    def _target_position(self, part, action) -> float | None:
        kind = action.kind
        if kind in ("Press", "Slide", "Flip"):
            pos = part.position_of(action.target_state)
            if pos is None:
                raise ParameterOutOfRange(f"{part.name} has no state {action.target_state!r}")
            return pos
        if kind in ("Open", "Close"):
            pos = part.position_of("open" if kind == "Open" else "closed")
            if pos is None:
                raise IncompatibleAction(f"{part.name} cannot be {kind.lower()}ed")
            return pos
        if kind == "Pull":
            return part.joint.hi
        if kind == "Push":
            return part.joint.lo
        if kind == "Rotate":
            joint = part.joint
            new = self._s["joints"][part.name] + action.args[2]
            if joint.continuous:
                new = joint.lo + (new - joint.lo) % joint.span
            elif new < joint.lo - POSITION_EPS or new > joint.hi + POSITION_EPS:
                raise ParameterOutOfRange(f"rotating {part.name} by {action.args[2]} leaves its range")
            label = part.label_at(new)
            if label is None:
                raise ParameterOutOfRange(f"rotating {part.name} by {action.args[2]} does not land on a marked position")
            if label != action.target_state:
                raise ParameterOutOfRange(f"rotating {part.name} by {action.args[2]} reaches {label!r}, not {action.target_state!r}")
            return part.position_of(label)
        return None

    def _guards(self, part, action):
        event = MechanismEvent.applied(action)
        for mech in part.mechanisms:
            if mech.kind in ("safety_lock", "magnetic_attraction"):
                handle_event(mech, event, self.view)

    def _fire(self, part, action) -> list[Effect]:
        applied = []
        event = MechanismEvent.applied(action)
        for _ in range(action.repeats):
            for mech in part.mechanisms:
                if mech.kind == "touch_sensing":
                    applied += self._apply_logged(handle_event(mech, event, self.view))
            applied += self._apply_logged(trigger_propagate(self.spec.triggers, event, self.view))
        return applied

    def _object_action(self, action) -> list[Effect]:
        spec, s = self.spec, self._s
        obj = spec.object_map.get(action.obj)
        if obj is None:
            raise UnknownPart(f"no object named {action.obj!r}")
        held = s["held_object"]
        pos = s["objects"][obj.name]
        if action.kind == "Pick":
            if held is not None:
                raise ObjectHandError(f"hand already holds {held}")
            if not evaluate(obj.access_for(pos), self.view):
                raise GuardViolation(f"{obj.name} cannot be reached at {pos}")
            return self._apply_logged([Effect("hand", "hand", obj.name)])
        if held != obj.name:
            raise ObjectHandError(f"{obj.name} is not in hand")
        if action.kind == "Place":
            if not evaluate(obj.access_for(pos), self.view):
                raise GuardViolation(f"{pos} is not accessible")
            return self._apply_logged([Effect("hand", "hand", None)])
        if action.kind == "Move":
            start, end = action.args[1], action.args[2]
            if start != pos:
                raise ParameterOutOfRange(f"{obj.name} is at {pos}, not {start}")
            if end not in obj.positions:
                raise ParameterOutOfRange(f"{obj.name} cannot go to {end!r}")
            for p in (start, end):
                if not evaluate(obj.access_for(p), self.view):
                    raise GuardViolation(f"{p} is not accessible")
            return self._apply_logged([Effect("object", obj.name, end)])
        # Pour
        part = spec.part_map.get(action.args[1])
        if part is None:
            raise UnknownPart(f"no part named {action.args[1]!r}")
        if "Pour" not in part.actions:
            raise IncompatibleAction(f"cannot pour into {part.name}")
        self._guards(part, action)
        return self._fire(part, action)

    def _perform(self, action: AtomicAction) -> list[Effect]:
        if action.kind in OBJECT_KINDS:
            return self._object_action(action)
        part = self.spec.part_map.get(action.part)
        if part is None:
            raise UnknownPart(f"no part named {action.part!r}")
        if action.kind not in part.actions:
            raise IncompatibleAction(f"{action.kind} is not a valid operation for {part.name}")
        target = self._target_position(part, action)
        self._guards(part, action)
        applied = []
        if target is not None:
            if part.mechanism("knob_countdown") is not None:
                applied += self._apply_logged([Effect("countdown_remainder", part.name, 0)])
            applied += self._apply_logged([Effect("joint", part.name, target)])
        if action.kind == "Press":
            self._s["pressed_counts"][part.name] += action.repeats
        return applied + self._fire(part, action)

    def execute_action(self, action: AtomicAction | str) -> ActionOutcome:
        """Apply one atomic action within the current tick; atomic on failure."""
        if isinstance(action, str):
            action = parse_action(action)
        saved = _copy_state(self._s)
        mark = len(self.trace)
        event = self._log("action", {"action": format_action(action)})
        try:
            applied = self._perform(action)
            applied += self._settle()
        except ExecutorError as exc:
            self._set_state(saved)
            del self.trace[mark:]
            self._log("action", {"action": format_action(action), "status": "rejected", "error": exc.code})
            return ActionOutcome("rejected", exc.code, str(exc), (), self.observe())
        except BaseException:
            self._set_state(saved)
            del self.trace[mark:]
            raise
        event["payload"]["status"] = "ok"
        return ActionOutcome("ok", None, "", tuple(applied), self.observe())

    # -- time, perturbations ------------------------------------------------------

    def step(self, n_ticks: int) -> Observation:
        if isinstance(n_ticks, bool) or not isinstance(n_ticks, int) or n_ticks < 0:
            raise ValueError("n_ticks must be a non-negative integer")
        self._log("tick", {"ticks": n_ticks})
        event = MechanismEvent.elapsed(1)
        for _ in range(n_ticks):
            self._s["tick"] += 1
            for part in self.spec.parts:
                for mech in part.mechanisms:
                    if mech.kind in TICK_KINDS:
                        self._apply_logged(handle_event(mech, event, self.view))
            self._settle()
        return self.observe()

    def check_perturbation(self, p: Perturbation):
        exposed = {f.source.partition(":")[2] for f in self.spec.screen_fields.values() if f.source and f.source.startswith("param:")}
        for i, eff in enumerate(p.changes):
            problems = list(check_effect(self.spec, eff, f"changes[{i}]"))
            if problems:
                raise InvalidEffect("; ".join(f"{path}: {msg}" for path, msg in problems))
            if eff.target in ("part_state", "object", "screen_field"):
                continue
            if eff.target == "parameter" and eff.name in exposed:
                continue
            raise InvalidEffect(f"changes[{i}]: perturbations may only change observable state, not {eff.ref}")

    def apply_perturbation(self, p: Perturbation) -> Observation:
        """Apply external changes directly, bypassing guards, then re-settle."""
        self.check_perturbation(p)
        self._log("perturbation", p.to_json())
        for eff in p.changes:
            self._apply_logged([eff])
            if eff.target == "object" and self._s["held_object"] == eff.name:
                self._apply_logged([Effect("hand", "hand", None)])
        self._settle()
        return self.observe()

    # -- views ----------------------------------------------------------------

    def observe(self) -> Observation:
        s, spec = self._s, self.spec
        return Observation(
            tick=s["tick"],
            parts=tuple(PartObservation(p.name, s["joints"][p.name], p.label_at(s["joints"][p.name])) for p in spec.parts),
            screen=tuple(s["screen"].items()),
            indicators=tuple(s["indicators"].items()),
            lights=tuple(s["lights"].items()),
            motors=tuple(s["motors"].items()),
            objects=tuple(s["objects"].items()),
            held_object=s["held_object"],
            panel=(spec.panel_width, spec.panel_height),
        )

    def satisfies(self, predicate) -> bool:
        return evaluate(predicate, self.view)

    def search_key(self, ignore=frozenset()) -> tuple:
        """Hashable state identity for search: drops tick, rng and press counters."""
        s = self._s
        return (
            tuple(v for k, v in s["joints"].items() if k not in ignore),
            tuple(s["countdown_remainders"].values()),
            tuple(s["parameters"].values()),
            tuple(s["screen"].values()),
            tuple(s["indicators"].values()),
            tuple(s["lights"].values()),
            tuple(s["motors"].values()),
            tuple(s["objects"].values()),
            s["held_object"],
        )

    def snapshot(self) -> SessionState:
        s = self._s
        return {
            "spec_id": self.spec.id,
            "tick": s["tick"],
            "joints": {k: _num(v) for k, v in s["joints"].items()},
            "pressed_counts": dict(s["pressed_counts"]),
            "countdown_remainders": dict(s["countdown_remainders"]),
            "parameters": dict(s["parameters"]),
            "screen": dict(s["screen"]),
            "indicators": dict(s["indicators"]),
            "lights": dict(s["lights"]),
            "motors": dict(s["motors"]),
            "objects": dict(s["objects"]),
            "held_object": s["held_object"],
            "rng": self.rng.bit_generator.state,
        }

    def copy(self) -> "Session":
        other = Session.__new__(Session)
        other.spec = self.spec
        other.seed = self.seed
        other.rng = np.random.default_rng(self.seed)
        other.rng.bit_generator.state = self.rng.bit_generator.state
        other.trace = []
        other._set_state(_copy_state(self._s))
        return other

    def trace_lines(self) -> list[str]:
        return [json.dumps(e, ensure_ascii=False, separators=(",", ":")) for e in self.trace]

    def write_trace(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.trace_lines():
                fh.write(line + "\n")


def create_session(spec: ApplianceSpec, seed: int = 0) -> Session:
    """Fresh session: joints at rest, parameters at initial values, rules settled."""
    from .validation import require_valid

    require_valid(spec)
    return Session(spec, seed)


def _restore_checked(spec, state):
    if not isinstance(state, dict) or set(state) != set(_STATE_KEYS):
        raise SchemaMismatch("session state has the wrong set of keys")
    if state["spec_id"] != spec.id:
        raise SchemaMismatch(f"state belongs to {state['spec_id']!r}, not {spec.id!r}")
    expected = Session(spec, 0, _settle=False)._s
    for key in ("joints", "pressed_counts", "countdown_remainders", "parameters", "screen", "indicators", "lights", "motors", "objects"):
        if not isinstance(state[key], dict) or list(state[key]) != list(expected[key]):
            raise SchemaMismatch(f"state field {key!r} does not match the spec")
    for name, value in state["parameters"].items():
        if not spec.param_map[name].contains(value):
            raise SchemaMismatch(f"parameter {name!r} value {value!r} is outside its domain")
    for name, value in state["joints"].items():
        joint = spec.part_map[name].joint
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not joint.lo - POSITION_EPS <= value <= joint.hi + POSITION_EPS:
            raise SchemaMismatch(f"joint {name!r} value {value!r} is outside its limits")
    held = state["held_object"]
    if held is not None and held not in spec.object_map:
        raise SchemaMismatch(f"held object {held!r} is not declared")


def restore(spec: ApplianceSpec, state: SessionState) -> Session:
    """Rebuild a session from :meth:`Session.snapshot` output."""
    _restore_checked(spec, state)
    session = Session(spec, 0, _settle=False)
    s = session._s
    s["tick"] = state["tick"]
    s["joints"] = {k: float(v) for k, v in state["joints"].items()}
    for key in ("pressed_counts", "countdown_remainders", "parameters", "screen", "indicators", "lights", "motors", "objects"):
        s[key] = dict(state[key])
    s["held_object"] = state["held_object"]
    session.rng.bit_generator.state = state["rng"]
    return session


def snapshot(session: Session) -> SessionState:
    return session.snapshot()


def observe(session: Session) -> Observation:
    return session.observe()


def execute_action(session: Session, action) -> ActionOutcome:
    return session.execute_action(action)


def step(session: Session, n_ticks: int) -> Observation:
    return session.step(n_ticks)


def apply_perturbation(session: Session, p: Perturbation) -> Observation:
    return session.apply_perturbation(p)


# --- trace replay -------------------------------------------------------------


def read_trace(path) -> list[dict]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(json.loads(line))
    return events


def replay_trace(spec: ApplianceSpec, events: list[dict], initial: SessionState | None = None, seed: int = 0):
    """Re-execute the inputs recorded in ``events`` and compare every event.

    Returns ``(session, first_divergent_seq)``; the seq is ``None`` when the
    recomputed trace matches the log exactly.
    """
    session = restore(spec, initial) if initial is not None else create_session(spec, seed)
    for event in events:
        kind, payload = event.get("kind"), event.get("payload") or {}
        if kind == "action":
            try:
                session.execute_action(parse_action(payload.get("action", "")))
            except ValueError:
                return session, event.get("seq", 0)
        elif kind == "tick":
            session.step(payload.get("ticks", 0))
        elif kind == "perturbation":
            try:
                session.apply_perturbation(Perturbation.from_json(payload))
            except (InvalidEffect, ValueError):
                return session, event.get("seq", 0)
    regenerated = session.trace
    for i in range(max(len(regenerated), len(events))):
        if i >= len(regenerated) or i >= len(events) or regenerated[i] != events[i]:
            return session, i
    return session, None
