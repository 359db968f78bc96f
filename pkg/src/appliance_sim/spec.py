"""Appliance spec format: typed model, JSON loader and canonical serializer.

A spec document is UTF-8 JSON with exactly the top-level keys ``id``,
``category``, ``panel``, ``parts``, ``parameters``, ``rules`` and
``objects``.  The JSON schema lives in ``data/schema/appliance.schema.json``.

References inside predicates and effects use a ``scope:name`` string:

* ``param:<parameter>`` -- a setting parameter value
* ``part:<part>`` -- the state label of a part (``None`` between labels)
* ``obj:<object>`` -- the symbolic position of a manipulable object
* ``hand`` -- the held object name, or ``"none"``
* ``screen:<field>``, ``indicator:<part>``, ``light:<part>``,
  ``motor:<part>`` -- electronic output registers (effects only)

A predicate is a list of ``[ref, op, value]`` comparisons, all of which
must hold.  An effect is one of ``{"set": ref, "to": v}``,
``{"add": "param:x", "by": n}`` or ``{"cycle": "param:x"}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, ClassVar, Union

from .actions import ACTION_KINDS
from .errors import (
    DuplicateName,
    InvalidValue,
    MissingField,
    SpecSyntaxError,
    UnknownField,
    UnresolvedReference,
)

CATEGORIES: tuple[str, ...] = (
    "microwave",
    "oven",
    "air_fryer",
    "toaster",
    "washing_machine",
    "coffee_machine",
    "stand_mixer",
    "kettle",
    "rice_cooker",
    "induction_cooker",
    "blender",
    "dishwasher",
    "refrigerator",
    "range_hood",
)

JOINT_KINDS = ("revolute", "prismatic", "fixed")

# action kinds a joint kind can physically support
JOINT_ACTIONS = {
    "revolute": ("Rotate", "Open", "Close", "Flip", "Pour"),
    "prismatic": ("Press", "Open", "Close", "Slide", "Pull", "Push", "Pour"),
    "fixed": ("Touch", "Pour"),
}

COMPARISON_OPS = ("==", "!=", "<", "<=", ">", ">=", "in", "not_in")
ORDERING_OPS = ("<", "<=", ">", ">=")

INDICATOR_MODES = ("on", "off", "flash")
LIGHT_STATES = ("on", "off")
MOTOR_STATES = ("running", "stopped")

REF_SCOPES = {
    "param": "parameter",
    "part": "part_state",
    "obj": "object",
    "screen": "screen_field",
    "indicator": "indicator",
    "light": "light",
    "motor": "motor",
}
PREDICATE_SCOPES = ("param", "part", "obj", "hand")
TARGET_PREFIX = {v: k for k, v in REF_SCOPES.items()}

POSITION_EPS = 1e-6


def _num(value: float) -> int | float:
    """Integral floats serialize as ints so canonical output is stable."""
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def num_key(value: float) -> str:
    return json.dumps(_num(float(value)))


# --- predicates and effects ---------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    ref: str
    op: str
    value: Any

    @property
    def scope(self) -> str:
        return self.ref.split(":", 1)[0]

    @property
    def name(self) -> str:
        return self.ref.split(":", 1)[1] if ":" in self.ref else ""

    def to_json(self):
        value = list(self.value) if isinstance(self.value, tuple) else self.value
        return [self.ref, self.op, value]


Predicate = tuple  # tuple[Comparison, ...]; the empty tuple is "always true"


@dataclass(frozen=True)
class Effect:
    """A state change. ``target`` is one of the REF_SCOPES values, or the
    engine-internal ``joint`` / ``countdown_remainder``."""

    target: str
    name: str
    value: Any = None
    op: str = "set"

    @property
    def ref(self) -> str:
        return f"{TARGET_PREFIX.get(self.target, self.target)}:{self.name}"

    def to_json(self):
        if self.op == "add":
            return {"add": self.ref, "by": self.value}
        if self.op == "cycle":
            return {"cycle": self.ref}
        return {"set": self.ref, "to": _num(self.value) if isinstance(self.value, float) else self.value}


# --- mechanisms ---------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class Mechanism:
    kind: ClassVar[str] = ""
    part: str = ""

    def to_json(self) -> dict:
        raise NotImplementedError


def _pred_json(pred):
    return [c.to_json() for c in pred]


def _effects_json(effects):
    return [e.to_json() for e in effects]


@dataclass(frozen=True, kw_only=True)
class InnerSpring(Mechanism):
    kind: ClassVar[str] = "inner_spring"
    return_ticks: int = 1
    latch_param: str | None = None

    def to_json(self):
        out = {"kind": self.kind, "return_ticks": self.return_ticks}
        if self.latch_param is not None:
            out["latch_param"] = self.latch_param
        return out


@dataclass(frozen=True, kw_only=True)
class MagneticAttraction(Mechanism):
    kind: ClassVar[str] = "magnetic_attraction"
    hold: Predicate = ()

    def to_json(self):
        return {"kind": self.kind, "hold": _pred_json(self.hold)}


@dataclass(frozen=True, kw_only=True)
class MechanicalTrigger(Mechanism):
    """Fires on ``on`` (an action kind applied to the owner part, or
    ``entered:<label>`` when the owner part enters a label during a cascade)."""

    kind: ClassVar[str] = "mechanical_trigger"
    on: str = "Press"
    target: str | None = None
    state: str | None = None
    guard: Predicate = ()
    effects: tuple = ()

    @property
    def entered_label(self) -> str | None:
        return self.on.split(":", 1)[1] if self.on.startswith("entered:") else None

    def fired_effects(self) -> tuple:
        head = (Effect("part_state", self.target, self.state),) if self.target else ()
        return head + tuple(self.effects)

    def to_json(self):
        out = {"kind": self.kind, "on": self.on}
        if self.target is not None:
            out["target"] = self.target
            out["state"] = self.state
        if self.guard:
            out["guard"] = _pred_json(self.guard)
        if self.effects:
            out["effects"] = _effects_json(self.effects)
        return out


@dataclass(frozen=True, kw_only=True)
class KnobCountdown(Mechanism):
    kind: ClassVar[str] = "knob_countdown"
    ticks_per_detent: int = 1
    on_zero: tuple = ()
    active_when: Predicate = ()

    def to_json(self):
        out = {"kind": self.kind, "ticks_per_detent": self.ticks_per_detent, "on_zero": _effects_json(self.on_zero)}
        if self.active_when:
            out["active_when"] = _pred_json(self.active_when)
        return out


@dataclass(frozen=True, kw_only=True)
class SafetyLock(Mechanism):
    kind: ClassVar[str] = "safety_lock"
    unlocked_when: Predicate = ()
    blocks: tuple[str, ...] = ()

    def to_json(self):
        return {"kind": self.kind, "unlocked_when": _pred_json(self.unlocked_when), "blocks": list(self.blocks)}


@dataclass(frozen=True)
class ScreenField:
    field: str
    source: str | None = None
    format: str = "{}"

    def to_json(self):
        out = {"field": self.field}
        if self.source is not None:
            out["source"] = self.source
        if self.format != "{}":
            out["format"] = self.format
        return out


@dataclass(frozen=True, kw_only=True)
class ScreenDisplay(Mechanism):
    kind: ClassVar[str] = "screen_display"
    fields: tuple[ScreenField, ...] = ()

    def to_json(self):
        return {"kind": self.kind, "fields": [f.to_json() for f in self.fields]}


@dataclass(frozen=True, kw_only=True)
class TouchSensing(Mechanism):
    kind: ClassVar[str] = "touch_sensing"
    effects: tuple = ()

    def to_json(self):
        return {"kind": self.kind, "effects": _effects_json(self.effects)}


@dataclass(frozen=True, kw_only=True)
class Illumination(Mechanism):
    kind: ClassVar[str] = "illumination"
    on_when: Predicate | None = None

    def to_json(self):
        out = {"kind": self.kind}
        if self.on_when is not None:
            out["on_when"] = _pred_json(self.on_when)
        return out


@dataclass(frozen=True)
class IndicatorMode:
    when: Predicate
    mode: str


@dataclass(frozen=True, kw_only=True)
class LogoIndicator(Mechanism):
    """First matching ``mode_when`` entry sets the indicator; no match keeps
    the current mode, so effect-driven states such as ``flash`` persist."""

    kind: ClassVar[str] = "logo_indicator"
    mode_when: tuple[IndicatorMode, ...] = ()

    def to_json(self):
        return {
            "kind": self.kind,
            "mode_when": [{"when": _pred_json(m.when), "mode": m.mode} for m in self.mode_when],
        }


@dataclass(frozen=True, kw_only=True)
class RotaryMotor(Mechanism):
    kind: ClassVar[str] = "rotary_motor"
    joint: str = ""
    rate: float = 1.0
    on_when: Predicate | None = None

    def to_json(self):
        out = {"kind": self.kind, "joint": self.joint, "rate": _num(float(self.rate))}
        if self.on_when is not None:
            out["on_when"] = _pred_json(self.on_when)
        return out


MECHANISM_TYPES: dict[str, type] = {
    cls.kind: cls
    for cls in (
        InnerSpring,
        MagneticAttraction,
        MechanicalTrigger,
        KnobCountdown,
        SafetyLock,
        ScreenDisplay,
        TouchSensing,
        Illumination,
        LogoIndicator,
        RotaryMotor,
    )
}
MECHANISM_KINDS = tuple(MECHANISM_TYPES)

MechanismConfig = Union[
    InnerSpring,
    MagneticAttraction,
    MechanicalTrigger,
    KnobCountdown,
    SafetyLock,
    ScreenDisplay,
    TouchSensing,
    Illumination,
    LogoIndicator,
    RotaryMotor,
]


# --- parts, parameters, rules, objects ----------------------------------------


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        from .errors import DegenerateBox

        vals = (self.x1, self.y1, self.x2, self.y2)
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) for v in vals):
            raise DegenerateBox(f"box coordinates must be finite numbers: {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBox(f"box needs x1 < x2 and y1 < y2: {vals}")
        if min(vals) < 0:
            raise DegenerateBox(f"box coordinates must be >= 0: {vals}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list:
        return [_num(float(v)) for v in (self.x1, self.y1, self.x2, self.y2)]


@dataclass(frozen=True)
class JointSpec:
    kind: str
    limits: tuple[float, float] | None = None
    rest: float = 0.0
    detents: tuple[float, ...] = ()
    continuous: bool = False

    @property
    def lo(self) -> float:
        return self.limits[0] if self.limits else 0.0

    @property
    def hi(self) -> float:
        return self.limits[1] if self.limits else 0.0

    @property
    def span(self) -> float:
        return self.hi - self.lo

    def to_json(self):
        out = {"kind": self.kind}
        if self.limits is not None:
            out["limits"] = [_num(self.limits[0]), _num(self.limits[1])]
            out["rest"] = _num(self.rest)
        if self.detents:
            out["detents"] = [_num(d) for d in self.detents]
        if self.continuous:
            out["continuous"] = True
        return out


@dataclass(frozen=True)
class PartSpec:
    name: str
    joint: JointSpec
    panel_rect: BoundingBox
    state_labels: tuple[tuple[float, str], ...] = ()
    mechanisms: tuple = ()
    actions: tuple[str, ...] = ()
    max_presses: int = 1

    def label_at(self, value: float) -> str | None:
        for pos, label in self.state_labels:
            if abs(pos - value) <= POSITION_EPS:
                return label
        return None

    def position_of(self, label: str) -> float | None:
        for pos, lab in self.state_labels:
            if lab == label:
                return pos
        return None

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for _, lab in self.state_labels)

    def mechanism(self, kind: str):
        for m in self.mechanisms:
            if m.kind == kind:
                return m
        return None

    def detent_index(self, value: float) -> int:
        """Index of the detent nearest to ``value``."""
        dets = self.joint.detents
        return min(range(len(dets)), key=lambda i: (abs(dets[i] - value), i))

    def to_json(self):
        out = {"name": self.name, "joint": self.joint.to_json()}
        if self.state_labels:
            out["state_labels"] = {num_key(p): lab for p, lab in self.state_labels}
        out["panel_rect"] = self.panel_rect.as_list()
        out["actions"] = list(self.actions)
        if self.max_presses != 1:
            out["max_presses"] = self.max_presses
        out["mechanisms"] = [m.to_json() for m in self.mechanisms]
        return out


@dataclass(frozen=True)
class SettingParameter:
    name: str
    initial: Any
    labels: tuple[str, ...] | None = None
    range: tuple[int, int, int] | None = None
    unit: str = ""

    @property
    def is_enum(self) -> bool:
        return self.labels is not None

    def values(self) -> tuple:
        if self.labels is not None:
            return self.labels
        lo, hi, step = self.range
        return tuple(range(lo, hi + 1, step))

    def contains(self, value) -> bool:
        if self.labels is not None:
            return isinstance(value, str) and value in self.labels
        if isinstance(value, bool) or not isinstance(value, int):
            return False
        lo, hi, step = self.range
        return lo <= value <= hi and (value - lo) % step == 0

    def is_active(self, value) -> bool:
        """Truthiness used for spring latches: non-zero, or not the first label."""
        if self.labels is not None:
            return value != self.labels[0]
        return value != 0

    def to_json(self):
        out = {"name": self.name}
        if self.labels is not None:
            out["domain"] = {"labels": list(self.labels)}
        else:
            out["domain"] = {"range": list(self.range)}
        out["initial"] = self.initial
        out["unit"] = self.unit
        return out


@dataclass(frozen=True)
class LogicRule:
    id: str
    when: Predicate
    then: tuple
    priority: int = 0

    def to_json(self):
        return {"id": self.id, "priority": self.priority, "when": _pred_json(self.when), "then": _effects_json(self.then)}


@dataclass(frozen=True)
class ObjectSpec:
    """A manipulable object with symbolic positions; ``access`` gates moving
    the object into or out of a position (e.g. the cavity needs the door open)."""

    name: str
    positions: tuple[str, ...]
    initial: str
    access: tuple[tuple[str, Predicate], ...] = ()

    def access_for(self, position: str) -> Predicate:
        for pos, pred in self.access:
            if pos == position:
                return pred
        return ()

    def to_json(self):
        out = {"name": self.name, "positions": list(self.positions), "initial": self.initial}
        if self.access:
            out["access"] = {pos: _pred_json(pred) for pos, pred in self.access}
        return out


@dataclass(frozen=True)
class ApplianceSpec:
    id: str
    category: str
    panel_width: float
    panel_height: float
    parts: tuple[PartSpec, ...]
    parameters: tuple[SettingParameter, ...] = ()
    rules: tuple[LogicRule, ...] = ()
    objects: tuple[ObjectSpec, ...] = ()

    @cached_property
    def part_map(self) -> dict[str, PartSpec]:
        return {p.name: p for p in self.parts}

    @cached_property
    def param_map(self) -> dict[str, SettingParameter]:
        return {p.name: p for p in self.parameters}

    @cached_property
    def object_map(self) -> dict[str, ObjectSpec]:
        return {o.name: o for o in self.objects}

    @cached_property
    def part_index(self) -> dict[str, int]:
        return {p.name: i for i, p in enumerate(self.parts)}

    @cached_property
    def object_index(self) -> dict[str, int]:
        return {o.name: i for i, o in enumerate(self.objects)}

    @cached_property
    def triggers(self) -> tuple[MechanicalTrigger, ...]:
        return tuple(m for p in self.parts for m in p.mechanisms if m.kind == "mechanical_trigger")

    @cached_property
    def screen_fields(self) -> dict[str, ScreenField]:
        return {f.field: f for p in self.parts for m in p.mechanisms if m.kind == "screen_display" for f in m.fields}

    @cached_property
    def sorted_rules(self) -> tuple[LogicRule, ...]:
        order = {r.id: i for i, r in enumerate(self.rules)}
        return tuple(sorted(self.rules, key=lambda r: (-r.priority, order[r.id])))

    def mechanisms_of_kind(self, kind: str):
        return [m for p in self.parts for m in p.mechanisms if m.kind == kind]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "panel": {"width": _num(float(self.panel_width)), "height": _num(float(self.panel_height))},
            "parts": [p.to_json() for p in self.parts],
            "parameters": [p.to_json() for p in self.parameters],
            "rules": [r.to_json() for r in self.rules],
            "objects": [o.to_json() for o in self.objects],
        }


def dump_spec(spec: ApplianceSpec) -> str:
    """Canonical serialization; byte-stable for equal specs."""
    return json.dumps(spec.to_json(), indent=2, ensure_ascii=False) + "\n"


# --- loading ------------------------------------------------------------------


class _Reader:
    """Walks the raw JSON, tracking a JSON-path-like location for errors."""

    def __init__(self, data, path="$"):
        self.data = data
        self.path = path

    def obj(self, allowed, required=()):
        if not isinstance(self.data, dict):
            raise InvalidValue("expected an object", self.path)
        for key in self.data:
            if key not in allowed:
                raise UnknownField(f"unknown field {key!r}", f"{self.path}.{key}")
        for key in required:
            if key not in self.data:
                raise MissingField(f"missing field {key!r}", self.path)
        return self

    def get(self, key, default=None):
        return self.data.get(key, default)

    def sub(self, key):
        return _Reader(self.data[key], f"{self.path}.{key}")

    def has(self, key):
        return key in self.data

    def items(self, key):
        value = self.data.get(key, [])
        path = f"{self.path}.{key}"
        if not isinstance(value, list):
            raise InvalidValue("expected a list", path)
        return [_Reader(v, f"{path}[{i}]") for i, v in enumerate(value)]

    def string(self, key, default=None, required=True):
        value = self.data.get(key, default)
        if value is None and not required:
            return None
        if not isinstance(value, str) or not value:
            raise InvalidValue(f"{key} must be a non-empty string", f"{self.path}.{key}")
        return value

    def number(self, key, default=None):
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise InvalidValue(f"{key} must be a number", f"{self.path}.{key}")
        return float(value)

    def integer(self, key, default=None):
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidValue(f"{key} must be an integer", f"{self.path}.{key}")
        return value


def _parse_ref(ref, path, scopes):
    if not isinstance(ref, str):
        raise InvalidValue("reference must be a string", path)
    if ref == "hand":
        if "hand" not in scopes:
            raise InvalidValue("'hand' is not allowed here", path)
        return ref
    scope, _, name = ref.partition(":")
    if scope not in scopes or not name:
        raise InvalidValue(f"bad reference {ref!r}; expected one of {', '.join(s + ':<name>' for s in scopes)}", path)
    return ref


def parse_predicate(raw, path="$") -> Predicate:
    if not isinstance(raw, list):
        raise InvalidValue("predicate must be a list of [ref, op, value] comparisons", path)
    out = []
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        if not isinstance(item, list) or len(item) != 3:
            raise InvalidValue("comparison must be [ref, op, value]", p)
        ref, op, value = item
        ref = _parse_ref(ref, p, PREDICATE_SCOPES)
        if op not in COMPARISON_OPS:
            raise InvalidValue(f"unknown operator {op!r}", p)
        if op in ("in", "not_in"):
            if not isinstance(value, list):
                raise InvalidValue(f"{op} needs a list value", p)
            value = tuple(value)
        elif isinstance(value, (list, dict)):
            raise InvalidValue("comparison value must be a scalar", p)
        out.append(Comparison(ref, op, value))
    return tuple(out)


def parse_effect(raw, path="$") -> Effect:
    if not isinstance(raw, dict):
        raise InvalidValue("effect must be an object", path)
    if "set" in raw:
        _Reader(raw, path).obj({"set", "to"}, ("set", "to"))
        ref = _parse_ref(raw["set"], f"{path}.set", tuple(REF_SCOPES))
        value = raw["to"]
        if isinstance(value, (list, dict)) or value is None:
            raise InvalidValue("effect value must be a scalar", f"{path}.to")
        op = "set"
    elif "add" in raw:
        _Reader(raw, path).obj({"add", "by"}, ("add", "by"))
        ref = _parse_ref(raw["add"], f"{path}.add", ("param",))
        value = raw["by"]
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidValue("add needs an integer 'by'", f"{path}.by")
        op = "add"
    elif "cycle" in raw:
        _Reader(raw, path).obj({"cycle"}, ("cycle",))
        ref = _parse_ref(raw["cycle"], f"{path}.cycle", ("param",))
        value, op = None, "cycle"
    else:
        raise InvalidValue("effect needs one of 'set', 'add', 'cycle'", path)
    scope, _, name = ref.partition(":")
    return Effect(REF_SCOPES[scope], name, value, op)


def _effects(reader, key):
    return tuple(parse_effect(r.data, r.path) for r in reader.items(key))


def _parse_joint(r: _Reader) -> JointSpec:
    r.obj({"kind", "limits", "rest", "detents", "continuous"}, ("kind",))
    kind = r.get("kind")
    if kind not in JOINT_KINDS:
        raise InvalidValue(f"joint kind must be one of {JOINT_KINDS}", f"{r.path}.kind")
    if kind == "fixed":
        for key in ("limits", "detents", "rest", "continuous"):
            if r.has(key):
                raise InvalidValue(f"fixed joints take no {key}", f"{r.path}.{key}")
        return JointSpec("fixed")
    limits = r.get("limits")
    if not (isinstance(limits, list) and len(limits) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in limits)):
        raise InvalidValue("limits must be [lo, hi]", f"{r.path}.limits")
    lo, hi = float(limits[0]), float(limits[1])
    if not lo < hi:
        raise InvalidValue("limits need lo < hi", f"{r.path}.limits")
    rest = r.number("rest", lo)
    if not lo <= rest <= hi:
        raise InvalidValue("rest must lie within limits", f"{r.path}.rest")
    detents = r.get("detents", [])
    if not isinstance(detents, list) or any(isinstance(d, bool) or not isinstance(d, (int, float)) for d in detents):
        raise InvalidValue("detents must be a list of numbers", f"{r.path}.detents")
    detents = tuple(float(d) for d in detents)
    if any(b <= a for a, b in zip(detents, detents[1:])):
        raise InvalidValue("detents must be strictly increasing", f"{r.path}.detents")
    if any(not lo <= d <= hi for d in detents):
        raise InvalidValue("detents must lie within limits", f"{r.path}.detents")
    continuous = r.get("continuous", False)
    if not isinstance(continuous, bool):
        raise InvalidValue("continuous must be a boolean", f"{r.path}.continuous")
    if continuous and kind != "revolute":
        raise InvalidValue("only revolute joints can be continuous", f"{r.path}.continuous")
    return JointSpec(kind, (lo, hi), rest, detents, continuous)


_MECH_FIELDS = {
    "inner_spring": {"return_ticks", "latch_param"},
    "magnetic_attraction": {"hold"},
    "mechanical_trigger": {"on", "target", "state", "guard", "effects"},
    "knob_countdown": {"ticks_per_detent", "on_zero", "active_when"},
    "safety_lock": {"unlocked_when", "blocks"},
    "screen_display": {"fields"},
    "touch_sensing": {"effects"},
    "illumination": {"on_when"},
    "logo_indicator": {"mode_when"},
    "rotary_motor": {"joint", "rate", "on_when"},
}


def _parse_mechanism(r: _Reader, part: str):
    kind = r.data.get("kind") if isinstance(r.data, dict) else None
    if kind not in _MECH_FIELDS:
        raise InvalidValue(f"unknown mechanism kind {kind!r}", f"{r.path}.kind")
    r.obj(_MECH_FIELDS[kind] | {"kind"})

    def pred(key, default=()):
        if not r.has(key):
            return default
        return parse_predicate(r.get(key), f"{r.path}.{key}")

    if kind == "inner_spring":
        ticks = r.integer("return_ticks", 1)
        if ticks < 1:
            raise InvalidValue("return_ticks must be >= 1", f"{r.path}.return_ticks")
        return InnerSpring(part=part, return_ticks=ticks, latch_param=r.string("latch_param", required=False))
    if kind == "magnetic_attraction":
        return MagneticAttraction(part=part, hold=pred("hold"))
    if kind == "mechanical_trigger":
        on = r.string("on", "Press")
        if on not in ACTION_KINDS and not (on.startswith("entered:") and len(on) > 8):
            raise InvalidValue("'on' must be an action kind or 'entered:<label>'", f"{r.path}.on")
        target = r.string("target", required=False)
        state = r.string("state", required=False)
        if (target is None) != (state is None):
            raise InvalidValue("'target' and 'state' go together", r.path)
        return MechanicalTrigger(part=part, on=on, target=target, state=state, guard=pred("guard"), effects=_effects(r, "effects"))
    if kind == "knob_countdown":
        tpd = r.integer("ticks_per_detent", 1)
        if tpd < 1:
            raise InvalidValue("ticks_per_detent must be >= 1", f"{r.path}.ticks_per_detent")
        return KnobCountdown(part=part, ticks_per_detent=tpd, on_zero=_effects(r, "on_zero"), active_when=pred("active_when"))
    if kind == "safety_lock":
        blocks = r.get("blocks", [])
        if not isinstance(blocks, list) or not blocks or any(b not in ACTION_KINDS for b in blocks):
            raise InvalidValue("blocks must be a non-empty list of action kinds", f"{r.path}.blocks")
        return SafetyLock(part=part, unlocked_when=pred("unlocked_when"), blocks=tuple(blocks))
    if kind == "screen_display":
        fields = []
        for fr in r.items("fields"):
            if isinstance(fr.data, str):
                fields.append(ScreenField(fr.data, f"param:{fr.data}"))
                continue
            fr.obj({"field", "source", "format"}, ("field",))
            src = fr.get("source")
            if src is not None:
                src = _parse_ref(src, f"{fr.path}.source", ("param", "part"))
            fmt = fr.get("format", "{}")
            if not isinstance(fmt, str):
                raise InvalidValue("format must be a string", f"{fr.path}.format")
            fields.append(ScreenField(fr.string("field"), src, fmt))
        return ScreenDisplay(part=part, fields=tuple(fields))
    if kind == "touch_sensing":
        return TouchSensing(part=part, effects=_effects(r, "effects"))
    if kind == "illumination":
        return Illumination(part=part, on_when=pred("on_when", None))
    if kind == "logo_indicator":
        modes = []
        for mr in r.items("mode_when"):
            mr.obj({"when", "mode"}, ("when", "mode"))
            mode = mr.get("mode")
            if mode not in INDICATOR_MODES:
                raise InvalidValue(f"mode must be one of {INDICATOR_MODES}", f"{mr.path}.mode")
            modes.append(IndicatorMode(parse_predicate(mr.get("when"), f"{mr.path}.when"), mode))
        return LogoIndicator(part=part, mode_when=tuple(modes))
    # rotary_motor
    rate = r.number("rate", 1.0)
    if rate <= 0:
        raise InvalidValue("rate must be > 0", f"{r.path}.rate")
    return RotaryMotor(part=part, joint=r.string("joint", part), rate=rate, on_when=pred("on_when", None))


def _parse_part(r: _Reader) -> PartSpec:
    r.obj({"name", "joint", "state_labels", "panel_rect", "mechanisms", "actions", "max_presses"}, ("name", "joint", "panel_rect"))
    name = r.string("name")
    joint = _parse_joint(r.sub("joint"))
    raw_labels = r.get("state_labels", {})
    if not isinstance(raw_labels, dict):
        raise InvalidValue("state_labels must map positions to labels", f"{r.path}.state_labels")
    labels = []
    for key, lab in raw_labels.items():
        lp = f"{r.path}.state_labels.{key}"
        try:
            pos = float(key)
        except ValueError:
            raise InvalidValue("state label keys must be numeric joint positions", lp) from None
        if not isinstance(lab, str) or not lab:
            raise InvalidValue("labels must be non-empty strings", lp)
        labels.append((pos, lab))
    labels.sort()
    rect = r.get("panel_rect")
    if not (isinstance(rect, list) and len(rect) == 4):
        raise InvalidValue("panel_rect must be [x1, y1, x2, y2]", f"{r.path}.panel_rect")
    try:
        box = BoundingBox(*rect)
    except Exception as exc:
        raise InvalidValue(str(exc), f"{r.path}.panel_rect") from None
    actions = r.get("actions")
    if actions is None:
        actions = [a for a in JOINT_ACTIONS[joint.kind] if a != "Pour"]
    if not isinstance(actions, list) or any(a not in ACTION_KINDS for a in actions):
        raise InvalidValue("actions must be a list of action kinds", f"{r.path}.actions")
    max_presses = r.integer("max_presses", 1)
    if max_presses < 1:
        raise InvalidValue("max_presses must be >= 1", f"{r.path}.max_presses")
    mechs = tuple(_parse_mechanism(m, name) for m in r.items("mechanisms"))
    return PartSpec(name, joint, box, tuple(labels), mechs, tuple(actions), max_presses)


def _parse_parameter(r: _Reader) -> SettingParameter:
    r.obj({"name", "domain", "initial", "unit"}, ("name", "domain", "initial"))
    d = r.sub("domain").obj({"labels", "range"})
    if d.has("labels") == d.has("range"):
        raise InvalidValue("domain needs exactly one of 'labels' or 'range'", d.path)
    unit = r.get("unit", "")
    if not isinstance(unit, str):
        raise InvalidValue("unit must be a string", f"{r.path}.unit")
    if d.has("labels"):
        labels = d.get("labels")
        if not isinstance(labels, list) or not labels or any(not isinstance(x, str) or not x for x in labels):
            raise InvalidValue("labels must be a non-empty list of strings", f"{d.path}.labels")
        if len(set(labels)) != len(labels):
            raise DuplicateName("duplicate label in domain", f"{d.path}.labels")
        param = SettingParameter(r.string("name"), r.get("initial"), labels=tuple(labels), unit=unit)
    else:
        rng = d.get("range")
        if not (isinstance(rng, list) and len(rng) == 3 and all(isinstance(v, int) and not isinstance(v, bool) for v in rng)):
            raise InvalidValue("range must be [min, max, step] integers", f"{d.path}.range")
        lo, hi, step = rng
        if step < 1 or lo > hi:
            raise InvalidValue("range needs min <= max and step >= 1", f"{d.path}.range")
        param = SettingParameter(r.string("name"), r.get("initial"), range=(lo, hi, step), unit=unit)
    if not param.contains(param.initial):
        raise InvalidValue(f"initial value {param.initial!r} is outside the domain", f"{r.path}.initial")
    return param


def _parse_rule(r: _Reader) -> LogicRule:
    r.obj({"id", "priority", "when", "then"}, ("id", "when", "then"))
    when = parse_predicate(r.get("when"), f"{r.path}.when")
    then = _effects(r, "then")
    if not then:
        raise InvalidValue("rule needs at least one effect", f"{r.path}.then")
    return LogicRule(r.string("id"), when, then, r.integer("priority", 0))


def _parse_object(r: _Reader) -> ObjectSpec:
    if isinstance(r.data, str):
        return ObjectSpec(r.data, ("outside",), "outside")
    r.obj({"name", "positions", "initial", "access"}, ("name", "positions"))
    positions = r.get("positions")
    if not isinstance(positions, list) or not positions or any(not isinstance(p, str) or not p for p in positions):
        raise InvalidValue("positions must be a non-empty list of strings", f"{r.path}.positions")
    if len(set(positions)) != len(positions):
        raise DuplicateName("duplicate position", f"{r.path}.positions")
    initial = r.string("initial", positions[0])
    if initial not in positions:
        raise InvalidValue("initial must be one of positions", f"{r.path}.initial")
    access_raw = r.get("access", {})
    if not isinstance(access_raw, dict):
        raise InvalidValue("access must map positions to predicates", f"{r.path}.access")
    access = []
    for pos, pred in access_raw.items():
        if pos not in positions:
            raise UnresolvedReference(f"access names unknown position {pos!r}", f"{r.path}.access.{pos}")
        access.append((pos, parse_predicate(pred, f"{r.path}.access.{pos}")))
    return ObjectSpec(r.string("name"), tuple(positions), initial, tuple(access))


TOP_LEVEL_KEYS = ("id", "category", "panel", "parts", "parameters", "rules", "objects")


def spec_from_json(data, categories=CATEGORIES) -> ApplianceSpec:
    r = _Reader(data).obj(set(TOP_LEVEL_KEYS), TOP_LEVEL_KEYS)
    category = r.string("category")
    if category not in categories:
        raise InvalidValue(f"unknown category {category!r}", "$.category")
    panel = r.sub("panel").obj({"width", "height"}, ("width", "height"))
    width, height = panel.number("width"), panel.number("height")
    if width <= 0 or height <= 0:
        raise InvalidValue("panel dimensions must be positive", "$.panel")

    def unique(readers, what, parse):
        seen, out = set(), []
        for item in readers:
            obj = parse(item)
            key = obj.id if hasattr(obj, "id") else obj.name
            if key in seen:
                raise DuplicateName(f"duplicate {what} {key!r}", item.path)
            seen.add(key)
            out.append(obj)
        return tuple(out)

    parts = unique(r.items("parts"), "part", _parse_part)
    if not parts:
        raise InvalidValue("an appliance needs at least one part", "$.parts")
    params = unique(r.items("parameters"), "parameter", _parse_parameter)
    rules = unique(r.items("rules"), "rule id", _parse_rule)
    objects = unique(r.items("objects"), "object", _parse_object)
    spec = ApplianceSpec(r.string("id"), category, width, height, parts, params, rules, objects)
    for path, message in reference_problems(spec):
        raise UnresolvedReference(message, path)
    return spec


def load_spec(text: str | bytes, categories=CATEGORIES) -> ApplianceSpec:
    """Parse a spec document. Structural problems raise a SpecError subclass."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return spec_from_json(data, categories)


def load_spec_file(path, categories=CATEGORIES) -> ApplianceSpec:
    with open(path, encoding="utf-8") as fh:
        return load_spec(fh.read(), categories)


# --- reference resolution -----------------------------------------------------


def check_predicate(spec: ApplianceSpec, pred: Predicate, path: str):
    for i, c in enumerate(pred):
        p = f"{path}[{i}]"
        if c.ref == "hand":
            ok = (spec.object_map.keys() | {"none"})
            vals = c.value if c.op in ("in", "not_in") else (c.value,)
            if c.op in ORDERING_OPS:
                yield p, "ordering comparison on 'hand'"
            for v in vals:
                if v not in ok:
                    yield p, f"'hand' compared with unknown object {v!r}"
            continue
        scope, name = c.scope, c.name
        vals = c.value if c.op in ("in", "not_in") else (c.value,)
        if scope == "param":
            param = spec.param_map.get(name)
            if param is None:
                yield p, f"unknown parameter {name!r}"
                continue
            if c.op in ORDERING_OPS and param.is_enum:
                yield p, f"ordering comparison on enumerated parameter {name!r}"
            for v in vals:
                if not param.contains(v) and not (c.op in ORDERING_OPS and isinstance(v, int) and not isinstance(v, bool)):
                    yield p, f"value {v!r} is outside the domain of {name!r}"
        elif scope == "part":
            part = spec.part_map.get(name)
            if part is None:
                yield p, f"unknown part {name!r}"
                continue
            if c.op in ORDERING_OPS:
                yield p, "ordering comparison on a part label"
            for v in vals:
                if v not in part.labels:
                    yield p, f"part {name!r} has no state label {v!r}"
        elif scope == "obj":
            obj = spec.object_map.get(name)
            if obj is None:
                yield p, f"unknown object {name!r}"
                continue
            if c.op in ORDERING_OPS:
                yield p, "ordering comparison on an object position"
            for v in vals:
                if v not in obj.positions:
                    yield p, f"object {name!r} has no position {v!r}"


def check_effect(spec: ApplianceSpec, eff: Effect, path: str):
    t, name, v = eff.target, eff.name, eff.value
    if t == "parameter":
        param = spec.param_map.get(name)
        if param is None:
            yield path, f"unknown parameter {name!r}"
        elif eff.op == "set" and not param.contains(v):
            yield path, f"value {v!r} is outside the domain of {name!r}"
        elif eff.op == "add" and param.is_enum:
            yield path, f"'add' on enumerated parameter {name!r}"
    elif t == "part_state":
        part = spec.part_map.get(name)
        if part is None:
            yield path, f"unknown part {name!r}"
        elif v not in part.labels:
            yield path, f"part {name!r} has no state label {v!r}"
    elif t == "object":
        obj = spec.object_map.get(name)
        if obj is None:
            yield path, f"unknown object {name!r}"
        elif v not in obj.positions:
            yield path, f"object {name!r} has no position {v!r}"
    elif t == "screen_field":
        if name not in spec.screen_fields:
            yield path, f"unknown screen field {name!r}"
        elif not isinstance(v, str):
            yield path, "screen text must be a string"
    else:
        kind, allowed = {
            "indicator": ("logo_indicator", INDICATOR_MODES),
            "light": ("illumination", LIGHT_STATES),
            "motor": ("rotary_motor", MOTOR_STATES),
        }[t]
        part = spec.part_map.get(name)
        if part is None:
            yield path, f"unknown part {name!r}"
        elif part.mechanism(kind) is None:
            yield path, f"part {name!r} has no {kind} mechanism"
        elif v not in allowed:
            yield path, f"{t} value must be one of {allowed}"


def reference_problems(spec: ApplianceSpec):
    """Yield (path, message) for every name that fails to resolve."""
    for i, part in enumerate(spec.parts):
        pp = f"$.parts[{i}]"
        for j, m in enumerate(part.mechanisms):
            mp = f"{pp}.mechanisms[{j}]"
            for key in ("hold", "guard", "active_when", "unlocked_when", "on_when"):
                pred = getattr(m, key, None)
                if pred:
                    yield from check_predicate(spec, pred, f"{mp}.{key}")
            for key in ("effects", "on_zero"):
                for k, eff in enumerate(getattr(m, key, ()) or ()):
                    yield from check_effect(spec, eff, f"{mp}.{key}[{k}]")
            if m.kind == "mechanical_trigger":
                if m.target is not None:
                    yield from check_effect(spec, Effect("part_state", m.target, m.state), f"{mp}.target")
                label = m.entered_label
                if label is not None and label not in part.labels:
                    yield f"{mp}.on", f"part {part.name!r} has no state label {label!r}"
            elif m.kind == "inner_spring" and m.latch_param is not None and m.latch_param not in spec.param_map:
                yield f"{mp}.latch_param", f"unknown parameter {m.latch_param!r}"
            elif m.kind == "rotary_motor" and m.joint not in spec.part_map:
                yield f"{mp}.joint", f"unknown part {m.joint!r}"
            elif m.kind == "logo_indicator":
                for k, mode in enumerate(m.mode_when):
                    yield from check_predicate(spec, mode.when, f"{mp}.mode_when[{k}].when")
            elif m.kind == "screen_display":
                for k, f in enumerate(m.fields):
                    if f.source is None:
                        continue
                    scope, _, name = f.source.partition(":")
                    table = spec.param_map if scope == "param" else spec.part_map
                    if name not in table:
                        yield f"{mp}.fields[{k}].source", f"unknown {'parameter' if scope == 'param' else 'part'} {name!r}"
    for i, rule in enumerate(spec.rules):
        yield from check_predicate(spec, rule.when, f"$.rules[{i}].when")
        for k, eff in enumerate(rule.then):
            yield from check_effect(spec, eff, f"$.rules[{i}].then[{k}]")
    for i, obj in enumerate(spec.objects):
        for pos, pred in obj.access:
            yield from check_predicate(spec, pred, f"$.objects[{i}].access.{pos}")
