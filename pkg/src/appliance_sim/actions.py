"""The atomic action vocabulary and its one-line textual grammar.

Every plan step, trace entry and planner reply is an :class:`AtomicAction`
written as ``Kind(arg1, arg2, ...)``::

    >>> a = parse_action('Rotate(timer_knob, "3", 108)')
    >>> a.kind, a.args
    ('Rotate', ('timer_knob', '3', 108.0))
    >>> format_action(a)
    'Rotate(timer_knob, "3", 108.0)'

The 13 kinds and their signatures:

=========  ==========================================  ==========
kind       arguments                                   acts on
=========  ==========================================  ==========
Press      part_name, target_state, press_times        prismatic
Rotate     part_name, target_state, rotate_degrees     revolute
Open       target_part                                 revolute/prismatic
Close      target_part                                 revolute/prismatic
Touch      part_name, touch_times                      fixed
Slide      part_name, target_state                     prismatic
Flip       part_name, target_state                     revolute
Pull       part_name                                   prismatic
Push       part_name                                   prismatic
Pick       obj_name                                    object
Place      obj_name                                    object
Move       obj_name, start_pos, end_pos                object
Pour       obj_name, target_part                       object -> part
=========  ==========================================  ==========
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable

from .errors import (
    ActionParseError,
    ActionSyntaxError,
    ArgTypeError,
    ArityError,
    PlanParseError,
    UnknownActionKind,
)

# Argument type tags: "name" = identifier-like string, "label" = state label
# (always quoted when formatted), "count" = positive int, "degrees" = float.
SIGNATURES: dict[str, tuple[tuple[str, str], ...]] = {
    "Press": (("part_name", "name"), ("target_state", "label"), ("press_times", "count")),
    "Rotate": (("part_name", "name"), ("target_state", "label"), ("rotate_degrees", "degrees")),
    "Open": (("target_part", "name"),),
    "Close": (("target_part", "name"),),
    "Touch": (("part_name", "name"), ("touch_times", "count")),
    "Slide": (("part_name", "name"), ("target_state", "label")),
    "Flip": (("part_name", "name"), ("target_state", "label")),
    "Pull": (("part_name", "name"),),
    "Push": (("part_name", "name"),),
    "Pick": (("obj_name", "name"),),
    "Place": (("obj_name", "name"),),
    "Move": (("obj_name", "name"), ("start_pos", "name"), ("end_pos", "name")),
    "Pour": (("obj_name", "name"), ("target_part", "name")),
}

ACTION_KINDS: tuple[str, ...] = tuple(SIGNATURES)
APPLIANCE_KINDS = ACTION_KINDS[:9]
OBJECT_KINDS = ACTION_KINDS[9:]

DEGREE_TOLERANCE = 1e-6

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")


@dataclass(frozen=True)
class AtomicAction:
    kind: str
    args: tuple

    def __post_init__(self):
        if self.kind not in SIGNATURES:
            raise UnknownActionKind(f"unknown action kind {self.kind!r}")
        sig = SIGNATURES[self.kind]
        if len(self.args) != len(sig):
            raise ArityError(f"{self.kind} takes {len(sig)} arguments, got {len(self.args)}")
        object.__setattr__(self, "args", tuple(_coerce(self.kind, sig, self.args)))

    @property
    def part(self) -> str | None:
        """The appliance part this action touches, if any."""
        if self.kind in APPLIANCE_KINDS:
            return self.args[0]
        if self.kind == "Pour":
            return self.args[1]
        return None

    @property
    def obj(self) -> str | None:
        return self.args[0] if self.kind in OBJECT_KINDS else None

    @property
    def target_state(self) -> str | None:
        if self.kind in ("Press", "Rotate", "Slide", "Flip"):
            return self.args[1]
        return None

    @property
    def repeats(self) -> int:
        """press_times / touch_times, 1 for every other kind."""
        if self.kind == "Press":
            return self.args[2]
        if self.kind == "Touch":
            return self.args[1]
        return 1

    def __str__(self):
        return format_action(self)


def _coerce(kind, sig, args):
    for (name, tag), value in zip(sig, args):
        if tag in ("name", "label"):
            if not isinstance(value, str) or not value:
                raise ArgTypeError(f"{kind}.{name} must be a non-empty string, got {value!r}")
            yield value
        elif tag == "count":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ArgTypeError(f"{kind}.{name} must be an integer, got {value!r}")
            if value < 1:
                raise ArgTypeError(f"{kind}.{name} must be >= 1, got {value}")
            yield value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ArgTypeError(f"{kind}.{name} must be a number, got {value!r}")
            value = float(value)
            if not math.isfinite(value):
                raise ArgTypeError(f"{kind}.{name} must be finite")
            yield value


def make(kind: str, *args) -> AtomicAction:
    return AtomicAction(kind, tuple(args))


# --- tokenizer ----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(?![A-Za-z_])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<punct>[(),])
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


def _tokens(line: str):
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if m is None:
            raise ActionSyntaxError(f"unexpected character {line[pos]!r} at column {pos + 1}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        yield kind, m.group(), m.start()


def _unquote(text: str) -> str:
    out = []
    body = text[1:-1]
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ActionSyntaxError(f"unsupported escape \\{nxt}")
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _as_text(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ActionSyntaxError(f"input is not valid UTF-8: {exc.reason}") from None
    if not isinstance(text, str):
        raise ActionSyntaxError(f"expected text, got {type(text).__name__}")
    return text


def parse_action(text: str | bytes) -> AtomicAction:
    """Parse one ``Kind(args...)`` line.

    Raises a subclass of :class:`ActionParseError` for anything that is not a
    valid action; no other exception escapes, whatever the input.
    """
    text = _as_text(text)
    toks = list(_tokens(text))
    if not toks:
        raise ActionSyntaxError("empty action")
    if toks[0][0] != "ident":
        raise ActionSyntaxError("action must start with its kind name")
    kind = toks[0][1]
    if len(toks) < 2 or toks[1][1] != "(":
        raise ActionSyntaxError(f"expected '(' after {kind}")
    if toks[-1][1] != ")":
        raise ActionSyntaxError("missing closing ')'")

    raw_args = []
    inner = toks[2:-1]
    if inner:
        expect_value = True
        for tok_kind, value, col in inner:
            if expect_value:
                if tok_kind == "punct":
                    raise ActionSyntaxError(f"expected an argument at column {col + 1}")
                raw_args.append((tok_kind, value))
            elif value != ",":
                raise ActionSyntaxError(f"expected ',' at column {col + 1}")
            expect_value = not expect_value
        if expect_value:
            raise ActionSyntaxError("trailing ','")

    if kind not in SIGNATURES:
        raise UnknownActionKind(f"unknown action kind {kind!r}")
    sig = SIGNATURES[kind]
    if len(raw_args) != len(sig):
        raise ArityError(f"{kind} takes {len(sig)} arguments ({', '.join(n for n, _ in sig)}), got {len(raw_args)}")

    args = []
    for (name, tag), (tok_kind, value) in zip(sig, raw_args):
        if tag in ("name", "label"):
            if tok_kind == "str":
                args.append(_unquote(value))
            elif tok_kind == "ident":
                args.append(value)
            else:
                raise ArgTypeError(f"{kind}.{name} expects a name or quoted string, got {value}")
        elif tag == "count":
            if tok_kind != "num" or not re.fullmatch(r"[-+]?\d+", value):
                raise ArgTypeError(f"{kind}.{name} expects an integer, got {value}")
            args.append(int(value))
        else:
            if tok_kind != "num":
                raise ArgTypeError(f"{kind}.{name} expects a number, got {value}")
            try:
                args.append(float(value))
            except (ValueError, OverflowError):
                raise ArgTypeError(f"{kind}.{name}: bad number {value}") from None
    try:
        return AtomicAction(kind, tuple(args))
    except ActionParseError:
        raise
    except Exception as exc:  # pragma: no cover - defensive; keeps the no-crash guarantee
        raise ActionSyntaxError(str(exc)) from None


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def format_action(action: AtomicAction) -> str:
    parts = []
    for (_, tag), value in zip(SIGNATURES[action.kind], action.args):
        if tag == "name":
            parts.append(value if _IDENT.match(value) else _quote(value))
        elif tag == "label":
            parts.append(_quote(value))
        elif tag == "count":
            parts.append(str(value))
        else:
            parts.append(repr(float(value)))
    return f"{action.kind}({', '.join(parts)})"


def action_equal(a: AtomicAction, b: AtomicAction, tol: float = DEGREE_TOLERANCE) -> bool:
    if a.kind != b.kind:
        return False
    for (_, tag), x, y in zip(SIGNATURES[a.kind], a.args, b.args):
        if tag == "degrees":
            if abs(x - y) > tol:
                return False
        elif x != y:
            return False
    return True


@dataclass(frozen=True)
class Plan:
    steps: tuple[AtomicAction, ...] = ()

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def to_text(self) -> str:
        return "".join(format_action(a) + "\n" for a in self.steps)

    def to_list(self) -> list[str]:
        return [format_action(a) for a in self.steps]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Plan":
        return parse_plan("\n".join(lines))


def parse_plan(text: str | bytes) -> Plan:
    """One action per line; blank lines and ``#`` comment lines are skipped.

    All bad lines are reported together in a :class:`PlanParseError`.
    """
    text = _as_text(text)
    steps, errors = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            steps.append(parse_action(stripped))
        except ActionParseError as exc:
            errors.append((lineno, exc))
    if errors:
        raise PlanParseError(errors)
    return Plan(tuple(steps))
