"""Exhaustive state-graph construction and shortest-plan search.

Edges come from a candidate-action generator (every compatible action per
part, rotations to detents only, presses ``1..max_presses``); successors are
computed by running the real session code, so the graph is an oracle for
everything the simulator does.

Parts nobody can observe (no rotation, not named by any predicate, screen
source or goal) are *inert*: their joint position never changes what happens
next, so search may drop it from the node identity to keep graphs small.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

from .actions import ACTION_KINDS, AtomicAction, Plan, format_action, make
from .errors import ExecutorError, StateSpaceExceeded, UnreachableGoal
from .session import Session, _copy_state, restore
from .spec import POSITION_EPS, ApplianceSpec

_KIND_ORDER = {k: i for i, k in enumerate(ACTION_KINDS)}


@dataclass(frozen=True)
class SearchLimits:
    max_nodes: int = 50_000
    max_ticks_per_edge: int = 0

    def __post_init__(self):
        if self.max_nodes < 1 or self.max_ticks_per_edge < 0:
            raise ValueError("max_nodes must be >= 1 and max_ticks_per_edge >= 0")


DEFAULT_LIMITS = SearchLimits()


def action_sort_key(spec: ApplianceSpec, action: AtomicAction) -> tuple:
    """Canonical order: kind, then part/object declaration order, then numbers, then labels."""
    names, numbers, labels = [], [], []
    for value in action.args:
        if isinstance(value, str):
            if value in spec.part_index:
                names.append(spec.part_index[value])
            elif value in spec.object_index:
                names.append(spec.object_index[value])
            else:
                labels.append(value)
        else:
            numbers.append(value)
    return (_KIND_ORDER[action.kind], tuple(names), tuple(numbers), tuple(labels))


def candidate_actions(spec: ApplianceSpec, session: Session) -> list[AtomicAction]:
    """Every action worth trying from the session's state, canonically sorted."""
    out = []
    joints = session._s["joints"]
    for part in spec.parts:
        allowed = part.actions
        rest = part.joint.rest
        for kind in allowed:
            if kind == "Press":
                for pos, label in part.state_labels:
                    if abs(pos - rest) > POSITION_EPS:
                        out.extend(make("Press", part.name, label, n) for n in range(1, part.max_presses + 1))
            elif kind == "Touch":
                out.extend(make("Touch", part.name, n) for n in range(1, part.max_presses + 1))
            elif kind == "Rotate":
                joint = part.joint
                targets = joint.detents or sorted({joint.lo, joint.rest, joint.hi})
                current = joints[part.name]
                for t in targets:
                    label = part.label_at(t)
                    if label is None or abs(t - current) <= POSITION_EPS:
                        continue
                    out.append(make("Rotate", part.name, label, round(t - current, 6)))
            elif kind in ("Open", "Close"):
                if part.position_of("open" if kind == "Open" else "closed") is not None:
                    out.append(make(kind, part.name))
            elif kind in ("Slide", "Flip"):
                out.extend(make(kind, part.name, label) for label in part.labels)
            elif kind in ("Pull", "Push"):
                out.append(make(kind, part.name))
    held = session._s["held_object"]
    pour_parts = [p for p in spec.parts if "Pour" in p.actions]
    for obj in spec.objects:
        if held is None:
            out.append(make("Pick", obj.name))
        elif held == obj.name:
            here = session._s["objects"][obj.name]
            out.append(make("Place", obj.name))
            out.extend(make("Move", obj.name, here, p) for p in obj.positions if p != here)
            out.extend(make("Pour", obj.name, p.name) for p in pour_parts)
    out.sort(key=lambda a: action_sort_key(spec, a))
    return out


def _predicate_parts(pred):
    return {c.name for c in pred or () if c.scope == "part"}


def referenced_parts(spec: ApplianceSpec) -> set[str]:
    """Parts whose label some predicate or screen field can read."""
    seen = set()
    for part in spec.parts:
        for m in part.mechanisms:
            for key in ("hold", "guard", "active_when", "unlocked_when", "on_when"):
                seen |= _predicate_parts(getattr(m, key, None))
            if m.kind == "logo_indicator":
                for mode in m.mode_when:
                    seen |= _predicate_parts(mode.when)
            elif m.kind == "screen_display":
                seen |= {f.source[5:] for f in m.fields if f.source and f.source.startswith("part:")}
    for rule in spec.rules:
        seen |= _predicate_parts(rule.when)
    for obj in spec.objects:
        for _, pred in obj.access:
            seen |= _predicate_parts(pred)
    return seen


def inert_parts(spec: ApplianceSpec, goal=(), limits: SearchLimits = DEFAULT_LIMITS) -> frozenset:
    if limits.max_ticks_per_edge:
        return frozenset()
    live = referenced_parts(spec) | _predicate_parts(goal)
    return frozenset(p.name for p in spec.parts if "Rotate" not in p.actions and p.name not in live)


def _fork(session: Session) -> Session:
    other = Session.__new__(Session)
    other.spec, other.seed, other.rng = session.spec, session.seed, session.rng
    other.trace = []
    other._set_state(_copy_state(session._s))
    return other


def successor(session: Session, action: AtomicAction, settle_ticks: int = 0) -> Session | None:
    """Run ``action`` on a copy; ``None`` if the executor rejects it."""
    nxt = _fork(session)
    try:
        nxt._perform(action)
        nxt._settle()
        if settle_ticks:
            nxt.step(settle_ticks)
    except ExecutorError:
        return None
    nxt.trace = []
    return nxt


class _Node:
    __slots__ = ("session", "edges")

    def __init__(self, session):
        self.session = session
        self.edges = None  # list of (action, key) once expanded


class SuccessorGraph:
    """Lazily expanded, memoized successor relation over canonical state keys."""

    def __init__(self, spec: ApplianceSpec, ignore: frozenset, settle_ticks: int = 0):
        self.spec = spec
        self.ignore = ignore
        self.settle_ticks = settle_ticks
        self.nodes: dict[tuple, _Node] = {}

    def key(self, session: Session) -> tuple:
        return session.search_key(self.ignore)

    def add(self, session: Session) -> tuple:
        k = self.key(session)
        if k not in self.nodes:
            self.nodes[k] = _Node(_fork(session))
        return k

    def edges(self, k) -> list:
        node = self.nodes[k]
        if node.edges is None:
            out = []
            for action in candidate_actions(self.spec, node.session):
                nxt = successor(node.session, action, self.settle_ticks)
                if nxt is None:
                    continue
                nk = self.key(nxt)
                if nk == k:
                    continue
                if nk not in self.nodes:
                    self.nodes[nk] = _Node(nxt)
                out.append((action, nk))
            node.edges = out
        return node.edges


@lru_cache(maxsize=64)
def successor_graph(spec: ApplianceSpec, ignore: frozenset, settle_ticks: int = 0) -> SuccessorGraph:
    return SuccessorGraph(spec, ignore, settle_ticks)


@dataclass
class StateGraph:
    spec: ApplianceSpec
    keys: list = field(default_factory=list)  # BFS discovery order; index 0 is the start
    edges: list = field(default_factory=list)  # (src index, action, dst index)
    sessions: list = field(default_factory=list)

    @property
    def start(self) -> int:
        return 0

    @property
    def nodes(self) -> list[str]:
        """Canonical serialized states, in discovery order."""
        return [canonical_state(s) for s in self.sessions]

    def successors(self, i) -> dict:
        return {format_action(a): j for src, a, j in self.edges if src == i}


def canonical_state(session: Session) -> str:
    snap = session.snapshot()
    for key in ("tick", "rng", "pressed_counts", "spec_id"):
        snap.pop(key)
    return json.dumps(snap, ensure_ascii=False, separators=(",", ":"))


def enumerate_states(
    spec: ApplianceSpec,
    limits: SearchLimits = DEFAULT_LIMITS,
    start: Session | None = None,
    *,
    project: bool = False,
) -> StateGraph:
    """Breadth-first enumeration of every state reachable from ``start``.

    With ``project=True`` inert parts are left out of node identity.
    """
    if start is None:
        start = Session(spec, 0)
    ignore = inert_parts(spec, (), limits) if project else frozenset()
    memo = successor_graph(spec, ignore, limits.max_ticks_per_edge)
    first = memo.add(start)
    index = {first: 0}
    graph = StateGraph(spec, [first], [], [memo.nodes[first].session])
    queue = deque([first])
    while queue:
        k = queue.popleft()
        for action, nk in memo.edges(k):
            if nk not in index:
                if len(index) >= limits.max_nodes:
                    raise StateSpaceExceeded(f"{spec.id}: more than {limits.max_nodes} states")
                index[nk] = len(graph.keys)
                graph.keys.append(nk)
                graph.sessions.append(memo.nodes[nk].session)
                queue.append(nk)
            graph.edges.append((index[k], action, index[nk]))
    return graph


# --- shortest plans -----------------------------------------------------------


@dataclass(frozen=True)
class SearchResult:
    depth: int
    first_actions: tuple[AtomicAction, ...]
    plan: tuple[AtomicAction, ...]


def _search(spec, start: Session, goal, limits: SearchLimits) -> SearchResult:
    memo = successor_graph(spec, inert_parts(spec, goal, limits), limits.max_ticks_per_edge)
    root = memo.add(start)
    if start.satisfies(goal):
        return SearchResult(0, (), ())
    dist = {root: 0}
    layers = [[root]]
    found = []
    while not found:
        frontier = []
        for k in layers[-1]:
            for _, nk in memo.edges(k):
                if nk in dist:
                    continue
                if len(dist) >= limits.max_nodes:
                    raise StateSpaceExceeded(f"{spec.id}: more than {limits.max_nodes} states searched")
                dist[nk] = len(layers)
                frontier.append(nk)
                if memo.nodes[nk].session.satisfies(goal):
                    found.append(nk)
        if not frontier:
            raise UnreachableGoal(f"{spec.id}: goal is unreachable from this state")
        layers.append(frontier)
    depth = len(layers) - 1
    good = [set() for _ in layers]
    good[depth] = set(found)
    for i in range(depth - 1, -1, -1):
        good[i] = {k for k in layers[i] if any(nk in good[i + 1] for _, nk in memo.edges(k))}
    firsts = tuple(a for a, nk in memo.edges(root) if nk in good[1])
    plan, k = [], root
    for i in range(depth):
        action, k = next((a, nk) for a, nk in memo.edges(k) if nk in good[i + 1])
        plan.append(action)
    return SearchResult(depth, firsts, tuple(plan))


def shortest_plan(spec, start: Session, goal, limits: SearchLimits = DEFAULT_LIMITS) -> SearchResult:
    return _search(spec, start, goal, limits)


def first_actions(spec, start: Session, goal, limits: SearchLimits = DEFAULT_LIMITS) -> tuple[AtomicAction, ...]:
    """First steps of every minimal plan from ``start`` to ``goal``, canonically sorted."""
    return _search(spec, start, goal, limits).first_actions


def oracle_plan(spec, initial, goal, limits: SearchLimits = DEFAULT_LIMITS) -> Plan:
    """Shortest plan with canonical tie-breaking; ``initial`` is a Session or a snapshot."""
    start = initial if isinstance(initial, Session) else restore(spec, initial)
    return Plan(shortest_plan(spec, start, goal, limits).plan)
