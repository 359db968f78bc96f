"""Planner endpoints: builtin baselines, external processes, HTTP services,
and offline prediction files.

Every planner answers ``respond(request, ctx)`` with a reply dictionary.
External planners only see the request; builtin ones may also read the
privileged :class:`QueryContext` (spec, episode, live session).
"""

from __future__ import annotations

import hashlib
import json
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..actions import ACTION_KINDS, SIGNATURES, AtomicAction, action_equal, format_action, make
from ..errors import MalformedResponse, PlannerTimeout, PlannerUnavailable
from ..manual import ManualDocument
from ..session import Session
from ..spec import ApplianceSpec
from ..statespace import candidate_actions, first_actions, shortest_plan
from . import protocol
from .episodes import Episode, start_session


@dataclass
class QueryContext:
    spec: ApplianceSpec
    episode: Episode
    manual: ManualDocument
    task: str
    serial: int = 0
    step: int | None = None
    session: Session | None = None


@dataclass(frozen=True)
class PlannerEndpoint:
    transport: str  # "builtin" | "stdio" | "http" | "replay"
    address: str
    timeout: float = 30.0
    retries: int = 0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


class Planner:
    name = "planner"

    def respond(self, request: dict, ctx: QueryContext) -> dict:
        raise NotImplementedError

    def close(self):
        pass


# --- builtin baselines --------------------------------------------------------


def oracle_plan_for(spec: ApplianceSpec, episode: Episode) -> list[AtomicAction]:
    return list(shortest_plan(spec, start_session(spec, episode), episode.goal).plan)


def wrong_action(spec: ApplianceSpec, session: Session, goal, correct: AtomicAction) -> AtomicAction:
    """A plausible action that is not a valid next step from ``session``."""
    valid = first_actions(spec, session, goal)
    for a in candidate_actions(spec, session):
        if not action_equal(a, correct) and not any(action_equal(a, v) for v in valid):
            return a
    return make("Press", "unlisted_part", "pressed", 1)


class OraclePlanner(Planner):
    """Answers from ground truth; scores perfectly by construction."""

    name = "builtin:oracle"

    def __init__(self):
        self._plans = {}
        self._lock = threading.Lock()

    def plan_for(self, ctx) -> list[AtomicAction]:
        key = (ctx.episode.appliance, ctx.episode.id)
        with self._lock:
            cached = self._plans.get(key)
        if cached is None:
            cached = oracle_plan_for(ctx.spec, ctx.episode)
            with self._lock:
                self._plans[key] = cached
        return cached

    def next_action(self, ctx) -> AtomicAction:
        return first_actions(ctx.spec, ctx.session, ctx.episode.goal)[0]

    def respond(self, request, ctx):
        kind, query = request["kind"], request["query"]
        if kind == "retrieve_pages":
            return {"pages": list(ctx.episode.relevant_pages.get(query.get("category"), ()))}
        if kind == "plan":
            return {"plan_text": "".join(format_action(a) + "\n" for a in self.plan_for(ctx))}
        if kind == "ground":
            part = ctx.spec.part_map.get(query.get("part"))
            return {"bbox": part.panel_rect.as_list() if part else []}
        return {"action_text": format_action(self.next_action(ctx))}


class CorruptPlanner(OraclePlanner):
    """The oracle with exactly step ``k`` (1-based) replaced by a wrong action."""

    def __init__(self, k: int):
        super().__init__()
        if k < 1:
            raise ValueError("corrupt step must be >= 1")
        self.k = k
        self.name = f"builtin:corrupt:{k}"

    def plan_for(self, ctx):
        plan = list(super().plan_for(ctx))
        if self.k <= len(plan):
            session = start_session(ctx.spec, ctx.episode)
            for action in plan[: self.k - 1]:
                session.execute_action(action)
            plan[self.k - 1] = wrong_action(ctx.spec, session, ctx.episode.goal, plan[self.k - 1])
        return plan

    def next_action(self, ctx):
        correct = super().next_action(ctx)
        if ctx.step == self.k - 1:
            return wrong_action(ctx.spec, ctx.session, ctx.episode.goal, correct)
        return correct


class RandomPlanner(Planner):
    """Uniform guesses over the spec vocabulary, seeded per query."""

    name = "builtin:random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def _rng(self, ctx, kind):
        digest = hashlib.sha256(f"{self.seed}|{ctx.episode.id}|{ctx.task}|{kind}|{ctx.serial}".encode()).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def _action(self, rng, spec) -> AtomicAction:
        kind = ACTION_KINDS[rng.integers(len(ACTION_KINDS))]
        part = spec.parts[rng.integers(len(spec.parts))]
        objects = spec.objects or ()
        obj = objects[rng.integers(len(objects))] if objects else None
        args = []
        for name, tag in SIGNATURES[kind]:
            if name in ("part_name", "target_part"):
                args.append(part.name)
            elif name == "obj_name":
                args.append(obj.name if obj else "item")
            elif name in ("start_pos", "end_pos"):
                positions = obj.positions if obj else ("outside",)
                args.append(positions[rng.integers(len(positions))])
            elif tag == "label":
                labels = part.labels or ("on",)
                args.append(labels[rng.integers(len(labels))])
            elif tag == "count":
                args.append(int(rng.integers(1, 4)))
            else:
                args.append(float(rng.integers(-6, 7) * 30))
        return make(kind, *args)

    def respond(self, request, ctx):
        kind = request["kind"]
        rng = self._rng(ctx, kind)
        spec = ctx.spec
        if kind == "retrieve_pages":
            n = len(request["manual_pages"])
            return {"pages": [i for i in range(1, n + 1) if rng.random() < 0.5]}
        if kind == "plan":
            steps = [self._action(rng, spec) for _ in range(int(rng.integers(1, 9)))]
            return {"plan_text": "".join(format_action(a) + "\n" for a in steps)}
        if kind == "ground":
            w, h = spec.panel_width, spec.panel_height
            x1, x2 = sorted(float(v) for v in rng.uniform(0, w, 2))
            y1, y2 = sorted(float(v) for v in rng.uniform(0, h, 2))
            return {"bbox": [round(x1, 3), round(y1, 3), round(x2, 3) + 1, round(y2, 3) + 1]}
        return {"action_text": format_action(self._action(rng, spec))}


# --- offline predictions ------------------------------------------------------


class ReplayPlanner(Planner):
    """Reads ``<episode>.predictions.json`` files written out-of-band.

    File layout::

        {"retrieve_pages": {"<category>": {"pages": [...]}},
         "plan": {"plan_text": "..."},
         "ground": {"<part>": {"bbox": [...]}},
         "next_action": {"<executed step index>": {"action_text": "..."}}}
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.name = f"replay:{self.directory}"
        self._cache = {}

    def _load(self, episode_id):
        if episode_id not in self._cache:
            path = self.directory / f"{episode_id}.predictions.json"
            try:
                self._cache[episode_id] = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError:
                self._cache[episode_id] = None
            except json.JSONDecodeError as exc:
                raise MalformedResponse(f"{path}: {exc}") from None
        data = self._cache[episode_id]
        if data is None:
            raise MalformedResponse(f"no predictions for episode {episode_id}")
        return data

    def respond(self, request, ctx):
        data = self._load(ctx.episode.id)
        kind, query = request["kind"], request["query"]
        entry = data.get(kind)
        if kind == "retrieve_pages":
            entry = (entry or {}).get(query.get("category"))
        elif kind == "ground":
            entry = (entry or {}).get(query.get("part"))
        elif kind == "next_action":
            entry = (entry or {}).get(str(ctx.step))
        if not isinstance(entry, dict):
            raise MalformedResponse(f"predictions lack a {kind} reply for this query")
        return entry


# --- external transports --------------------------------------------------------


class _Serial(Planner):
    """Retry wrapper; holds a lock so one request is in flight at a time."""

    def __init__(self, endpoint: PlannerEndpoint):
        self.endpoint = endpoint
        self.name = f"{endpoint.transport}:{endpoint.address}"
        self._lock = threading.Lock()

    def _exchange(self, request: dict) -> dict:
        raise NotImplementedError

    def respond(self, request, ctx):
        with self._lock:
            for attempt in range(self.endpoint.retries + 1):
                try:
                    return self._exchange(request)
                except PlannerTimeout:
                    if attempt == self.endpoint.retries:
                        raise
        raise PlannerTimeout("unreachable")  # pragma: no cover


class StdioPlanner(_Serial):
    """Spawns ``command`` and talks NDJSON over its stdin/stdout."""

    def __init__(self, endpoint: PlannerEndpoint):
        super().__init__(endpoint)
        try:
            self.proc = subprocess.Popen(
                shlex.split(endpoint.address),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise PlannerUnavailable(f"cannot start planner {endpoint.address!r}: {exc}") from None
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _exchange(self, request):
        if self.proc.poll() is not None:
            raise PlannerUnavailable(f"planner process exited with status {self.proc.returncode}")
        # drop any late reply to an earlier, timed-out request
        while not self._lines.empty():
            if self._lines.get_nowait() is None:
                raise PlannerUnavailable("planner closed its output")
        try:
            self.proc.stdin.write(protocol.encode(request) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PlannerUnavailable(f"planner stdin closed: {exc}") from None
        try:
            line = self._lines.get(timeout=self.endpoint.timeout)
        except queue.Empty:
            raise PlannerTimeout(f"no reply within {self.endpoint.timeout:g}s") from None
        if line is None:
            raise PlannerUnavailable("planner closed its output")
        return protocol.decode(line)

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()


class HttpPlanner(_Serial):
    """POSTs each request to ``<address>/v1/respond``."""

    def __init__(self, endpoint: PlannerEndpoint):
        super().__init__(endpoint)
        self.url = endpoint.address.rstrip("/") + "/v1/respond"

    def _exchange(self, request):
        req = urllib.request.Request(
            self.url,
            data=protocol.encode(request).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.endpoint.timeout) as resp:
                body = resp.read()
        except TimeoutError:
            raise PlannerTimeout(f"no reply within {self.endpoint.timeout:g}s") from None
        except urllib.error.HTTPError as exc:
            raise MalformedResponse(f"HTTP {exc.code} from planner") from None
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise PlannerTimeout(f"no reply within {self.endpoint.timeout:g}s") from None
            raise PlannerUnavailable(f"cannot reach {self.url}: {exc.reason}") from None
        return protocol.decode(body)


def make_planner(address: str, *, seed: int = 0, timeout: float = 30.0, retries: int = 0) -> Planner:
    """``builtin:oracle``, ``builtin:random``, ``builtin:corrupt:<k>``,
    ``stdio:<command>``, ``http://host:port`` or ``replay:<dir>``."""
    if address == "builtin:oracle":
        return OraclePlanner()
    if address == "builtin:random":
        return RandomPlanner(seed)
    if address.startswith("builtin:corrupt:"):
        try:
            return CorruptPlanner(int(address.rsplit(":", 1)[1]))
        except ValueError:
            raise ValueError(f"bad corrupt step in {address!r}") from None
    if address.startswith("stdio:"):
        return StdioPlanner(PlannerEndpoint("stdio", address[6:], timeout, retries))
    if address.startswith(("http://", "https://")):
        return HttpPlanner(PlannerEndpoint("http", address, timeout, retries))
    if address.startswith("replay:"):
        return ReplayPlanner(address[7:])
    raise ValueError(f"unknown planner address {address!r}")

