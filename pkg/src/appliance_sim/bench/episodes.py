"""Episode files and the bundled corpus."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

from ..actions import Plan, format_action, parse_plan
from ..errors import ActionParseError, EpisodeError, ExecutorError, InvalidEffect, SchemaMismatch, SpecError
from ..manual import ManualDocument, render_manual
from ..session import Perturbation, Session, restore
from ..spec import ApplianceSpec, check_predicate, load_spec_file, parse_predicate

EPISODE_KEYS = ("id", "appliance", "instruction", "initial_state", "goal", "gt_plan", "perturbations", "relevant_pages", "grounding_queries")
EPISODE_SUFFIX = ".episode.json"


@dataclass(frozen=True, eq=False)
class Episode:
    id: str
    appliance: str
    instruction: str
    initial_state: dict
    goal: tuple
    gt_plan: Plan
    perturbations: tuple[Perturbation, ...]
    relevant_pages: dict
    grounding_queries: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "appliance": self.appliance,
            "instruction": self.instruction,
            "initial_state": self.initial_state,
            "goal": [c.to_json() for c in self.goal],
            "gt_plan": self.gt_plan.to_list(),
            "perturbations": [p.to_json() for p in self.perturbations],
            "relevant_pages": {k: list(v) for k, v in self.relevant_pages.items()},
            "grounding_queries": list(self.grounding_queries),
        }

    def perturbation_at(self, step: int) -> Perturbation | None:
        for p in self.perturbations:
            if p.at_step == step:
                return p
        return None


def episode_from_json(data) -> Episode:
    if not isinstance(data, dict):
        raise EpisodeError("episode must be a JSON object")
    keys = set(data)
    if keys != set(EPISODE_KEYS):
        missing, extra = sorted(set(EPISODE_KEYS) - keys), sorted(keys - set(EPISODE_KEYS))
        raise EpisodeError(f"episode keys mismatch (missing {missing}, unexpected {extra})")
    try:
        goal = parse_predicate(data["goal"], "$.goal")
        plan = parse_plan("\n".join(data["gt_plan"]))
        perts = tuple(Perturbation.from_json(p) for p in data["perturbations"])
    except (SpecError, ActionParseError, InvalidEffect, TypeError, AttributeError) as exc:
        raise EpisodeError(f"{data.get('id', '?')}: {exc}") from None
    pages = data["relevant_pages"]
    if not isinstance(pages, dict) or any(not isinstance(v, list) for v in pages.values()):
        raise EpisodeError("relevant_pages must map categories to page lists")
    return Episode(
        id=data["id"],
        appliance=data["appliance"],
        instruction=data["instruction"],
        initial_state=data["initial_state"],
        goal=goal,
        gt_plan=plan,
        perturbations=perts,
        relevant_pages={k: tuple(v) for k, v in pages.items()},
        grounding_queries=tuple(data["grounding_queries"]),
    )


def load_episode_file(path) -> Episode:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EpisodeError(f"{path}: {exc}") from None
    return episode_from_json(data)


def dump_episode(episode: Episode) -> str:
    return json.dumps(episode.to_json(), indent=2, ensure_ascii=False) + "\n"


def start_session(spec: ApplianceSpec, episode: Episode) -> Session:
    return restore(spec, episode.initial_state)


def verify_episode(spec: ApplianceSpec, episode: Episode, manual: ManualDocument | None = None) -> list[str]:
    """Every reason the episode is unusable; empty when it is sound."""
    from ..statespace import shortest_plan

    problems = []
    if episode.appliance != spec.id:
        return [f"episode is for {episode.appliance!r}, not {spec.id!r}"]
    try:
        session = start_session(spec, episode)
    except SchemaMismatch as exc:
        return [f"initial_state: {exc}"]
    problems += [f"goal{path[1:]}: {msg}" for path, msg in check_predicate(spec, episode.goal, "$")]
    if not episode.grounding_queries:
        problems.append("grounding_queries is empty")
    problems += [f"grounding query {q!r} is not a part" for q in episode.grounding_queries if q not in spec.part_map]
    if len(episode.gt_plan) == 0:
        problems.append("gt_plan is empty")
    steps = [p.at_step for p in episode.perturbations]
    if len(set(steps)) != len(steps):
        problems.append("two perturbations share an at_step")
    for p in episode.perturbations:
        if p.at_step >= len(episode.gt_plan):
            problems.append(f"perturbation at_step {p.at_step} is past the end of gt_plan")
        try:
            session.check_perturbation(p)
        except InvalidEffect as exc:
            problems.append(f"perturbation at_step {p.at_step}: {exc}")
    if manual is not None:
        for category, pages in episode.relevant_pages.items():
            have = manual.indices(category)
            for i in pages:
                if i not in have:
                    problems.append(f"relevant page {i} is not a {category} page")
    if problems:
        return problems
    for i, action in enumerate(episode.gt_plan):
        outcome = session.execute_action(action)
        if not outcome.ok:
            return [f"gt_plan step {i + 1} ({format_action(action)}) rejected: {outcome.error}"]
    if not session.satisfies(episode.goal):
        return ["gt_plan does not reach the goal"]
    try:
        best = shortest_plan(spec, start_session(spec, episode), episode.goal)
    except ExecutorError as exc:  # pragma: no cover - search never raises executor errors
        return [str(exc)]
    if best.depth > len(episode.gt_plan):
        problems.append("oracle plan is longer than gt_plan")
    return problems


def bundled_root() -> Path:
    return Path(str(resources.files("appliance_sim") / "data"))


class Corpus:
    """Specs under ``<root>/specs`` and episodes under ``<root>/episodes``."""

    def __init__(self, specs: dict[str, ApplianceSpec], episodes: list[Episode], root: Path | None = None):
        self.specs = specs
        self.episodes = sorted(episodes, key=lambda e: e.id)
        self.root = root
        self._manuals = {}

    @classmethod
    def load(cls, root=None) -> "Corpus":
        root = Path(root) if root is not None else bundled_root()
        spec_dir, ep_dir = root / "specs", root / "episodes"
        if not spec_dir.is_dir():
            raise FileNotFoundError(f"{spec_dir} is not a directory")
        specs = {}
        for path in sorted(spec_dir.glob("*.json")):
            spec = load_spec_file(path)
            specs[spec.id] = spec
        episodes = [load_episode_file(p) for p in sorted(ep_dir.glob(f"*{EPISODE_SUFFIX}"))] if ep_dir.is_dir() else []
        for ep in episodes:
            if ep.appliance not in specs:
                raise EpisodeError(f"{ep.id}: unknown appliance {ep.appliance!r}")
        return cls(specs, episodes, root)

    @cached_property
    def by_id(self) -> dict[str, Episode]:
        return {e.id: e for e in self.episodes}

    def spec_for(self, episode: Episode) -> ApplianceSpec:
        return self.specs[episode.appliance]

    def recipes(self, appliance: str) -> list[tuple[str, Plan]]:
        return [(e.instruction, e.gt_plan) for e in self.episodes if e.appliance == appliance]

    def manual(self, appliance: str, seed: int = 0) -> ManualDocument:
        key = (appliance, seed)
        if key not in self._manuals:
            self._manuals[key] = render_manual(self.specs[appliance], seed, self.recipes(appliance))
        return self._manuals[key]
