"""Static and dynamic checks over a loaded ApplianceSpec.

Loading already rejects malformed documents; this module reports the
semantic problems a well-formed spec can still have.  Findings are data, so
nothing here raises except :func:`require_valid`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import CascadeLimitExceeded, InvalidSpec, RuleOscillation, StateSpaceExceeded
from .spec import JOINT_ACTIONS, POSITION_EPS, ApplianceSpec, reference_problems
from .statespace import SearchLimits, enumerate_states

VALIDATION_LIMITS = SearchLimits(max_nodes=20_000)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    code: str
    path: str
    message: str

    def line(self, source="-") -> str:
        return f"{self.severity}:{source}:{self.path}:{self.message}"


@dataclass(frozen=True)
class ValidationReport:
    spec_id: str
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def warnings(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "warning")

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}


def _err(code, path, message):
    return Finding("error", code, path, message)


def _part_findings(spec: ApplianceSpec):
    for i, part in enumerate(spec.parts):
        pp = f"$.parts[{i}]"
        joint = part.joint
        rect = part.panel_rect
        if rect.x2 > spec.panel_width or rect.y2 > spec.panel_height:
            yield _err("rect_out_of_bounds", f"{pp}.panel_rect", f"panel rect of {part.name!r} lies outside the {spec.panel_width:g}x{spec.panel_height:g} panel")
        labels = part.labels
        if len(set(labels)) != len(labels):
            yield _err("duplicate_label", f"{pp}.state_labels", f"{part.name!r} reuses a state label")
        for pos, label in part.state_labels:
            if not joint.lo - POSITION_EPS <= pos <= joint.hi + POSITION_EPS:
                yield _err("label_out_of_range", f"{pp}.state_labels", f"label {label!r} at {pos:g} is outside the joint limits")
        for d in joint.detents:
            if part.label_at(d) is None:
                yield _err("unlabeled_detent", f"{pp}.joint.detents", f"detent {d:g} of {part.name!r} has no state label")
        kinds = [m.kind for m in part.mechanisms]
        for kind in sorted({k for k in kinds if kinds.count(k) > 1}):
            yield _err("duplicate_mechanism", f"{pp}.mechanisms", f"{part.name!r} has more than one {kind}")
        for action in part.actions:
            if action not in JOINT_ACTIONS[joint.kind]:
                yield _err("incompatible_action", f"{pp}.actions", f"{action} does not fit a {joint.kind} joint")
            elif action in ("Open", "Close"):
                label = "open" if action == "Open" else "closed"
                if part.position_of(label) is None:
                    yield _err("missing_label", f"{pp}.actions", f"{action} needs a {label!r} state label")
            elif action == "Touch" and part.mechanism("touch_sensing") is None:
                yield _err("missing_mechanism", f"{pp}.actions", "Touch needs a touch_sensing mechanism")
            elif action in ("Press", "Slide", "Flip") and not part.state_labels:
                yield _err("missing_label", f"{pp}.actions", f"{action} needs state labels to aim at")
        for j, m in enumerate(part.mechanisms):
            mp = f"{pp}.mechanisms[{j}]"
            if m.kind == "knob_countdown" and len(joint.detents) < 2:
                yield _err("countdown_detents", mp, "a countdown knob needs at least two detents")
            elif m.kind == "rotary_motor":
                driven = spec.part_map.get(m.joint)
                if driven is not None and driven.joint.kind != "revolute":
                    yield _err("motor_joint", f"{mp}.joint", f"motor drives {m.joint!r}, which is not revolute")
            elif m.kind == "inner_spring" and joint.kind == "fixed":
                yield _err("spring_joint", mp, "a spring needs a movable joint")
            elif m.kind == "safety_lock":
                for kind in m.blocks:
                    if kind not in part.actions and not (kind == "Pour" and "Pour" in part.actions):
                        yield Finding("warning", "lock_blocks_nothing", f"{mp}.blocks", f"{kind} is not an action of {part.name!r}")
            elif m.kind == "screen_display":
                for k, f in enumerate(m.fields):
                    try:
                        f.format.format("0")
                    except (IndexError, KeyError, ValueError) as exc:
                        yield _err("bad_format", f"{mp}.fields[{k}].format", f"format {f.format!r} is unusable: {exc}")


def _trigger_cycles(spec: ApplianceSpec):
    """A trigger feeds another when it sets the part state that the other waits to see entered."""
    triggers = list(spec.triggers)
    feeds = {i: [] for i in range(len(triggers))}
    for i, t in enumerate(triggers):
        for eff in t.fired_effects():
            if eff.target != "part_state":
                continue
            for j, u in enumerate(triggers):
                if u.part == eff.name and u.entered_label == eff.value:
                    feeds[i].append(j)
    colour = [0] * len(triggers)
    cycles = []

    def visit(i, stack):
        colour[i] = 1
        stack.append(i)
        for j in feeds[i]:
            if colour[j] == 1:
                cycles.append(stack[stack.index(j):] + [j])
            elif colour[j] == 0:
                visit(j, stack)
        stack.pop()
        colour[i] = 2

    for i in range(len(triggers)):
        if colour[i] == 0:
            visit(i, [])
    for cycle in cycles:
        names = " -> ".join(f"{triggers[i].part}({triggers[i].on})" for i in cycle)
        yield _err("trigger_cycle", "$.parts", f"trigger cycle: {names}")


def _output_overrides(spec: ApplianceSpec):
    bound = {name for name, f in spec.screen_fields.items() if f.source is not None}
    driven = {(m.kind, m.part) for m in spec.mechanisms_of_kind("illumination") + spec.mechanisms_of_kind("rotary_motor") if m.on_when is not None}
    for i, rule in enumerate(spec.rules):
        for k, eff in enumerate(rule.then):
            path = f"$.rules[{i}].then[{k}]"
            if eff.target == "screen_field" and eff.name in bound:
                yield Finding("warning", "output_override", path, f"screen field {eff.name!r} is recomputed from its source after rules run")
            elif (eff.target == "light" and ("illumination", eff.name) in driven) or (eff.target == "motor" and ("rotary_motor", eff.name) in driven):
                yield Finding("warning", "output_override", path, f"{eff.target} {eff.name!r} is recomputed from on_when after rules run")


def _dynamic_findings(spec: ApplianceSpec, limits: SearchLimits):
    try:
        enumerate_states(spec, limits, project=True)
    except RuleOscillation as exc:
        yield _err("rule_oscillation", "$.rules", f"rule oscillation: {exc}")
    except CascadeLimitExceeded as exc:
        yield _err("trigger_cycle", "$.parts", f"trigger cycle: {exc}")
    except StateSpaceExceeded as exc:
        yield Finding("warning", "state_space_exceeded", "$", f"oscillation check incomplete: {exc}")


def validate_spec(spec: ApplianceSpec, limits: SearchLimits = VALIDATION_LIMITS) -> ValidationReport:
    findings = [_err("unresolved_reference", path, message) for path, message in reference_problems(spec)]
    findings += _part_findings(spec)
    findings += _trigger_cycles(spec)
    findings += _output_overrides(spec)
    if not any(f.severity == "error" for f in findings):
        findings += _dynamic_findings(spec, limits)
    return ValidationReport(spec.id, tuple(findings))


@lru_cache(maxsize=128)
def _cached_report(spec: ApplianceSpec) -> ValidationReport:
    return validate_spec(spec)


def require_valid(spec: ApplianceSpec) -> ValidationReport:
    """Raise InvalidSpec unless the spec has no error findings."""
    report = _cached_report(spec)
    if not report.ok:
        raise InvalidSpec(report.errors)
    return report
