"""Deterministic simulator and benchmark harness for articulated household appliances."""

from .actions import ACTION_KINDS, AtomicAction, Plan, action_equal, format_action, make, parse_action, parse_plan
from .errors import ApplianceSimError
from .manual import render_manual, render_panel_schematic
from .session import (
    ActionOutcome,
    Observation,
    Perturbation,
    Session,
    apply_perturbation,
    create_session,
    execute_action,
    observe,
    replay_trace,
    restore,
    snapshot,
    step,
)
from .spec import ApplianceSpec, BoundingBox, dump_spec, load_spec, load_spec_file
from .statespace import SearchLimits, enumerate_states, first_actions, oracle_plan, shortest_plan
from .validation import require_valid, validate_spec

__version__ = "0.1.0"

__all__ = [
    "ACTION_KINDS",
    "ActionOutcome",
    "ApplianceSimError",
    "ApplianceSpec",
    "AtomicAction",
    "BoundingBox",
    "Observation",
    "Perturbation",
    "Plan",
    "SearchLimits",
    "Session",
    "action_equal",
    "apply_perturbation",
    "create_session",
    "dump_spec",
    "enumerate_states",
    "execute_action",
    "first_actions",
    "format_action",
    "load_spec",
    "load_spec_file",
    "make",
    "observe",
    "oracle_plan",
    "parse_action",
    "parse_plan",
    "render_manual",
    "render_panel_schematic",
    "replay_trace",
    "require_valid",
    "restore",
    "shortest_plan",
    "snapshot",
    "step",
    "validate_spec",
]
