"""Synthetic user manuals and panel schematics.

Both are pure functions of their inputs, so the page categories double as
retrieval ground truth and the schematic rectangles as grounding ground truth.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .actions import AtomicAction
from .spec import ApplianceSpec, _num
from .validation import require_valid

PAGE_CATEGORIES = (
    "cover",
    "component_description",
    "operating_procedure",
    "safety_precaution",
    "maintenance",
    "after_sales",
)

PARTS_PER_PAGE = 6

_JOINT_WORDS = {
    "revolute": "turns on a hinge or spindle",
    "prismatic": "moves in and out along a straight track",
    "fixed": "does not move",
}

_INTROS = (
    "Read these instructions carefully before first use.",
    "Please keep this manual for future reference.",
    "Thank you for choosing this appliance. Read all instructions before use.",
)

_TIPS = (
    "Wait until each step has taken effect before starting the next one.",
    "Check the display after every adjustment.",
    "Make sure the appliance is stable before operating it.",
)


@dataclass(frozen=True)
class ManualPage:
    index: int
    category: str
    text: str


@dataclass(frozen=True)
class ManualDocument:
    spec_id: str
    seed: int
    pages: tuple[ManualPage, ...]

    def __len__(self):
        return len(self.pages)

    def page(self, index: int) -> ManualPage:
        return self.pages[index - 1]

    def indices(self, category: str) -> frozenset[int]:
        return frozenset(p.index for p in self.pages if p.category == category)

    def relevant_pages(self) -> dict[str, list[int]]:
        return {c: sorted(self.indices(c)) for c in PAGE_CATEGORIES if self.indices(c)}

    def to_json(self) -> dict:
        return {
            "spec_id": self.spec_id,
            "seed": self.seed,
            "pages": [{"index": p.index, "category": p.category, "file": page_filename(p)} for p in self.pages],
        }


def page_filename(page: ManualPage) -> str:
    return f"page_{page.index}_{page.category}.txt"


def _title(name: str) -> str:
    return name.replace("_", " ")


def describe_step(action: AtomicAction) -> str:
    a = action.args
    kind = action.kind
    if kind == "Press":
        times = "once" if a[2] == 1 else f"{a[2]} times"
        return f'Press the {a[0]} {times} so that it is "{a[1]}".'
    if kind == "Rotate":
        direction = "clockwise" if a[2] >= 0 else "counterclockwise"
        return f'Turn the {a[0]} {direction} by {_num(abs(a[2]))} degrees to "{a[1]}".'
    if kind in ("Open", "Close", "Pull", "Push"):
        return f"{kind} the {a[0]}."
    if kind == "Touch":
        times = "once" if a[1] == 1 else f"{a[1]} times"
        return f"Touch the {a[0]} {times}."
    if kind in ("Slide", "Flip"):
        return f'{kind} the {a[0]} to "{a[1]}".'
    if kind == "Pick":
        return f"Pick up the {a[0]}."
    if kind == "Place":
        return f"Put down the {a[0]}."
    if kind == "Move":
        return f"Move the {a[0]} from the {a[1]} to the {a[2]}."
    return f"Pour the {a[0]} into the {a[1]}."


def _part_line(part) -> str:
    labels = ", ".join(f'"{lab}"' for lab in part.labels)
    kinds = sorted(m.kind.replace("_", " ") for m in part.mechanisms)
    line = f"- {part.name}: {_JOINT_WORDS[part.joint.kind]}"
    if labels:
        line += f"; positions {labels}"
    if kinds:
        line += f"; features: {', '.join(kinds)}"
    return line + "."


def _how_to(part) -> str | None:
    verbs = {
        "Press": "press it",
        "Rotate": "turn it to one of its marked positions",
        "Open": "open it",
        "Close": "close it",
        "Touch": "touch it",
        "Slide": "slide it to a marked position",
        "Flip": "flip it to a marked position",
        "Pull": "pull it",
        "Push": "push it down",
        "Pour": "pour ingredients into it",
    }
    ways = [verbs[k] for k in part.actions if k in verbs]
    if not ways:
        return None
    return f"- {part.name}: " + "; ".join(ways) + "."


def _components(spec: ApplianceSpec) -> list[str]:
    pages = []
    parts = list(spec.parts)
    for start in range(0, len(parts), PARTS_PER_PAGE):
        chunk = parts[start : start + PARTS_PER_PAGE]
        lines = ["COMPONENTS", ""]
        lines += [_part_line(p) for p in chunk]
        pages.append(lines)
    settings = []
    for param in spec.parameters:
        unit = f" {param.unit}" if param.unit else ""
        if param.is_enum:
            settings.append(f"- {param.name}: one of {', '.join(param.labels)}")
        else:
            lo, hi, step = param.range
            settings.append(f"- {param.name}: {lo} to {hi}{unit} in steps of {step}")
    if settings:
        pages[-1] += ["", "Settings:"] + settings
    if spec.objects:
        pages[-1] += ["", "Items used with this appliance:"]
        pages[-1] += [f"- {o.name}: can be at {', '.join(o.positions)}" for o in spec.objects]
    return ["\n".join(lines) for lines in pages]


def _procedures(spec: ApplianceSpec, recipes, rng) -> list[str]:
    lines = ["OPERATION", "", "Controls:"]
    lines += [line for line in (_how_to(p) for p in spec.parts) if line]
    lines += ["", rng.choice(_TIPS)]
    pages = ["\n".join(lines)]
    for instruction, plan in recipes:
        body = [f"HOW TO: {instruction}", ""]
        body += [f"{i}. {describe_step(step)}" for i, step in enumerate(plan, start=1)]
        pages.append("\n".join(body))
    return pages


def _safety(spec: ApplianceSpec) -> str | None:
    lines = []
    for m in spec.mechanisms_of_kind("safety_lock"):
        conditions = " and ".join(f"{c.name} is {c.value}" if c.op == "==" else f"{c.name} {c.op} {c.value}" for c in m.unlocked_when)
        blocked = ", ".join(k.lower() for k in m.blocks)
        lines.append(f"- The {m.part} is locked for safety. It cannot {blocked} unless {conditions or 'released'}.")
    for m in spec.mechanisms_of_kind("magnetic_attraction"):
        conditions = " and ".join(f"{c.name} is {c.value}" for c in m.hold)
        lines.append(f"- The {m.part} is held shut by a magnetic seal while {conditions or 'in use'}. Do not force it open.")
    if not lines:
        return None
    return "\n".join(["SAFETY PRECAUTIONS", "", *lines, "", "Keep children away from the appliance while it is operating."])


def _maintenance(spec: ApplianceSpec) -> str | None:
    lines = []
    for p in spec.parts:
        kinds = {m.kind for m in p.mechanisms}
        if "magnetic_attraction" in kinds:
            lines.append(f"- Wipe the seal of the {p.name} regularly so it closes tightly.")
        if "inner_spring" in kinds:
            lines.append(f"- The {p.name} returns by itself; do not hold it down after use.")
    for m in spec.mechanisms_of_kind("rotary_motor"):
        lines.append(f"- Keep the {m.joint} free of debris so the motor can turn it.")
    if not lines:
        return None
    return "\n".join(["CARE AND MAINTENANCE", "", *lines, "", "Unplug the appliance before cleaning."])


def _after_sales(spec: ApplianceSpec) -> str:
    return "\n".join(
        [
            "SERVICE AND WARRANTY",
            "",
            "Placeholder service page: contact the retailer for repairs or spare parts.",
            f"Quote model {spec.id} when asking for help.",
        ]
    )


def render_manual(spec: ApplianceSpec, seed: int = 0, recipes=()) -> ManualDocument:
    """Categorized pages for ``spec``; ``recipes`` are (instruction, Plan) pairs."""
    require_valid(spec)
    rng = random.Random(f"{seed}:{spec.id}")
    cover = "\n".join(
        [
            f"{_title(spec.id).upper()}",
            f"{_title(spec.category).capitalize()} user manual",
            "",
            rng.choice(_INTROS),
        ]
    )
    texts = [("cover", cover)]
    texts += [("component_description", t) for t in _components(spec)]
    texts += [("operating_procedure", t) for t in _procedures(spec, recipes, rng)]
    for category, text in (("safety_precaution", _safety(spec)), ("maintenance", _maintenance(spec))):
        if text is not None:
            texts.append((category, text))
    texts.append(("after_sales", _after_sales(spec)))
    pages = tuple(ManualPage(i, category, text + "\n") for i, (category, text) in enumerate(texts, start=1))
    return ManualDocument(spec.id, seed, pages)


def write_manual(doc: ManualDocument, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for page in doc.pages:
        path = out / page_filename(page)
        path.write_text(page.text, encoding="utf-8")
        written.append(path)
    index = out / "manual.json"
    index.write_text(json.dumps(doc.to_json(), indent=2) + "\n", encoding="utf-8")
    return written + [index]


def _fmt(value: float) -> str:
    return str(_num(float(value)))


def render_panel_schematic(spec: ApplianceSpec) -> str:
    """SVG 1.1 drawing of every part's panel rect with its name, in declaration order."""
    require_valid(spec)
    w, h = _fmt(spec.panel_width), _fmt(spec.panel_height)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
    ]
    for part in spec.parts:
        r = part.panel_rect
        lines.append(
            f'  <rect id={quoteattr("part-" + part.name)} x="{_fmt(r.x1)}" y="{_fmt(r.y1)}" '
            f'width="{_fmt(r.x2 - r.x1)}" height="{_fmt(r.y2 - r.y1)}" fill="none" stroke="black" stroke-width="1"/>'
        )
        lines.append(f'  <text x="{_fmt(r.x1 + 2)}" y="{_fmt(r.y1 + 10)}" font-family="monospace" font-size="8">{escape(part.name)}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
