"""Planner wire protocol, version 1.

One JSON request, one JSON response, newline-delimited over stdio or as the
body of ``POST /v1/respond``.  Requests always carry every key; unused ones
are empty.  Each kind expects one payload key in the reply:

==============  ===============  ==========================================
request kind    reply key        reply value
==============  ===============  ==========================================
retrieve_pages  ``pages``        list of 1-based page indices
plan            ``plan_text``    one action per line
ground          ``bbox``         ``[x1, y1, x2, y2]`` in panel pixels
next_action     ``action_text``  a single action line
==============  ===============  ==========================================
"""

from __future__ import annotations

import json

from ..actions import AtomicAction, Plan, parse_action, parse_plan
from ..errors import ActionParseError, DegenerateBox, MalformedResponse, PageOutOfRange
from ..spec import BoundingBox

PROTOCOL_VERSION = 1
REQUEST_KINDS = ("retrieve_pages", "plan", "ground", "next_action")
REPLY_KEYS = {"retrieve_pages": "pages", "plan": "plan_text", "ground": "bbox", "next_action": "action_text"}


def make_request(kind, *, instruction="", manual_pages=(), observation=None, history=(), initial_plan=(), query=None) -> dict:
    if kind not in REQUEST_KINDS:
        raise ValueError(f"unknown request kind {kind!r}")
    return {
        "protocol_version": PROTOCOL_VERSION,
        "kind": kind,
        "instruction": instruction,
        "manual_pages": [{"index": p.index, "text": p.text} for p in manual_pages],
        "observation": observation or {},
        "history": list(history),
        "initial_plan": list(initial_plan),
        "query": query or {},
    }


def encode(message: dict) -> str:
    return json.dumps(message, ensure_ascii=False, separators=(",", ":"))


def decode(line: str | bytes) -> dict:
    try:
        data = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedResponse(f"reply is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise MalformedResponse("reply must be a JSON object")
    return data


def _payload(reply: dict, kind: str):
    key = REPLY_KEYS[kind]
    if not isinstance(reply, dict) or key not in reply:
        raise MalformedResponse(f"{kind} reply needs a {key!r} field")
    return reply[key]


def parse_pages(reply: dict, n_pages: int) -> frozenset[int]:
    pages = _payload(reply, "retrieve_pages")
    if not isinstance(pages, list) or any(isinstance(i, bool) or not isinstance(i, int) for i in pages):
        raise MalformedResponse("pages must be a list of integers")
    bad = sorted(i for i in pages if not 1 <= i <= n_pages)
    if bad:
        raise PageOutOfRange(f"pages {bad} outside 1..{n_pages}")
    return frozenset(pages)


def parse_plan_reply(reply: dict) -> Plan:
    text = _payload(reply, "plan")
    if not isinstance(text, str):
        raise MalformedResponse("plan_text must be a string")
    try:
        return parse_plan(text)
    except ActionParseError as exc:
        raise MalformedResponse(f"plan does not parse: {exc}") from None


def parse_bbox(reply: dict) -> BoundingBox:
    box = _payload(reply, "ground")
    if not isinstance(box, list) or len(box) != 4:
        raise MalformedResponse("bbox must be [x1, y1, x2, y2]")
    try:
        return BoundingBox(*box)
    except DegenerateBox as exc:
        raise MalformedResponse(str(exc)) from None


def parse_action_reply(reply: dict) -> AtomicAction:
    text = _payload(reply, "next_action")
    if not isinstance(text, str):
        raise MalformedResponse("action_text must be a string")
    try:
        return parse_action(text.strip())
    except ActionParseError as exc:
        raise MalformedResponse(f"{exc.code}: {exc}") from None
