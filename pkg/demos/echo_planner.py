"""A minimal external planner speaking the stdio protocol.

It answers every request from the first manual page it is shown and always
proposes the same plan, so it scores badly.  Point the bench at it with:

    appliance-sim bench 2 --planner "stdio:python3 demos/echo_planner.py"
"""

import json
import sys

for line in sys.stdin:
    request = json.loads(line)
    kind = request["kind"]
    if kind == "retrieve_pages":
        reply = {"pages": [p["index"] for p in request["manual_pages"][:1]]}
    elif kind == "plan":
        reply = {"plan_text": "Close(door)\n"}
    elif kind == "ground":
        panel = request["query"]["panel"]
        reply = {"bbox": [0, 0, panel["width"], panel["height"]]}
    else:
        reply = {"action_text": "Close(door)"}
    print(json.dumps(reply), flush=True)
