import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from appliance_sim.bench import protocol
from appliance_sim.bench.planners import QueryContext, make_planner
from appliance_sim.bench.tasks import run_grounding, run_open_loop, run_page_retrieval
from appliance_sim.errors import MalformedResponse, PageOutOfRange, PlannerTimeout, PlannerUnavailable

STUB = Path(__file__).with_name("planner_stub.py")


def _stdio(*extra, timeout=10.0, retries=0):
    cmd = " ".join([sys.executable, str(STUB), *extra])
    return make_planner(f"stdio:{cmd}", timeout=timeout, retries=retries)


def _ctx(corpus, episode_id="microwave-02"):
    ep = corpus.by_id[episode_id]
    spec = corpus.spec_for(ep)
    return QueryContext(spec, ep, corpus.manual(spec.id), "open_loop")


def test_request_shape():
    req = protocol.make_request("plan", instruction="x")
    assert set(req) == {"protocol_version", "kind", "instruction", "manual_pages", "observation", "history", "initial_plan", "query"}
    assert protocol.decode(protocol.encode(req)) == req
    with pytest.raises(ValueError):
        protocol.make_request("dance")


@pytest.mark.parametrize(
    "reply, parse, args",
    [
        ({"pages": "2"}, protocol.parse_pages, (5,)),
        ({"nope": 1}, protocol.parse_pages, (5,)),
        ({"plan_text": "Wiggle(x)"}, protocol.parse_plan_reply, ()),
        ({"bbox": [1, 2, 3]}, protocol.parse_bbox, ()),
        ({"bbox": [5, 5, 1, 1]}, protocol.parse_bbox, ()),
        ({"action_text": 7}, protocol.parse_action_reply, ()),
    ],
)
def test_malformed_replies(reply, parse, args):
    with pytest.raises(MalformedResponse):
        parse(reply, *args)


def test_page_range_and_decode():
    with pytest.raises(PageOutOfRange):
        protocol.parse_pages({"pages": [9]}, 5)
    with pytest.raises(MalformedResponse):
        protocol.decode("[1, 2]")
    with pytest.raises(MalformedResponse):
        protocol.decode(b"\xff")


def test_stdio_planner_round_trip(corpus):
    planner = _stdio()
    try:
        ep = corpus.by_id["microwave-02"]
        run = run_open_loop(corpus, ep, planner)
        assert run.report.metrics["completion_rate"] == pytest.approx(2 / 3)
        assert not run.report.metrics["success"]
        grounded = run_grounding(corpus, ep, planner)
        assert grounded.report.metrics["ious"]["start_button"] == 1.0
        assert grounded.report.planner_failures == 0
    finally:
        planner.close()


def test_stdio_timeout_counts_as_failure(corpus):
    planner = _stdio("--sleep", "2", timeout=0.3)
    try:
        run = run_page_retrieval(corpus, corpus.by_id["microwave-02"], planner)
        assert run.report.planner_failures == 2
        assert run.report.metrics["f1"] == 0.0
        assert [e["error"] for e in run.log] == ["PlannerTimeout", "PlannerTimeout"]
    finally:
        planner.close()


def test_stdio_garbage_reply(corpus):
    planner = _stdio("--garbage")
    try:
        with pytest.raises(MalformedResponse):
            planner.respond(protocol.make_request("plan"), _ctx(corpus))
    finally:
        planner.close()


def test_stdio_missing_binary():
    with pytest.raises(PlannerUnavailable):
        make_planner("stdio:/nonexistent/planner-binary")


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.path != "/v1/respond":
            self.send_response(404)
            self.end_headers()
            return
        reply = {"plan_text": "Close(door)\n"} if body["kind"] == "plan" else {}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def test_http_planner(corpus, http_server):
    planner = make_planner(http_server, timeout=5)
    reply = planner.respond(protocol.make_request("plan"), _ctx(corpus))
    assert protocol.parse_plan_reply(reply).to_text() == "Close(door)\n"


def test_http_unreachable(corpus):
    planner = make_planner("http://127.0.0.1:9", timeout=2)
    with pytest.raises((PlannerUnavailable, PlannerTimeout)):
        planner.respond(protocol.make_request("plan"), _ctx(corpus))


def test_replay_planner(corpus, tmp_path):
    (tmp_path / "microwave-02.predictions.json").write_text(json.dumps({"plan": {"plan_text": "Close(door)\n"}}))
    planner = make_planner(f"replay:{tmp_path}")
    assert protocol.parse_plan_reply(planner.respond(protocol.make_request("plan"), _ctx(corpus))).to_text() == "Close(door)\n"
    with pytest.raises(MalformedResponse):
        planner.respond(protocol.make_request("ground", query={"part": "door"}), _ctx(corpus))
    with pytest.raises(MalformedResponse):
        planner.respond(protocol.make_request("plan"), _ctx(corpus, "oven-01"))


def test_unknown_addresses():
    for bad in ("builtin:psychic", "builtin:corrupt:x", "ftp://x"):
        with pytest.raises(ValueError):
            make_planner(bad)


def test_random_planner_is_seeded(corpus):
    ep = corpus.by_id["oven-01"]
    a = run_open_loop(corpus, ep, make_planner("builtin:random", seed=3))
    b = run_open_loop(corpus, ep, make_planner("builtin:random", seed=3))
    assert a.log == b.log
