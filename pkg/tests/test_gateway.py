"""Gateway sessions: metering, envelopes, scrubbing, wire protocol."""

import json
import random

from sresim.gateway import (
    GatewayClient,
    GatewayServer,
    GatewaySession,
    InProcessGateway,
    classify_call,
)
from sresim.scenarios import get_problem, load_problem


def make_session(problem_id=1, seed=5, noise_on=False, **kwargs):
    armed = load_problem(get_problem(problem_id), seed=seed, noise_on=noise_on)
    return GatewaySession(armed, **kwargs)


def test_every_call_costs_a_turn():
    session = make_session()
    r1 = session.call("cluster.exec", {"verb": "get", "target_kind": "pods"})
    r2 = session.call("cluster.exec", {"verb": "get", "target_kind": "pods"})
    assert r1["now"] == 5.0
    assert r2["now"] == 10.0
    assert r2["remaining_s"] == 1790.0


def test_wait_charges_at_least_the_turn_cost():
    session = make_session()
    assert session.call("wait", {"seconds": 1.0})["now"] == 5.0
    assert session.call("wait", {"seconds": 30.0})["now"] == 35.0


def test_horizon_clamps_and_closes():
    session = make_session(turn_cost_s=5.0)
    r = session.call("wait", {"seconds": 5000.0})
    assert r["now"] == 1800.0
    assert r["remaining_s"] == 0.0
    assert session.closed
    r = session.call("wait", {"seconds": 1.0})
    assert not r["ok"] and r["error"] == "session closed"


def test_unknown_tool_and_verb_are_state_free_errors():
    session = make_session()
    before = session.sim.now()
    r = session.call("no.such.tool", {})
    assert not r["ok"] and session.sim.now() == before  # no turn charged
    r = session.call("cluster.exec", {"verb": "explode"})
    assert not r["ok"] and "unknown verb" in r["error"]


def test_first_diagnosis_is_binding():
    session = make_session()
    r1 = session.call("submit.diagnosis", {"text": "first theory"})
    r2 = session.call("submit.diagnosis", {"text": "second theory"})
    assert r1["result"]["binding"] and not r2["result"]["binding"]
    assert session.diagnosis_text == "first theory"


def test_mitigation_response_never_reveals_the_verdict():
    session = make_session()
    r = session.call("submit.mitigation", {})
    assert set(r["result"].keys()) == {"accepted", "binding"}
    assert r["result"]["accepted"] is True
    assert session.mitigation_verdict is not None  # scored internally


def test_classification_buckets():
    assert classify_call("metrics.query", {}) == "observability"
    assert classify_call("logs.search", {}) == "observability"
    assert classify_call("traces.get", {}) == "observability"
    assert classify_call("wait", {}) == "wait"
    assert classify_call("submit.diagnosis", {}) == "submission"
    assert classify_call("cluster.exec", {"verb": "get"}) == "kubectl_read"
    assert classify_call("cluster.exec", {"verb": "patch"}) == "kubectl_write"
    assert classify_call("cluster.exec", {"verb": "run_probe"}) == "network"
    assert classify_call("cluster.exec", {"verb": "port_forward"}) == "network"


def test_usage_counts_exclude_submissions():
    session = make_session()
    session.call("cluster.exec", {"verb": "get", "target_kind": "pods"})
    session.call("submit.diagnosis", {"text": "theory"})
    session.call("wait", {"seconds": 1})
    counts = session.usage_counts()
    assert counts == {"kubectl_read": 1, "wait": 1}
    assert len(session.calls) == 3  # submissions still logged


def test_scrubber_redacts_injector_identifiers():
    session = make_session()
    session.sim.advance(40.0)  # fault fires at t=30
    token = session.armed.root_handles()[0].token
    leaked = session._scrub({"ok": True, "result": {"note": f"handle {token} active"}})
    assert token not in json.dumps(leaked)
    assert "[redacted]" in json.dumps(leaked)
    assert session.redactions >= 1


def test_fuzzed_reads_never_leak_identifiers():
    session = make_session(turn_cost_s=0.0)
    session.sim.advance(60.0)
    idents = {s.lower() for s in session.sim.injectors.identifier_strings()}
    rng = random.Random(0)
    tools = [
        ("metrics.query", lambda: {"series": rng.choice(["client.goodput_rps", "service.error_rate", ""])}),
        ("logs.search", lambda: {"severity": rng.choice([None, "ERROR", "INFO"]), "limit": rng.randint(1, 50)}),
        ("traces.get", lambda: {"status": rng.choice([None, "ok", "error"])}),
        ("cluster.exec", lambda: {"verb": "get", "target_kind": rng.choice(["pods", "deployments", "services", "nodes", "configs"])}),
        ("cluster.exec", lambda: {"verb": "describe", "target_kind": "deployment", "target": "user-service"}),
    ]
    for _ in range(500):
        tool, params = rng.choice(tools)
        envelope = session.call(tool, params())
        text = json.dumps(envelope).lower()
        assert not any(ident in text for ident in idents)
    assert session.redactions == 0


def test_reads_through_the_gateway_do_not_mutate():
    session = make_session(turn_cost_s=0.0)
    session.sim.advance(50.0)
    before = session.sim.snapshot()
    for params in (
        {"verb": "get", "target_kind": "pods"},
        {"verb": "describe", "target_kind": "deployment", "target": "user-service"},
        {"verb": "top", "target_kind": "nodes"},
    ):
        session.call("cluster.exec", params)
    session.call("metrics.query", {"series": "client.goodput_rps"})
    session.call("logs.search", {"severity": "ERROR"})
    session.call("traces.get", {})
    assert session.sim.snapshot() == before


def test_wire_protocol_round_trip():
    server = GatewayServer(make_session())
    host, port = server.start()
    try:
        with GatewayClient(host, port) as client:
            r = client.call("wait", {"seconds": 10})
            assert r["v"] == 1 and r["id"] == 1 and r["ok"]
            r = client.call("cluster.exec", {"verb": "get", "target_kind": "nodes"})
            assert r["id"] == 2 and len(r["result"]["output"]) == 3
    finally:
        server.stop()


def test_wire_protocol_rejects_bad_requests():
    server = GatewayServer(make_session())
    assert server.handle_line("not json") == {
        "v": 1, "id": None, "ok": False, "error": "malformed request",
    }
    bad_version = server.handle_line(json.dumps({"v": 2, "id": 9, "tool": "wait"}))
    assert bad_version["id"] == 9 and "version" in bad_version["error"]
    no_tool = server.handle_line(json.dumps({"v": 1, "id": 10}))
    assert no_tool["error"] == "missing tool"
    server._server.server_close()


def test_in_process_adapter_matches_wire_shape():
    gw = InProcessGateway(make_session())
    r = gw.call("wait", {"seconds": 1})
    assert r["v"] == 1 and r["id"] == 1
    assert {"ok", "now", "remaining_s"} <= set(r)
