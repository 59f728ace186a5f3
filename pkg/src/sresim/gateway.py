"""Agent-facing tool gateway: metered tool calls over a live incident.

Agents never touch the simulation objects. They see seven tools —
``metrics.query``, ``logs.search``, ``traces.get``, ``cluster.exec``,
``wait``, ``submit.diagnosis``, ``submit.mitigation`` — and every call costs
simulated time (default 5s) before it executes, so investigation speed is a
real trade-off. A session ends at the time horizon; anything not submitted
by then is scored as missed.

Two transports expose the same envelope: an in-process adapter and a
line-delimited JSON protocol over TCP (one request object per line, matching
response carries the request id). Responses are scrubbed so injection
bookkeeping identifiers can never leak to the agent.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from collections import Counter
from dataclasses import dataclass, field

from .cluster import READ_VERBS, WRITE_VERBS, VerbCall

PROTOCOL_VERSION = 1
DEFAULT_HORIZON_S = 1800.0
DEFAULT_TURN_COST_S = 5.0

TOOLS = (
    "metrics.query",
    "logs.search",
    "traces.get",
    "cluster.exec",
    "wait",
    "submit.diagnosis",
    "submit.mitigation",
)

_EPS = 1e-9


def classify_call(tool: str, params: dict) -> str:
    """Usage-report bucket for one tool call.

    Submissions are logged but excluded from usage statistics; probe verbs
    count as network diagnostics rather than cluster writes.
    """
    if tool in ("metrics.query", "logs.search", "traces.get"):
        return "observability"
    if tool == "wait":
        return "wait"
    if tool in ("submit.diagnosis", "submit.mitigation"):
        return "submission"
    if tool == "cluster.exec":
        verb = params.get("verb")
        if verb in ("run_probe", "port_forward"):
            return "network"
        if verb in READ_VERBS:
            return "kubectl_read"
        if verb in WRITE_VERBS:
            return "kubectl_write"
    return "other"


@dataclass
class ToolCall:
    index: int
    at: float  # sim time after the turn cost was charged
    tool: str
    params: dict
    category: str
    ok: bool


@dataclass
class SessionOutcome:
    diagnosed_at: float | None
    mitigated_at: float | None
    diagnosis_verdict: object | None
    mitigation_verdict: object | None
    calls: int
    redactions: int

    def as_dict(self) -> dict:
        dv = self.diagnosis_verdict
        mv = self.mitigation_verdict
        return {
            "diagnosed_at": self.diagnosed_at,
            "mitigated_at": self.mitigated_at,
            "diagnosis": dv.as_dict() if dv is not None else None,
            "mitigation": mv.as_dict() if mv is not None else None,
            "calls": self.calls,
            "redactions": self.redactions,
        }


class GatewaySession:
    """One agent's metered view of one armed problem."""

    def __init__(
        self,
        armed,
        horizon_s: float = DEFAULT_HORIZON_S,
        turn_cost_s: float = DEFAULT_TURN_COST_S,
        evaluate_diagnosis=None,
        evaluate_mitigation=None,
    ):
        self.armed = armed
        self.sim = armed.sim
        self.horizon_s = float(horizon_s)
        self.turn_cost_s = float(turn_cost_s)
        self.calls: list[ToolCall] = []
        self.closed = False
        self.redactions = 0
        self.diagnosed_at: float | None = None
        self.mitigated_at: float | None = None
        self.diagnosis_text: str | None = None
        self.diagnosis_verdict = None
        self.mitigation_verdict = None
        self._evaluate_diagnosis = evaluate_diagnosis or _default_diagnosis_scorer(armed)
        self._evaluate_mitigation = evaluate_mitigation or _default_mitigation_scorer(armed)
        taboo = armed.sim.injectors.identifier_strings()
        self._taboo = sorted((s.lower() for s in taboo), key=len, reverse=True)

    # -- lifecycle --------------------------------------------------------

    def remaining_s(self) -> float:
        return max(0.0, self.horizon_s - self.sim.now())

    def _charge(self, tool: str, params: dict) -> float:
        cost = self.turn_cost_s
        if tool == "wait":
            cost = max(float(params.get("seconds", 0.0)), self.turn_cost_s)
        advance = min(cost, self.remaining_s())
        if advance > 0:
            self.sim.advance(advance)
        return advance

    def call(self, tool: str, params: dict | None = None) -> dict:
        params = dict(params or {})
        if self.closed:
            return self._seal(tool, params, ok=False, error="session closed", charge=False)
        if tool not in TOOLS:
            return self._seal(tool, params, ok=False, error=f"unknown tool {tool!r}", charge=False)
        waited = self._charge(tool, params)
        try:
            result = self._dispatch(tool, params, waited)
            envelope = self._seal(tool, params, ok=True, result=result)
        except ToolError as exc:
            envelope = self._seal(tool, params, ok=False, error=str(exc))
        if self.remaining_s() <= _EPS:
            self.closed = True
        return envelope

    def _seal(self, tool, params, *, ok, result=None, error=None, charge=True) -> dict:
        now = self.sim.now()
        envelope: dict = {"ok": ok, "now": round(now, 6), "remaining_s": round(self.remaining_s(), 6)}
        if ok:
            envelope["result"] = result
        else:
            envelope["error"] = error
        envelope = self._scrub(envelope)
        if charge:
            self.calls.append(
                ToolCall(len(self.calls), now, tool, params, classify_call(tool, params), ok)
            )
        return envelope

    def _scrub(self, envelope: dict) -> dict:
        text = json.dumps(envelope)
        low = text.lower()
        if not any(t in low for t in self._taboo):
            return envelope
        for t in self._taboo:
            idx = low.find(t)
            while idx != -1:
                text = text[:idx] + "[redacted]" + text[idx + len(t):]
                low = text.lower()
                self.redactions += 1
                idx = low.find(t)
        return json.loads(text)

    # -- tools ------------------------------------------------------------

    def _dispatch(self, tool: str, params: dict, waited: float) -> dict:
        store = self.sim.telemetry
        if tool == "metrics.query":
            series = params.get("series")
            if not series:
                return {"series_names": store.series_names()}
            points = store.query_metrics(
                series,
                labels=params.get("labels"),
                start=float(params.get("start", 0.0)),
                end=float(params.get("end", self.sim.now())),
                step=params.get("step"),
            )
            return {"points": [p.as_dict() for p in points]}
        if tool == "logs.search":
            hits, truncated = store.search_logs(
                pod=params.get("pod"),
                severity=params.get("severity"),
                contains=params.get("contains"),
                start=float(params.get("start", 0.0)),
                end=float(params.get("end", self.sim.now())),
                limit=int(params.get("limit", 200)),
            )
            return {"records": [r.as_dict() for r in hits], "truncated": truncated}
        if tool == "traces.get":
            traces = store.get_traces(
                service=params.get("service"),
                status=params.get("status"),
                start=float(params.get("start", 0.0)),
                end=float(params.get("end", self.sim.now())),
                limit=int(params.get("limit", 20)),
            )
            return {"traces": [t.as_dict() for t in traces]}
        if tool == "cluster.exec":
            verb = params.get("verb")
            if verb not in READ_VERBS + WRITE_VERBS:
                raise ToolError(f"unknown verb {verb!r}")
            call = VerbCall(
                verb=verb,
                target_kind=params.get("target_kind", ""),
                target=params.get("target", ""),
                payload=dict(params.get("payload") or {}),
            )
            outcome = self.sim.execute_verb(call)
            if not outcome.get("ok", False):
                raise ToolError(outcome.get("error", "verb failed"))
            return {"verb": verb, "output": outcome.get("result")}
        if tool == "wait":
            return {"waited_s": round(waited, 6)}
        if tool == "submit.diagnosis":
            text = str(params.get("text", "")).strip()
            if not text:
                raise ToolError("diagnosis text is required")
            first = self.diagnosed_at is None
            if first:
                self.diagnosed_at = self.sim.now()
                self.diagnosis_text = text
                self.diagnosis_verdict = self._evaluate_diagnosis(text)
            return {"recorded": True, "binding": first}
        if tool == "submit.mitigation":
            first = self.mitigated_at is None
            if first:
                self.mitigated_at = self.sim.now()
                # scored against live state right now; the verdict stays
                # hidden so an agent cannot probe it and retry
                self.mitigation_verdict = self._evaluate_mitigation()
            return {"accepted": True, "binding": first}
        raise ToolError(f"unknown tool {tool!r}")

    # -- reporting ----------------------------------------------------------

    def usage_counts(self) -> Counter:
        counts: Counter = Counter()
        for call in self.calls:
            if call.category == "submission":
                continue
            counts[call.category] += 1
        return counts

    def outcome(self) -> SessionOutcome:
        return SessionOutcome(
            diagnosed_at=self.diagnosed_at,
            mitigated_at=self.mitigated_at,
            diagnosis_verdict=self.diagnosis_verdict,
            mitigation_verdict=self.mitigation_verdict,
            calls=len(self.calls),
            redactions=self.redactions,
        )


class ToolError(RuntimeError):
    pass


def _default_diagnosis_scorer(armed):
    from .oracles import builtin_evaluate
    from .scenarios import load_manifest_doc

    doc = load_manifest_doc(armed.problem.manifest)
    components = [
        row["name"]
        for key in ("deployments", "services", "nodes", "configs")
        for row in doc.get(key, [])
    ]

    def scorer(text: str):
        return builtin_evaluate(text, armed.problem.ground_truth, components)

    return scorer


def _default_mitigation_scorer(armed):
    from .oracles import load_scoring_defaults, score_mitigation

    cfg = load_scoring_defaults().get("mitigation", {})

    def scorer():
        return score_mitigation(armed, cfg)

    return scorer


# ---------------------------------------------------------------------------
# transports
# ---------------------------------------------------------------------------


class InProcessGateway:
    """Same envelopes as the wire client, no sockets."""

    def __init__(self, session: GatewaySession):
        self.session = session
        self._next_id = 0

    def call(self, tool: str, params: dict | None = None) -> dict:
        self._next_id += 1
        envelope = self.session.call(tool, params)
        return {"v": PROTOCOL_VERSION, "id": self._next_id, **envelope}

    def close(self):
        pass


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        server: GatewayServer = self.server.gateway  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            reply = server.handle_line(line.decode("utf-8", errors="replace"))
            self.wfile.write(json.dumps(reply, sort_keys=True).encode() + b"\n")
            self.wfile.flush()


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class GatewayServer:
    """Line-delimited JSON protocol endpoint for one session.

    Request:  ``{"v": 1, "id": 7, "tool": "wait", "params": {"seconds": 30}}``
    Response: ``{"v": 1, "id": 7, "ok": true, "result": {...}, "now": ...,
    "remaining_s": ...}``. Requests are serialized; ids echo back untouched.
    """

    def __init__(self, session: GatewaySession, host: str = "127.0.0.1", port: int = 0):
        self.session = session
        self._lock = threading.Lock()
        self._server = _TCPServer((host, port), _LineHandler)
        self._server.gateway = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address  # type: ignore[return-value]

    def handle_line(self, line: str) -> dict:
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            return {"v": PROTOCOL_VERSION, "id": None, "ok": False, "error": "malformed request"}
        req_id = req.get("id") if isinstance(req, dict) else None
        if not isinstance(req, dict) or req.get("v") != PROTOCOL_VERSION:
            return {"v": PROTOCOL_VERSION, "id": req_id, "ok": False, "error": "unsupported protocol version"}
        tool = req.get("tool")
        if not isinstance(tool, str):
            return {"v": PROTOCOL_VERSION, "id": req_id, "ok": False, "error": "missing tool"}
        with self._lock:
            envelope = self.session.call(tool, req.get("params") or {})
        return {"v": PROTOCOL_VERSION, "id": req_id, **envelope}

    def start(self) -> tuple[str, int]:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self.address

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class GatewayClient:
    """Blocking client for the line protocol."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")
        self._next_id = 0

    def call(self, tool: str, params: dict | None = None) -> dict:
        self._next_id += 1
        req = {"v": PROTOCOL_VERSION, "id": self._next_id, "tool": tool, "params": params or {}}
        self._file.write(json.dumps(req, sort_keys=True).encode() + b"\n")
        self._file.flush()
        raw = self._file.readline()
        if not raw:
            raise ConnectionError("gateway closed the connection")
        reply = json.loads(raw)
        if reply.get("id") != self._next_id:
            raise ConnectionError(f"response id {reply.get('id')} != request id {self._next_id}")
        return reply

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
