"""Fluid request-flow model over the service dependency graph.

Per tick, each service is a fluid queue: latency = queue/capacity + base
service time. Callers retry slow callees — the per-edge amplification is

    r = 1                                if callee latency <= timeout
    r = min(retries + 1, ceil(latency / timeout))   otherwise

and the amplified demand propagates down the (acyclic) graph from the entry
service. Queues integrate ``max(0, arrivals - capacity) * dt``. This is the
minimal mechanism that exhibits metastability: a transient capacity dip pushes
latency past the timeout, retries multiply arrivals beyond nominal capacity,
and the storm outlives the trigger until queues are flushed (pod restarts) or
the retry budget is cut.

Goodput counts only requests that complete end-to-end within the client
timeout. Flow conservation holds exactly per service and tick:
arrivals = completions + queue growth + drops.

The engine also owns telemetry emission: per-service metric series (p50 is
the fluid latency, p99 a synthetic 2x tail), baseline INFO logs (~1 per pod
per 10 s), and sampled trace trees whose spans follow graph edges — a
timed-out edge shows the repeated retry spans an engineer would see.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from . import cluster as cl
from .telemetry import DEFAULT_TRACE_SAMPLE_RATE, TelemetryStore, TraceSpan

LATENCY_SENTINEL_MS = 3_600_000.0  # stands in for "infinite" in JSON-safe output
TRACE_RING_CAPACITY = 5000
METRICS_INTERVAL_S = 5.0
LOG_INTERVAL_S = 10.0

_BASELINE_LOG_MESSAGES = (
    "request served status=200",
    "heartbeat ok",
    "connection pool size=8 idle=6",
    "cache hit ratio 0.93",
)


@dataclass(frozen=True)
class ServiceSpec:
    """A vertex of the dependency graph; maps 1:1 onto a Deployment."""

    name: str
    capacity_rps_per_replica: float
    base_latency_ms: float


@dataclass
class DependencyEdge:
    caller: str
    callee: str
    timeout_ms: float
    retries: int
    # optional live binding into an AppConfig consumed by the caller:
    # {"object": name, "timeout_key": key, "retries_key": key}
    config_ref: dict | None = None


@dataclass
class DependencyGraph:
    entry: str
    services: dict[str, ServiceSpec]
    edges: list[DependencyEdge]

    def __post_init__(self):
        if self.entry not in self.services:
            raise ValueError(f"entry service {self.entry!r} is not in the graph")
        for e in self.edges:
            for end in (e.caller, e.callee):
                if end not in self.services:
                    raise ValueError(f"edge endpoint {end!r} is not in the graph")
        self.topo_order()  # raises on cycles

    def out_edges(self, name: str) -> list[DependencyEdge]:
        return [e for e in self.edges if e.caller == name]

    def in_edges(self, name: str) -> list[DependencyEdge]:
        return [e for e in self.edges if e.callee == name]

    def edge_set(self) -> set[tuple[str, str]]:
        return {(e.caller, e.callee) for e in self.edges}

    def adjacent(self, name: str) -> set[str]:
        out = set()
        for e in self.edges:
            if e.caller == name:
                out.add(e.callee)
            if e.callee == name:
                out.add(e.caller)
        return out

    def topo_order(self) -> list[str]:
        indeg = {s: 0 for s in self.services}
        for e in self.edges:
            indeg[e.callee] += 1
        frontier = sorted(s for s, d in indeg.items() if d == 0)
        order: list[str] = []
        while frontier:
            name = frontier.pop(0)
            order.append(name)
            for e in sorted(self.out_edges(name), key=lambda e: e.callee):
                indeg[e.callee] -= 1
                if indeg[e.callee] == 0:
                    frontier.append(e.callee)
            frontier.sort()
        if len(order) != len(self.services):
            raise ValueError("dependency graph must be acyclic")
        return order


@dataclass
class WorkloadProfile:
    offered_rps: float
    client_timeout_ms: float
    ramp: list[tuple[float, float]] = field(default_factory=list)
    trace_sample_rate: float = DEFAULT_TRACE_SAMPLE_RATE

    def rate_at(self, t: float) -> float:
        rate = self.offered_rps
        for at, rps in sorted(self.ramp):
            if t >= at:
                rate = rps
        return rate


@dataclass
class ServiceRuntime:
    """Per-tick snapshot of one service's fluid state."""

    name: str
    queue_before: float
    queue_after: float
    effective_capacity: float
    latency_s: float
    arrivals_rps: float
    completions_rps: float
    drops_rps: float
    retry_amplification: float
    available: bool
    error_rate: float
    goodput_rps: float


@dataclass
class GoodputSample:
    t: float
    offered_rps: float
    goodput_rps: float
    ratio: float


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


class FluidEngine:
    """Advances the fluid model one tick at a time and emits telemetry."""

    def __init__(
        self,
        graph: DependencyGraph,
        profile: WorkloadProfile,
        cluster: cl.ClusterState,
        telemetry: TelemetryStore,
    ):
        self.graph = graph
        self.profile = profile
        self.cluster = cluster
        self.telemetry = telemetry
        self.load_multiplier = 1.0  # mutated by overload conditions
        self.queues: dict[str, float] = {s: 0.0 for s in graph.services}
        self.edge_effects: dict[tuple[str, str], dict] = {}
        self.goodput_samples: list[GoodputSample] = []
        self.last_runtimes: dict[str, ServiceRuntime] = {}
        self._now = 0.0
        self._metrics_due = 0.0
        self._trace_ok_credit = 0.0
        self._trace_err_credit = 0.0
        self._trace_counter = 0
        self._span_counter = 0
        self._log_counter = 0
        self._order = graph.topo_order()

    # -- live parameter resolution ---------------------------------------

    def edge_params(self, edge: DependencyEdge) -> tuple[float, int]:
        """Current (timeout_ms, retries) for an edge.

        With a config binding, values come from the *applied* snapshot of the
        caller's deployment — i.e. whatever the pods last read at start time,
        not the live ConfigObject. That staleness is the point.
        """
        timeout_ms, retries = edge.timeout_ms, edge.retries
        if edge.config_ref:
            ref = edge.config_ref
            t = self.cluster.applied_value(edge.caller, ref["object"], ref["timeout_key"])
            r = self.cluster.applied_value(edge.caller, ref["object"], ref["retries_key"])
            if t is not None:
                timeout_ms = float(t)
            if r is not None:
                retries = int(r)
        return timeout_ms, retries

    def _capacity_and_availability(self, name: str) -> tuple[float, bool, dict, float]:
        dep = self.cluster.deployments.get(name)
        if dep is None:
            return 0.0, False, {}, 1.0
        spec = self.graph.services[name]
        defect = dep.active_defect()
        cap = 0.0
        min_stress = 1.0
        for pod in self.cluster.pods_of(name):
            if pod.phase != cl.RUNNING or pod.paused:
                continue
            node = self.cluster.node_of(pod)
            factor = node.stress_factor if node else 1.0
            cap += spec.capacity_rps_per_replica * factor
            min_stress = min(min_stress, factor)
        cap *= float(defect.get("capacity_factor", 1.0))
        svc = self.cluster.service_for_deployment(name)
        if svc is not None:
            available = self.cluster.service_routes(svc)
        else:
            available = any(
                p.phase == cl.RUNNING and not p.paused for p in self.cluster.pods_of(name)
            )
        return cap, available, defect, min_stress

    # -- the tick ---------------------------------------------------------

    def step_fluid(self, dt: float, now: float) -> dict[str, ServiceRuntime]:
        self._now = now
        # restarted deployments drop their in-flight work
        for name in self.cluster.queue_flushes:
            if name in self.queues:
                self.queues[name] = 0.0
        self.cluster.queue_flushes.clear()

        caps: dict[str, float] = {}
        avail: dict[str, bool] = {}
        defects: dict[str, dict] = {}
        latency: dict[str, float] = {}
        for name in self._order:
            cap, ok, defect, min_stress = self._capacity_and_availability(name)
            caps[name], avail[name], defects[name] = cap, ok, defect
            spec = self.graph.services[name]
            base_s = (spec.base_latency_ms + float(defect.get("latency_add_ms", 0.0))) / 1000.0
            # a stressed node slows every request its pods serve, not just
            # the aggregate: the slowest replica dominates observed latency
            base_s /= max(min_stress, 1e-6)
            latency[name] = (self.queues[name] / cap + base_s) if cap > 0 else math.inf

        # demand propagation with retry amplification
        offered = self.profile.rate_at(now) * self.load_multiplier
        arrivals: dict[str, float] = {s: 0.0 for s in self._order}
        arrivals[self.graph.entry] = offered
        amp: dict[str, float] = {s: 1.0 for s in self._order}
        for name in self._order:
            for edge in sorted(self.graph.out_edges(name), key=lambda e: e.callee):
                timeout_ms, retries = self.edge_params(edge)
                extra_ms = self.edge_effects.get((edge.caller, edge.callee), {}).get("extra_ms", 0.0)
                seen_latency = latency[edge.callee] + extra_ms / 1000.0
                timeout_s = timeout_ms / 1000.0
                if seen_latency <= timeout_s:
                    r = 1.0
                elif math.isinf(seen_latency):
                    r = float(retries + 1)
                else:
                    r = float(min(retries + 1, math.ceil(seen_latency / timeout_s)))
                amp[edge.callee] = max(amp[edge.callee], r)
                arrivals[edge.callee] += arrivals[edge.caller] * r

        # queue integration + conservation bookkeeping
        runtimes: dict[str, ServiceRuntime] = {}
        for name in self._order:
            q_before = self.queues[name]
            arr = arrivals[name]
            if avail[name]:
                processed = min(q_before + arr * dt, caps[name] * dt)
                q_after = q_before + arr * dt - processed
                completions = processed / dt
                drops = 0.0
            else:
                q_after = q_before
                completions = 0.0
                drops = arr
            self.queues[name] = q_after
            runtimes[name] = ServiceRuntime(
                name=name,
                queue_before=q_before,
                queue_after=q_after,
                effective_capacity=caps[name],
                latency_s=latency[name],
                arrivals_rps=arr,
                completions_rps=completions,
                drops_rps=drops,
                retry_amplification=amp[name],
                available=avail[name],
                error_rate=0.0,
                goodput_rps=0.0,
            )

        # end-to-end success along the graph
        success: dict[str, float] = {}
        e2e_latency: dict[str, float] = {}
        for name in reversed(self._order):
            own = (1.0 - float(defects[name].get("error_rate", 0.0))) if avail[name] else 0.0
            lat = latency[name]
            worst_child = 0.0
            for edge in sorted(self.graph.out_edges(name), key=lambda e: e.callee):
                timeout_ms, _ = self.edge_params(edge)
                eff = self.edge_effects.get((edge.caller, edge.callee), {})
                seen = latency[edge.callee] + eff.get("extra_ms", 0.0) / 1000.0
                edge_ok = 1.0 if seen <= timeout_ms / 1000.0 else 0.0
                edge_ok *= 1.0 - float(eff.get("drop", 0.0))
                own *= edge_ok * success[edge.callee]
                worst_child = max(worst_child, e2e_latency[edge.callee] + eff.get("extra_ms", 0.0) / 1000.0)
            success[name] = own
            e2e_latency[name] = (lat if not math.isinf(lat) else LATENCY_SENTINEL_MS / 1000.0) + worst_child

        ratio = success[self.graph.entry]
        if e2e_latency[self.graph.entry] > self.profile.client_timeout_ms / 1000.0:
            ratio = 0.0
        goodput = offered * ratio
        entry_rt = runtimes[self.graph.entry]
        entry_rt.goodput_rps = goodput
        for name in self._order:
            rt = runtimes[name]
            total = rt.arrivals_rps
            failed = rt.drops_rps + rt.arrivals_rps * float(defects[name].get("error_rate", 0.0))
            rt.error_rate = min(1.0, failed / total) if total > 0 else 0.0
        self.goodput_samples.append(GoodputSample(now, offered, goodput, ratio))
        self.last_runtimes = runtimes

        self._update_pod_usage(runtimes)
        self._emit_baseline_logs(dt, now)
        self._emit_metrics(dt, now, runtimes, offered, goodput)
        self._emit_traces(dt, now, offered, goodput, latency, success)
        return runtimes

    # -- telemetry ----------------------------------------------------------

    def _update_pod_usage(self, runtimes: dict[str, ServiceRuntime]) -> None:
        for name, rt in runtimes.items():
            util = 0.0
            if rt.effective_capacity > 0:
                util = min(1.0, rt.arrivals_rps / rt.effective_capacity)
            for pod in self.cluster.pods_of(name):
                if pod.phase == cl.RUNNING:
                    pod.cpu_usage_m = pod.requests_cpu_m * (0.05 + 0.95 * util)
                else:
                    pod.cpu_usage_m = 0.0

    def _emit_baseline_logs(self, dt: float, now: float) -> None:
        for pod in sorted(self.cluster.pods.values(), key=lambda p: p.name):
            if pod.phase != cl.RUNNING or pod.paused:
                continue
            offset = (_stable_hash(pod.name) % 100) / 10.0
            phase_pos = (now + offset) % LOG_INTERVAL_S
            if phase_pos < dt:
                msg = _BASELINE_LOG_MESSAGES[
                    (_stable_hash(pod.name) + int((now + offset) // LOG_INTERVAL_S))
                    % len(_BASELINE_LOG_MESSAGES)
                ]
                self.emit_pod_log(pod.name, "INFO", msg)

    def emit_pod_log(self, pod_name: str, severity: str, message: str) -> None:
        rec = self.telemetry.emit_log(pod_name, self._now, severity, message)
        pod = self.cluster.pods.get(pod_name)
        if pod is not None:
            pod.container_log.append(rec)

    def _emit_metrics(self, dt, now, runtimes, offered, goodput) -> None:
        if now + 1e-9 < self._metrics_due:
            return
        self._metrics_due = now + METRICS_INTERVAL_S
        em = self.telemetry.emit_metric
        for name in self._order:
            rt = runtimes[name]
            lab = {"service": name}
            p50 = min(rt.latency_s * 1000.0, LATENCY_SENTINEL_MS)
            em("service.latency_p50_ms", lab, now, round(p50, 3))
            em("service.latency_p99_ms", lab, now, round(min(2.0 * p50, LATENCY_SENTINEL_MS), 3))
            em("service.queue_depth", lab, now, round(rt.queue_after, 3))
            em("service.arrival_rps", lab, now, round(rt.arrivals_rps, 3))
            em("service.throughput_rps", lab, now, round(rt.completions_rps, 3))
            em("service.error_rate", lab, now, round(rt.error_rate, 6))
        em("client.offered_rps", {}, now, round(offered, 3))
        em("client.goodput_rps", {}, now, round(goodput, 3))
        for node in sorted(self.cluster.nodes.values(), key=lambda n: n.name):
            pods_here = [
                p for p in self.cluster.pods.values() if p.node == node.name and p.phase != cl.TERMINATING
            ]
            burn = (1.0 - node.stress_factor) * node.cpu_millicores
            cpu = sum(p.cpu_usage_m for p in pods_here) + burn
            em("node.cpu_used_pct", {"node": node.name}, now, round(100.0 * cpu / node.cpu_millicores, 2))
            em(
                "node.mem_used_pct",
                {"node": node.name},
                now,
                round(100.0 * sum(p.requests_mem_mib for p in pods_here) / node.mem_mib, 2),
            )

    def _next_span_id(self) -> str:
        self._span_counter += 1
        return f"s{self._span_counter:08d}"

    def _build_trace(self, now: float, latency: dict[str, float], success: dict[str, float], failing: bool) -> TraceSpan:
        self._trace_counter += 1
        trace_id = f"t{self._trace_counter:08d}"

        def span_for(name: str, parent: str | None, depth: int) -> TraceSpan:
            lat = latency[name]
            dur = min(lat if not math.isinf(lat) else LATENCY_SENTINEL_MS / 1000.0, 3600.0)
            ok_here = success[name] > 0.5
            span = TraceSpan(
                trace_id=trace_id,
                span_id=self._next_span_id(),
                parent_id=parent,
                service=name,
                start=now,
                duration=round(dur, 6),
                status="ok" if (ok_here or not failing) else "error",
            )
            if depth > 6:
                return span
            for edge in sorted(self.graph.out_edges(name), key=lambda e: e.callee):
                timeout_ms, retries = self.edge_params(edge)
                eff = self.edge_effects.get((edge.caller, edge.callee), {})
                seen = latency[edge.callee] + eff.get("extra_ms", 0.0) / 1000.0
                if failing and seen > timeout_ms / 1000.0:
                    # the caller's view of a timed-out edge: back-to-back retries
                    attempts = int(min(retries + 1, 6))
                    for i in range(attempts):
                        span.children.append(
                            TraceSpan(
                                trace_id=trace_id,
                                span_id=self._next_span_id(),
                                parent_id=span.span_id,
                                service=edge.callee,
                                start=round(now + i * timeout_ms / 1000.0, 6),
                                duration=round(timeout_ms / 1000.0, 6),
                                status="timeout",
                            )
                        )
                else:
                    span.children.append(span_for(edge.callee, span.span_id, depth + 1))
            return span

        return span_for(self.graph.entry, None, 0)

    def _emit_traces(self, dt, now, offered, goodput, latency, success) -> None:
        rate = self.profile.trace_sample_rate
        self._trace_ok_credit += goodput * dt * rate
        self._trace_err_credit += max(0.0, offered - goodput) * dt * rate
        emitted = 0
        while self._trace_ok_credit >= 1.0 and emitted < 50:
            self._trace_ok_credit -= 1.0
            self.telemetry.emit_trace(self._build_trace(now, latency, success, failing=False))
            emitted += 1
        while self._trace_err_credit >= 1.0 and emitted < 100:
            self._trace_err_credit -= 1.0
            self.telemetry.emit_trace(self._build_trace(now, latency, success, failing=True))
            emitted += 1
        if len(self.telemetry.traces) > TRACE_RING_CAPACITY:
            del self.telemetry.traces[: len(self.telemetry.traces) - TRACE_RING_CAPACITY]
