"""Baseline remediation policies that drive a gateway session.

Three reference points, not serious SRE automation:

- ``restart_loop`` restarts whatever looks unready and declares victory when
  the cluster has been quiet for a few polls. It can only fix faults that a
  restart actually clears.
- ``greedy_first_anomaly`` runs one fixed-priority investigation pass
  (pod phases, then error rates, then latency, then error logs), blames the
  first anomaly it sees, restarts it once, and submits.
- ``oracle_informed`` cheats: it holds a reference to the armed problem,
  applies each injector's scripted fix, and submits the scenario's reference
  root-cause explanation. It exists to calibrate the scoring ceiling.

All agents talk to the simulation exclusively through gateway tool calls, so
they pay the same time costs as any external agent; ``oracle_informed``
additionally reads privileged state to decide *when* to act.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .faults import INJECTORS

POLL_INTERVAL_S = 15.0
RESTART_COOLDOWN_S = 60.0
HEALTHY_POLLS_TO_DECLARE = 3


def _dep_of(pod_row: dict) -> str:
    return pod_row.get("deployment") or pod_row["name"].rsplit("-", 1)[0]


class RestartLoopAgent:
    """Restart anything unready; submit once the cluster looks quiet."""

    def run(self, gateway, armed=None) -> None:
        diagnosed = False
        mitigated = False
        healthy_streak = 0
        last_restart: dict[str, float] = {}
        while True:
            r = gateway.call("cluster.exec", {"verb": "get", "target_kind": "deployments"})
            if not r["ok"]:
                return
            deps = r["result"]["output"]
            r = gateway.call("cluster.exec", {"verb": "get", "target_kind": "pods"})
            if not r["ok"]:
                return
            pods = r["result"]["output"]
            now = r["now"]
            stuck = [p for p in pods if p["phase"] not in ("Running", "Terminating")]
            unready = [d for d in deps if d["ready"] < d["replicas"]]
            if unready or stuck:
                healthy_streak = 0
                if not diagnosed:
                    gateway.call(
                        "submit.diagnosis", {"text": self._diagnosis(unready, stuck)}
                    )
                    diagnosed = True
                suspects = {d["name"] for d in unready} | {_dep_of(p) for p in stuck}
                for name in sorted(suspects):
                    if now - last_restart.get(name, -1e9) < RESTART_COOLDOWN_S:
                        continue
                    gateway.call(
                        "cluster.exec",
                        {"verb": "restart", "target_kind": "deployment", "target": name},
                    )
                    last_restart[name] = now
            else:
                healthy_streak += 1
                if diagnosed and not mitigated and healthy_streak >= HEALTHY_POLLS_TO_DECLARE:
                    gateway.call(
                        "submit.mitigation",
                        {"note": "restarted unready deployments; all pods report ready"},
                    )
                    return
            r = gateway.call("wait", {"seconds": POLL_INTERVAL_S})
            if not r["ok"] or r["remaining_s"] <= 0:
                return

    @staticmethod
    def _diagnosis(unready: list[dict], stuck: list[dict]) -> str:
        if stuck:
            pod = stuck[0]
            return (
                f"Pod {pod['name']} is in phase {pod['phase']}; deployment "
                f"{_dep_of(pod)} is not fully ready. Restarting the deployment "
                f"to replace the pod."
            )
        dep = unready[0]
        return (
            f"Deployment {dep['name']} has {dep['ready']}/{dep['replicas']} pods "
            f"ready. Restarting it to recover."
        )


class GreedyFirstAnomalyAgent:
    """One investigation pass in fixed priority order, then one restart."""

    ERROR_RATE_THRESHOLD = 0.05
    LATENCY_FACTOR = 2.0
    settle_s = 60.0

    def run(self, gateway, armed=None) -> None:
        r = gateway.call("wait", {"seconds": self.settle_s})
        if not r["ok"]:
            return
        for _ in range(12):
            found = self._scan(gateway)
            if found is not None:
                break
            r = gateway.call("wait", {"seconds": 60.0})
            if not r["ok"] or r["remaining_s"] <= 0:
                return
        if found is None:
            return  # nothing anomalous surfaced; let the run time out
        component, evidence = found
        gateway.call(
            "submit.diagnosis",
            {"text": f"{component} is the failing component: {evidence}. Restarting {component}."},
        )
        gateway.call(
            "cluster.exec",
            {"verb": "restart", "target_kind": "deployment", "target": component},
        )
        gateway.call("wait", {"seconds": 90.0})
        gateway.call("submit.mitigation", {"note": f"restarted {component}"})

    def _scan(self, gateway) -> tuple[str, str] | None:
        r = gateway.call("cluster.exec", {"verb": "get", "target_kind": "pods"})
        if not r["ok"]:
            return None
        now = r["now"]
        for pod in r["result"]["output"]:
            if pod["phase"] not in ("Running", "Terminating"):
                return _dep_of(pod), f"pod {pod['name']} stuck in {pod['phase']}"
        r = gateway.call(
            "metrics.query",
            {"series": "service.error_rate", "start": max(0.0, now - 120.0), "end": now},
        )
        if r["ok"]:
            worst: dict[str, float] = {}
            for point in r["result"]["points"]:
                svc = point["labels"].get("service", "")
                worst[svc] = max(worst.get(svc, 0.0), point["value"])
            for svc in sorted(worst):
                if worst[svc] > self.ERROR_RATE_THRESHOLD:
                    return svc, f"error rate peaked at {worst[svc]:.2f}"
        r = gateway.call(
            "metrics.query",
            {"series": "service.latency_p50_ms", "start": 0.0, "end": now},
        )
        if r["ok"]:
            series: dict[str, list[tuple[float, float]]] = {}
            for point in r["result"]["points"]:
                svc = point["labels"].get("service", "")
                series.setdefault(svc, []).append((point["timestamp"], point["value"]))
            for svc in sorted(series):
                points = sorted(series[svc])
                baseline = [v for t, v in points if t <= self.settle_s]
                recent = [v for t, v in points if t >= now - 60.0]
                if baseline and recent:
                    base = sum(baseline) / len(baseline)
                    cur = sum(recent) / len(recent)
                    if base > 0 and cur > self.LATENCY_FACTOR * base:
                        return svc, f"p50 latency {cur:.1f}ms vs baseline {base:.1f}ms"
        r = gateway.call(
            "logs.search",
            {"severity": "ERROR", "start": max(0.0, now - 300.0), "end": now, "limit": 5},
        )
        if r["ok"] and r["result"]["records"]:
            rec = r["result"]["records"][-1]
            return rec["pod"].rsplit("-", 1)[0], f"error log: {rec['message'][:80]}"
        return None


class OracleInformedAgent:
    """Privileged ceiling agent: applies the scripted fix, submits the
    reference explanation, and waits for a provably clean window."""

    settle_after_clear_s = 90.0
    max_polls = 80

    def run(self, gateway, armed=None) -> None:
        if armed is None:
            raise ValueError("oracle_informed requires privileged problem access")
        r = gateway.call("wait", {"seconds": 1.0})
        if not r["ok"]:
            return
        target_t = armed.problem.max_scripted_time() + 5.0
        if r["now"] < target_t:
            r = gateway.call("wait", {"seconds": target_t - r["now"]})
            if not r["ok"]:
                return
        for handle in armed.root_handles():
            injector = INJECTORS[handle.spec.injector]
            for call in injector.suggested_fix(armed.sim, handle):
                gateway.call(
                    "cluster.exec",
                    {
                        "verb": call.verb,
                        "target_kind": call.target_kind,
                        "target": call.target,
                        "payload": dict(call.payload),
                    },
                )
        gateway.call("submit.diagnosis", {"text": armed.problem.summary})
        for _ in range(self.max_polls):
            cleared = armed.faults_cleared()
            healthy = armed.sim.health(exclude=armed.excluded_components()).healthy
            if cleared and healthy:
                break
            r = gateway.call("wait", {"seconds": POLL_INTERVAL_S})
            if not r["ok"] or r["remaining_s"] <= 0:
                return
        r = gateway.call("wait", {"seconds": self.settle_after_clear_s})
        if not r["ok"]:
            return
        gateway.call("submit.mitigation", {"note": "reverted the injected fault"})


@dataclass(frozen=True)
class AgentSpec:
    name: str
    factory: Callable[[], object]
    privileged: bool = False
    description: str = ""


AGENTS: dict[str, AgentSpec] = {
    spec.name: spec
    for spec in (
        AgentSpec(
            "restart_loop",
            RestartLoopAgent,
            description="restarts unready deployments until the cluster looks quiet",
        ),
        AgentSpec(
            "greedy_first_anomaly",
            GreedyFirstAnomalyAgent,
            description="single fixed-order anomaly scan, one restart, one submission",
        ),
        AgentSpec(
            "oracle_informed",
            OracleInformedAgent,
            privileged=True,
            description="privileged ceiling: scripted fix plus reference explanation",
        ),
    )
}


def build_agent(name: str):
    try:
        spec = AGENTS[name]
    except KeyError:
        raise KeyError(f"unknown agent {name!r}; known: {sorted(AGENTS)}") from None
    return spec.factory()
