"""Background disturbances: realistic-but-irrelevant symptoms during incidents.

A noise schedule draws two activations per 300 s period, each lasting 120 s
and self-recovering. Patterns:

* ``pause_restart_pod`` — one pod hangs for the window, then restarts;
* ``link_latency``    — +20 ms on one dependency edge;
* ``packet_drop``     — 2% of requests on one edge fail;
* ``node_stress``     — one node's effective capacity drops to 75%.

Eligibility is decided when the schedule is armed, from bootstrap placement:
a target is eligible only if it is *unrelated* to every root-cause target
(not the same object, not graph-adjacent, not co-located on the same node)
and the pattern is low-impact there (pausing a pod requires a second backend
or an off-path deployment). Draws use a dedicated RNG stream, so the same
seed yields the same schedule and two seeds differ.

Every activation is recorded with its window and the component names it
touches; verdict scoring uses that record to avoid charging the agent for
engineered background symptoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import cluster as cl

NOISE_PERIOD_S = 300.0
NOISE_PER_PERIOD = 2
NOISE_DURATION_S = 120.0
LINK_LATENCY_EXTRA_MS = 20.0
PACKET_DROP_FRACTION = 0.02
NODE_STRESS_FACTOR = 0.75

PATTERNS = ("link_latency", "node_stress", "packet_drop", "pause_restart_pod")


@dataclass
class NoiseActivation:
    pattern: str
    target: str  # deployment, node, or "caller->callee"
    start: float
    end: float
    touched: set[str] = field(default_factory=set)  # names to exclude from verdicts
    applied: bool = False
    state: dict = field(default_factory=dict)

    def overlaps(self, t: float) -> bool:
        return self.start <= t <= self.end

    def as_dict(self) -> dict:
        return {
            "pattern": self.pattern,
            "target": self.target,
            "start": self.start,
            "end": self.end,
            "touched": sorted(self.touched),
        }


def related_components(sim, root_targets: list[tuple[str, str]]) -> tuple[set[str], set[str]]:
    """(deployments, nodes) causally tied to the root-cause targets.

    Derived from bootstrap placement: the target itself, its graph
    neighbors, and every node hosting any of those deployments.
    """
    deps: set[str] = set()
    nodes: set[str] = set()
    for kind, name in root_targets:
        if kind == "deployment":
            deps.add(name)
        elif kind == "pod":
            pod = sim.cluster.pods.get(name)
            if pod is not None:
                deps.add(pod.deployment)
            else:  # pod named like "<deployment>-<n>"
                deps.add(name.rsplit("-", 1)[0])
        elif kind == "node":
            nodes.add(name)
            for pod in sim.cluster.pods.values():
                if pod.node == name:
                    deps.add(pod.deployment)
        elif kind == "config":
            cfg = sim.cluster.configs.get(name)
            if cfg is not None:
                deps.update(cfg.consumers)
        elif kind == "workload":
            deps.add(sim.graph.entry)
    for dep in sorted(deps):
        if dep in sim.graph.services:
            deps |= sim.graph.adjacent(dep)
    for pod in sim.cluster.pods.values():
        if pod.deployment in deps and pod.node:
            nodes.add(pod.node)
    return deps, nodes


def _entry_path(sim) -> set[str]:
    """Services reachable from the workload entry point."""
    seen = {sim.graph.entry}
    frontier = [sim.graph.entry]
    while frontier:
        name = frontier.pop()
        for edge in sim.graph.out_edges(name):
            if edge.callee not in seen:
                seen.add(edge.callee)
                frontier.append(edge.callee)
    return seen


def eligible_targets(sim, root_targets: list[tuple[str, str]]) -> dict[str, list[str]]:
    """Pattern -> sorted candidate targets, computed from bootstrap state."""
    rel_deps, rel_nodes = related_components(sim, root_targets)
    on_path = _entry_path(sim)

    pause: list[str] = []
    for dep in sorted(sim.cluster.deployments.values(), key=lambda d: d.name):
        if dep.name in rel_deps or dep.replicas < 1:
            continue
        if dep.name in on_path and dep.replicas < 2:
            continue  # pausing the only backend of a serving service is not noise
        if any(p.node in rel_nodes for p in sim.cluster.pods_of(dep.name)):
            continue
        pause.append(dep.name)

    edges: list[str] = []
    for edge in sorted(sim.graph.edges, key=lambda e: (e.caller, e.callee)):
        if edge.caller in rel_deps or edge.callee in rel_deps:
            continue
        edges.append(f"{edge.caller}->{edge.callee}")

    nodes: list[str] = []
    for node in sorted(sim.cluster.nodes.values(), key=lambda n: n.name):
        if node.name in rel_nodes:
            continue
        if any(
            p.node == node.name and p.deployment in rel_deps
            for p in sim.cluster.pods.values()
        ):
            continue
        nodes.append(node.name)

    return {
        "pause_restart_pod": pause,
        "link_latency": edges,
        "packet_drop": edges,
        "node_stress": nodes,
    }


class NoiseSchedule:
    """Pre-drawn disturbance schedule, applied via simulation events."""

    def __init__(
        self,
        sim,
        rng,
        root_targets: list[tuple[str, str]],
        horizon_s: float,
        period_s: float = NOISE_PERIOD_S,
        per_period: int = NOISE_PER_PERIOD,
        duration_s: float = NOISE_DURATION_S,
    ):
        self.sim = sim
        self.period_s = float(period_s)
        self.per_period = int(per_period)
        self.duration_s = float(duration_s)
        self.activations: list[NoiseActivation] = []
        candidates = eligible_targets(sim, root_targets)
        period_count = int(horizon_s // self.period_s) + (
            1 if horizon_s % self.period_s > 0 else 0
        )
        for period in range(period_count):
            for _ in range(self.per_period):
                usable = [p for p in PATTERNS if candidates[p]]
                if not usable:
                    continue
                pattern = rng.choice(usable)
                offset = rng.uniform(0.0, self.period_s - self.duration_s)
                target = rng.choice(candidates[pattern])
                start = period * self.period_s + offset
                if start >= horizon_s:
                    continue
                self.activations.append(
                    NoiseActivation(pattern, target, round(start, 3), round(start + self.duration_s, 3))
                )
        self.activations.sort(key=lambda a: (a.start, a.pattern, a.target))

    def arm(self) -> None:
        for act in self.activations:
            self.sim.schedule_at(act.start, lambda a=act: self._apply(a), label=f"noise+{act.pattern}")
            self.sim.schedule_at(act.end, lambda a=act: self._revert(a), label=f"noise-{act.pattern}")

    # -- pattern application -------------------------------------------------

    def _apply(self, act: NoiseActivation) -> None:
        sim = self.sim
        if act.pattern == "pause_restart_pod":
            pods = [p for p in sim.cluster.pods_of(act.target) if p.phase == cl.RUNNING]
            if not pods:
                return
            pod = pods[0]
            pod.paused = True
            act.state["pod"] = pod.name
            act.touched |= {act.target, pod.name}
            sim.engine.emit_pod_log(pod.name, "WARN", "liveness probe timed out")
        elif act.pattern == "node_stress":
            node = sim.cluster.nodes.get(act.target)
            if node is None:
                return
            act.state["stress_factor"] = node.stress_factor
            node.stress_factor *= NODE_STRESS_FACTOR
            act.touched.add(node.name)
        else:
            caller, callee = act.target.split("->")
            eff = sim.engine.edge_effects.setdefault((caller, callee), {})
            if act.pattern == "link_latency":
                act.state["extra_ms"] = eff.get("extra_ms", 0.0)
                eff["extra_ms"] = eff.get("extra_ms", 0.0) + LINK_LATENCY_EXTRA_MS
            else:
                act.state["drop"] = eff.get("drop", 0.0)
                eff["drop"] = min(1.0, eff.get("drop", 0.0) + PACKET_DROP_FRACTION)
            act.touched |= {caller, callee}
        act.applied = True

    def _revert(self, act: NoiseActivation) -> None:
        if not act.applied:
            return
        sim = self.sim
        if act.pattern == "pause_restart_pod":
            pod = sim.cluster.pods.get(act.state.get("pod", ""))
            if pod is not None and pod.paused:
                pod.paused = False
                pod.restart_count += 1
                sim.cluster.restart_events.append((sim.now(), pod.name, pod.deployment))
                sim.engine.emit_pod_log(pod.name, "WARN", "container restarted after probe failures")
                sim.engine.emit_pod_log(pod.name, "INFO", "Started container")
        elif act.pattern == "node_stress":
            node = sim.cluster.nodes.get(act.target)
            if node is not None:
                node.stress_factor = act.state["stress_factor"]
        else:
            caller, callee = act.target.split("->")
            eff = sim.engine.edge_effects.get((caller, callee))
            if eff is not None:
                if act.pattern == "link_latency":
                    eff["extra_ms"] = act.state["extra_ms"]
                else:
                    eff["drop"] = act.state["drop"]
                if not eff.get("extra_ms") and not eff.get("drop"):
                    sim.engine.edge_effects.pop((caller, callee), None)

    # -- verdict support -----------------------------------------------------

    @staticmethod
    def _effect_end(act: NoiseActivation) -> float:
        # a pause ends with a restart event that keeps the stability check
        # red for another RESTART_STABILITY_WINDOW_S
        if act.pattern == "pause_restart_pod":
            return act.end + cl.RESTART_STABILITY_WINDOW_S
        return act.end

    def active_at(self, t: float) -> list[NoiseActivation]:
        return [a for a in self.activations if a.start <= t <= self._effect_end(a)]

    def excluded_components(self, t: float) -> set[str]:
        out: set[str] = set()
        for act in self.active_at(t):
            out |= act.touched
            out.add(act.target)
        return out

    def masked_window(self, start: float, end: float) -> bool:
        """True if any activation's effect overlaps [start, end]."""
        return any(a.start <= end and self._effect_end(a) >= start for a in self.activations)
