"""Top-level simulation facade.

Wires the deterministic event loop to the cluster model, the fluid workload
engine, the telemetry store, and the fault-injection plane. One tick advances
the world in a fixed order:

1. cluster reconciliation (operators, quotas, replica convergence,
   scheduling, container starts, crash/backoff bookkeeping)
2. fluid workload step (queues, latency, retries, goodput, metrics, logs,
   traces)

Events scheduled on the loop (fault scripts, noise activations, agent verb
effects) fire before the tick handler at equal timestamps.
"""

from __future__ import annotations

from .cluster import ClusterState, HealthReport, VerbCall
from .faults import InjectorPlane
from .kernel import EventLoop, RngStreams
from .telemetry import TelemetryStore
from .workload import DependencyGraph, FluidEngine, WorkloadProfile

TICK_S = 0.1


class Simulation:
    def __init__(
        self,
        cluster: ClusterState,
        graph: DependencyGraph,
        profile: WorkloadProfile,
        seed: int = 0,
        tick: float = TICK_S,
    ):
        self.loop = EventLoop(tick=tick, seed=seed)
        self.rng = RngStreams(seed)
        self.cluster = cluster
        self.graph = graph
        self.profile = profile
        self.telemetry = TelemetryStore()
        self.engine = FluidEngine(
            graph=graph,
            profile=profile,
            cluster=cluster,
            telemetry=self.telemetry,
        )
        self.injectors = InjectorPlane(self)
        self.cluster.bind(
            now=lambda: self.loop.clock.now,
            log_sink=self.engine.emit_pod_log,
            crash_rng=self.rng.stream("faults"),
        )
        self.loop.add_tick_handler(self._on_tick)

    # -- time --------------------------------------------------------------

    def now(self) -> float:
        return self.loop.clock.now

    def advance(self, duration: float) -> None:
        self.loop.advance(duration)

    def run_until(self, t: float) -> None:
        self.loop.run_until(t)

    def schedule(self, delay: float, fn, label: str = "") -> None:
        self.loop.schedule(delay, fn, label=label)

    def schedule_at(self, t: float, fn, label: str = "") -> None:
        self.loop.schedule_at(t, fn, label=label)

    # -- tick pipeline -------------------------------------------------------

    def _on_tick(self, dt: float) -> None:
        now = self.loop.clock.now
        self.engine._now = now  # crash logs during reconcile carry this tick's time
        self.cluster.reconcile_step(dt)
        self.engine.step_fluid(dt, now)

    # -- agent/operator surface ----------------------------------------------

    def execute_verb(self, call: VerbCall) -> dict:
        call.issued_at = self.now()
        return self.cluster.execute_verb(call)

    def health(self, scope: list[str] | None = None, exclude: set[str] | None = None) -> HealthReport:
        return self.cluster.health_check(scope=scope, exclude=exclude)

    def snapshot(self) -> dict:
        snap = self.cluster.snapshot()
        snap["queues"] = {k: round(v, 9) for k, v in sorted(self.engine.queues.items())}
        snap["load_multiplier"] = self.engine.load_multiplier
        snap["now_us"] = self.loop.clock.now_us
        return snap
