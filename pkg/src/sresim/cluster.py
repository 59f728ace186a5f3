"""Simulated Kubernetes-like cluster: objects, verbs, and the reconciler.

The model is deliberately small but honest about the failure-relevant
mechanics:

* pods move through a strict phase machine (Pending, Running,
  CrashLoopBackOff, ImagePullBackOff, Failed, Terminating) and crash-looping
  containers retry with exponential backoff (10 s, 20 s, 40 s, ... capped at
  300 s);
* deployments own pods; editing the pod template bumps the generation and
  rolls every pod, which is also how config staleness works — consumers
  snapshot their ConfigObjects when a pod starts and never re-read them until
  the next restart;
* services route only to Running pods matching the selector, and traffic
  flows only when target_port matches a port the pods actually serve;
* fail-stop (Failed) pods stay down until something recreates them; the
  controller replaces deleted pods but does not resurrect Failed ones.

Agent interaction happens exclusively through ``execute_verb``. The verb set
partitions into reads (get, describe, logs, top) which never mutate state,
and writes (everything else) which mutate and append to the audit log.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

# Pod phases
PENDING = "Pending"
RUNNING = "Running"
CRASHLOOP = "CrashLoopBackOff"
IMAGEPULL = "ImagePullBackOff"
FAILED = "Failed"
TERMINATING = "Terminating"

PHASES = (PENDING, RUNNING, CRASHLOOP, IMAGEPULL, FAILED, TERMINATING)

# Allowed phase transitions (from -> set of to). "removed" is modeled as the
# pod leaving the pod table, only legal from Terminating.
PHASE_GRAPH = {
    PENDING: {RUNNING, IMAGEPULL, TERMINATING},
    RUNNING: {CRASHLOOP, FAILED, TERMINATING},
    CRASHLOOP: {RUNNING, TERMINATING},
    IMAGEPULL: {RUNNING, TERMINATING},
    FAILED: {TERMINATING},
    TERMINATING: set(),
}

READ_VERBS = ("get", "describe", "logs", "top")
WRITE_VERBS = (
    "patch",
    "delete",
    "restart",
    "scale",
    "apply",
    "set_env",
    "run_probe",
    "port_forward",
)
ALL_VERBS = READ_VERBS + WRITE_VERBS

POD_START_DELAY_S = 2.0
CRASH_GRACE_S = 2.0
BACKOFF_BASE_S = 10.0
BACKOFF_CAP_S = 300.0
RESTART_STABILITY_WINDOW_S = 60.0

CONFIG_KINDS = ("AppConfig", "PlatformConfig", "Quota")


def crash_backoff(prior_crashes: int) -> float:
    """Exponential restart backoff: 10 s, 20 s, 40 s, ... capped at 300 s."""
    return min(BACKOFF_BASE_S * (2**prior_crashes), BACKOFF_CAP_S)


@dataclass
class DiskState:
    read_error_prob: float = 0.0
    affected_paths: list[str] = field(default_factory=list)

    def affects(self, mount_path: str) -> bool:
        if self.read_error_prob <= 0:
            return False
        if not self.affected_paths:
            return True
        return any(mount_path.startswith(p) for p in self.affected_paths)


@dataclass
class Node:
    name: str
    cpu_millicores: int
    mem_mib: int
    disk: DiskState = field(default_factory=DiskState)
    cordoned: bool = False
    labels: dict[str, str] = field(default_factory=dict)
    kernel_log: list[tuple[float, str]] = field(default_factory=list)
    stress_factor: float = 1.0  # capacity multiplier; <1 under cpu stress


@dataclass
class PodTemplate:
    env: dict[str, str] = field(default_factory=dict)
    ports: list[int] = field(default_factory=list)
    requests_cpu_m: int = 100
    requests_mem_mib: int = 128
    limit_cpu_m: int | None = None
    limit_mem_mib: int | None = None
    volumes: list[str] = field(default_factory=list)
    node_selector: dict[str, str] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)

    def copy(self) -> "PodTemplate":
        return PodTemplate(
            env=dict(self.env),
            ports=list(self.ports),
            requests_cpu_m=self.requests_cpu_m,
            requests_mem_mib=self.requests_mem_mib,
            limit_cpu_m=self.limit_cpu_m,
            limit_mem_mib=self.limit_mem_mib,
            volumes=list(self.volumes),
            node_selector=dict(self.node_selector),
            labels=dict(self.labels),
        )


@dataclass
class Deployment:
    name: str
    replicas: int
    image: str
    template: PodTemplate
    generation: int = 1
    role: str = "workload"  # workload | observability | operator | database
    tags: list[str] = field(default_factory=list)
    manages: str | None = None  # operator role: deployment it reconciles
    managed_replicas: int | None = None  # operator's desired count for it
    known_good_image: str = ""
    required_env: list[str] = field(default_factory=list)
    config_refs: list[str] = field(default_factory=list)  # consumed ConfigObjects
    config_checks: list[dict] = field(default_factory=list)
    # image tag -> behavior defect while that tag is deployed
    image_defects: dict[str, dict] = field(default_factory=dict)

    def active_defect(self) -> dict:
        return self.image_defects.get(self.image, {})

    def labels(self) -> dict[str, str]:
        return {"app": self.name, **self.template.labels}


@dataclass
class Pod:
    name: str
    deployment: str
    generation: int
    image: str
    env: dict[str, str]
    ports: list[int]
    requests_cpu_m: int
    requests_mem_mib: int
    limit_mem_mib: int | None
    volumes: list[str]
    labels: dict[str, str]
    created_at: float
    phase: str = PENDING
    node: str | None = None
    start_at: float | None = None  # when a scheduled pod becomes Running
    started_at: float | None = None  # last transition into Running
    restart_count: int = 0
    crash_cycles: int = 0
    backoff_until: float | None = None
    crash_message: str | None = None
    condition: str = ""
    paused: bool = False  # held down by a transient disturbance
    cpu_usage_m: float = 0.0
    container_log: list = field(default_factory=list)


@dataclass
class Service:
    name: str
    selector: dict[str, str]
    port: int
    target_port: int


@dataclass
class ConfigObject:
    name: str
    kind: str  # AppConfig | PlatformConfig | Quota
    data: dict
    consumers: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in CONFIG_KINDS:
            raise ValueError(f"unknown config kind {self.kind!r}")


@dataclass
class VerbCall:
    verb: str
    target_kind: str = ""
    target: str = ""
    payload: dict = field(default_factory=dict)
    issued_at: float = 0.0

    @property
    def is_read(self) -> bool:
        return self.verb in READ_VERBS


@dataclass
class HealthReport:
    healthy: bool
    reasons: list[str]
    checked_pods: int
    at: float


class ClusterState:
    """All cluster objects plus the controller and verb executor."""

    def __init__(self):
        self.nodes: dict[str, Node] = {}
        self.deployments: dict[str, Deployment] = {}
        self.pods: dict[str, Pod] = {}
        self.services: dict[str, Service] = {}
        self.configs: dict[str, ConfigObject] = {}
        self.image_registry: set[str] = set()
        self.audit_log: list[dict] = []
        self.restart_events: list[tuple[float, str, str]] = []  # (t, pod, deployment)
        self.phase_transitions: list[tuple[float, str, str, str]] = []
        self.applied_config: dict[str, dict[str, dict]] = {}  # deployment -> cfg name -> data
        self.queue_flushes: set[str] = set()  # deployments whose queues must reset
        self._pod_counter: dict[str, int] = {}
        # wiring (set by the simulation facade)
        self._now: Callable[[], float] = lambda: 0.0
        self._log: Callable[[str, str, str], None] = lambda pod, sev, msg: None
        self._crash_rng = None

    def bind(self, now: Callable[[], float], log_sink, crash_rng) -> None:
        self._now = now
        self._log = log_sink
        self._crash_rng = crash_rng

    # ------------------------------------------------------------------
    # object helpers
    # ------------------------------------------------------------------

    def pods_of(self, deployment: str) -> list[Pod]:
        return sorted(
            (p for p in self.pods.values() if p.deployment == deployment),
            key=lambda p: p.name,
        )

    def backend_pods(self, service: Service) -> list[Pod]:
        """Running pods matching the service selector (port-agnostic)."""
        out = []
        for pod in sorted(self.pods.values(), key=lambda p: p.name):
            if pod.phase != RUNNING:
                continue
            if all(pod.labels.get(k) == v for k, v in service.selector.items()):
                out.append(pod)
        return out

    def service_routes(self, service: Service) -> bool:
        """True when traffic can actually flow through the service."""
        return any(service.target_port in pod.ports for pod in self.backend_pods(service))

    def service_for_deployment(self, name: str) -> Service | None:
        dep = self.deployments.get(name)
        if dep is None:
            return None
        lab = dep.labels()
        for svc in sorted(self.services.values(), key=lambda s: s.name):
            if all(lab.get(k) == v for k, v in svc.selector.items()):
                return svc
        return None

    def node_of(self, pod: Pod) -> Node | None:
        return self.nodes.get(pod.node) if pod.node else None

    def _transition(self, pod: Pod, to: str) -> None:
        if to not in PHASE_GRAPH[pod.phase]:
            raise RuntimeError(f"illegal pod transition {pod.phase} -> {to} on {pod.name}")
        self.phase_transitions.append((self._now(), pod.name, pod.phase, to))
        pod.phase = to

    def _next_pod_name(self, deployment: str) -> str:
        n = self._pod_counter.get(deployment, 0) + 1
        self._pod_counter[deployment] = n
        return f"{deployment}-{n}"

    def create_pod(self, dep: Deployment) -> Pod:
        tpl = dep.template
        pod = Pod(
            name=self._next_pod_name(dep.name),
            deployment=dep.name,
            generation=dep.generation,
            image=dep.image,
            env=dict(tpl.env),
            ports=list(tpl.ports),
            requests_cpu_m=tpl.requests_cpu_m,
            requests_mem_mib=tpl.requests_mem_mib,
            limit_mem_mib=tpl.limit_mem_mib,
            volumes=list(tpl.volumes),
            labels=dep.labels(),
            created_at=self._now(),
        )
        self.pods[pod.name] = pod
        return pod

    def refresh_applied_config(self, deployment: str) -> None:
        dep = self.deployments[deployment]
        snapshot = {}
        for cfg_name in dep.config_refs:
            cfg = self.configs.get(cfg_name)
            if cfg is not None:
                snapshot[cfg_name] = dict(cfg.data)
        self.applied_config[deployment] = snapshot

    def applied_value(self, deployment: str, config: str, key: str, default=None):
        return self.applied_config.get(deployment, {}).get(config, {}).get(key, default)

    # ------------------------------------------------------------------
    # quota
    # ------------------------------------------------------------------

    def _quota_for(self, deployment: str) -> ConfigObject | None:
        for cfg in sorted(self.configs.values(), key=lambda c: c.name):
            if cfg.kind != "Quota":
                continue
            if not cfg.consumers or deployment in cfg.consumers:
                return cfg
        return None

    def _quota_usage(self, quota: ConfigObject) -> int:
        total = 0
        for pod in self.pods.values():
            if pod.phase == TERMINATING or pod.node is None:
                continue
            if quota.consumers and pod.deployment not in quota.consumers:
                continue
            total += pod.requests_mem_mib
        return total

    # ------------------------------------------------------------------
    # reconciliation — one controller pass per tick
    # ------------------------------------------------------------------

    def reconcile_step(self, dt: float) -> None:
        now = self._now()
        self._reap_terminating()
        self._run_operators()
        self._enforce_quotas()
        self._converge_replicas()
        self._schedule_pending()
        self._start_scheduled(now)
        self._retry_backoffs(now)
        self._evaluate_crashes(now, dt)

    def _reap_terminating(self) -> None:
        for name in [p.name for p in self.pods.values() if p.phase == TERMINATING]:
            del self.pods[name]

    def _run_operators(self) -> None:
        for dep in sorted(self.deployments.values(), key=lambda d: d.name):
            if dep.role != "operator" or not dep.manages:
                continue
            if not any(p.phase == RUNNING for p in self.pods_of(dep.name)):
                continue  # operator not running: no reconciliation happens
            managed = self.deployments.get(dep.manages)
            if managed is None:
                continue
            defect = dep.active_defect()
            if "operator_forces_replicas" in defect:
                managed.replicas = int(defect["operator_forces_replicas"])
            elif dep.managed_replicas is not None:
                managed.replicas = dep.managed_replicas

    def _enforce_quotas(self) -> None:
        for cfg in sorted(self.configs.values(), key=lambda c: c.name):
            if cfg.kind != "Quota":
                continue
            cap = cfg.data.get("mem_mib")
            if cap is None:
                continue
            usage = self._quota_usage(cfg)
            if usage <= cap:
                continue
            victims = sorted(
                (
                    p
                    for p in self.pods.values()
                    if p.node is not None
                    and p.phase != TERMINATING
                    and (not cfg.consumers or p.deployment in cfg.consumers)
                ),
                key=lambda p: (-p.created_at, p.name),
            )
            for pod in victims:
                if usage <= cap:
                    break
                usage -= pod.requests_mem_mib
                self._log(pod.name, "WARN", f"Evicted: memory quota {cap}MiB exceeded")
                self._transition(pod, TERMINATING)

    def _converge_replicas(self) -> None:
        for dep in sorted(self.deployments.values(), key=lambda d: d.name):
            live = [p for p in self.pods_of(dep.name) if p.phase != TERMINATING]
            # roll pods built from an older template generation
            for pod in live:
                if pod.generation < dep.generation:
                    self._transition(pod, TERMINATING)
            live = [p for p in live if p.phase != TERMINATING]
            while len(live) < dep.replicas:
                live.append(self.create_pod(dep))
            if len(live) > dep.replicas:
                for pod in sorted(live, key=lambda p: (-p.created_at, p.name)):
                    if len(live) <= dep.replicas:
                        break
                    self._transition(pod, TERMINATING)
                    live.remove(pod)

    def _node_fits(self, node: Node, pod: Pod) -> bool:
        if node.cordoned:
            return False
        dep = self.deployments.get(pod.deployment)
        selector = dep.template.node_selector if dep else {}
        if any(node.labels.get(k) != v for k, v in selector.items()):
            return False
        used_cpu = sum(
            p.requests_cpu_m
            for p in self.pods.values()
            if p.node == node.name and p.phase != TERMINATING
        )
        used_mem = sum(
            p.requests_mem_mib
            for p in self.pods.values()
            if p.node == node.name and p.phase != TERMINATING
        )
        return (
            used_cpu + pod.requests_cpu_m <= node.cpu_millicores
            and used_mem + pod.requests_mem_mib <= node.mem_mib
        )

    def _schedule_pending(self) -> None:
        now = self._now()
        for pod in sorted(self.pods.values(), key=lambda p: p.name):
            if pod.phase != PENDING or pod.node is not None:
                continue
            quota = self._quota_for(pod.deployment)
            if quota is not None and "mem_mib" in quota.data:
                if self._quota_usage(quota) + pod.requests_mem_mib > quota.data["mem_mib"]:
                    pod.condition = (
                        f"Unschedulable: memory quota {quota.data['mem_mib']}MiB would be exceeded"
                    )
                    continue
            placed = False
            for node in sorted(self.nodes.values(), key=lambda n: n.name):
                if self._node_fits(node, pod):
                    pod.node = node.name
                    pod.start_at = now + POD_START_DELAY_S
                    pod.condition = ""
                    placed = True
                    break
            if not placed and not pod.condition:
                pod.condition = "Unschedulable: no node satisfies resource requests and selectors"

    def _start_scheduled(self, now: float) -> None:
        for pod in sorted(self.pods.values(), key=lambda p: p.name):
            if pod.node is None or pod.start_at is None or now < pod.start_at:
                continue
            if pod.phase == PENDING:
                if pod.image in self.image_registry:
                    self._start_pod(pod, now)
                else:
                    self._transition(pod, IMAGEPULL)
                    pod.condition = f'Failed to pull image "{pod.image}": manifest not found'
                    self._log(pod.name, "ERROR", pod.condition)
            elif pod.phase == IMAGEPULL and pod.image in self.image_registry:
                # image became pullable again without a template roll
                self._start_pod(pod, now)

    def _start_pod(self, pod: Pod, now: float) -> None:
        self._transition(pod, RUNNING)
        pod.started_at = now
        pod.condition = ""
        self.refresh_applied_config(pod.deployment)
        self._log(pod.name, "INFO", "Started container")

    def _retry_backoffs(self, now: float) -> None:
        for pod in sorted(self.pods.values(), key=lambda p: p.name):
            if pod.phase != CRASHLOOP or pod.paused:
                continue
            if pod.backoff_until is not None and now >= pod.backoff_until:
                self._transition(pod, RUNNING)
                pod.started_at = now
                pod.restart_count += 1
                pod.backoff_until = None
                self.restart_events.append((now, pod.name, pod.deployment))
                self.refresh_applied_config(pod.deployment)
                self._log(pod.name, "INFO", "Started container")

    def crash_pod(self, pod: Pod, message: str) -> None:
        """Container crash: log, enter CrashLoopBackOff, arm the retry timer."""
        now = self._now()
        self._log(pod.name, "ERROR", message)
        self._log(pod.name, "WARN", "Back-off restarting failed container")
        pod.crash_message = message
        self._transition(pod, CRASHLOOP)
        pod.backoff_until = now + crash_backoff(pod.crash_cycles)
        pod.crash_cycles += 1

    def fail_pod(self, pod: Pod, message: str) -> None:
        """Fail-stop: the pod stays down until recreated."""
        self._log(pod.name, "ERROR", message)
        self._transition(pod, FAILED)
        pod.condition = message

    def _evaluate_crashes(self, now: float, dt: float) -> None:
        for pod in sorted(self.pods.values(), key=lambda p: p.name):
            if pod.phase != RUNNING or pod.paused:
                continue
            if pod.started_at is None or now - pod.started_at < CRASH_GRACE_S:
                continue
            reason = self._crash_reason(pod, dt)
            if reason is not None:
                self.crash_pod(pod, reason)

    def _crash_reason(self, pod: Pod, dt: float) -> str | None:
        dep = self.deployments.get(pod.deployment)
        if dep is None:
            return None
        for key in dep.required_env:
            if not pod.env.get(key):
                return f"panic: required environment variable {key} is not set"
        for check in dep.config_checks:
            value = self.applied_value(pod.deployment, check["object"], check["key"])
            if check.get("must_resolve") and value is not None:
                if str(value) not in self.services and str(value) not in self.deployments:
                    return f"dial tcp: cannot resolve host {value!r}"
        if pod.limit_mem_mib is not None and pod.limit_mem_mib < pod.requests_mem_mib:
            return f"OOMKilled: container exceeded memory limit {pod.limit_mem_mib}MiB"
        node = self.node_of(pod)
        if node is not None and self._crash_rng is not None:
            for path in pod.volumes:
                if node.disk.affects(path):
                    # roughly two reads per second against a flaky device
                    p_crash = min(1.0, node.disk.read_error_prob * 2.0 * dt)
                    if self._crash_rng.random() < p_crash:
                        node.kernel_log.append(
                            (self._now(), f"blk_update_request: I/O error, dev sda2, sector {4096 + pod.restart_count}")
                        )
                        return f"read {path}: input/output error"
        return None

    # ------------------------------------------------------------------
    # health
    # ------------------------------------------------------------------

    def health_check(
        self,
        scope: Iterable[str] | None = None,
        exclude: set[str] | None = None,
    ) -> HealthReport:
        """App health: pods Running, restart counts stable, services backed.

        ``scope`` limits the check to the given deployments (default: all).
        ``exclude`` drops components (deployment/pod/service/node names) from
        the evaluation — used to mask transient disturbances the verdict must
        not be charged for.
        """
        now = self._now()
        exclude = exclude or set()
        scope_deps = sorted(scope) if scope else sorted(self.deployments)
        scope_deps = [d for d in scope_deps if d not in exclude]
        reasons: list[str] = []
        checked = 0
        for dep_name in scope_deps:
            for pod in self.pods_of(dep_name):
                if pod.name in exclude or (pod.node or "") in exclude:
                    continue
                checked += 1
                if pod.phase != RUNNING:
                    reasons.append(f"pod {pod.name} is {pod.phase}")
        horizon = now - RESTART_STABILITY_WINDOW_S
        for t, pod_name, dep_name in self.restart_events:
            if t <= horizon or dep_name not in scope_deps:
                continue
            if pod_name in exclude or dep_name in exclude:
                continue
            reasons.append(f"pod {pod_name} restarted {now - t:.0f}s ago")
        for svc in sorted(self.services.values(), key=lambda s: s.name):
            if svc.name in exclude:
                continue
            if scope and not any(
                self.service_for_deployment(d) is svc for d in scope_deps
            ):
                continue
            backends = [p for p in self.backend_pods(svc) if p.name not in exclude]
            if not backends:
                reasons.append(f"service {svc.name} has no backend pods")
        return HealthReport(healthy=not reasons, reasons=sorted(set(reasons)), checked_pods=checked, at=now)

    # ------------------------------------------------------------------
    # verbs
    # ------------------------------------------------------------------

    def execute_verb(self, call: VerbCall) -> dict:
        if call.verb not in ALL_VERBS:
            return {"ok": False, "error": f"unknown verb {call.verb!r}"}
        handler = getattr(self, f"_verb_{call.verb}")
        try:
            result = handler(call)
        except KeyError as exc:
            return {"ok": False, "error": f"no such object: {exc.args[0]!r}"}
        except (ValueError, RuntimeError) as exc:
            return {"ok": False, "error": str(exc)}
        if not call.is_read:
            self.audit_log.append(
                {
                    "at": call.issued_at,
                    "verb": call.verb,
                    "target_kind": call.target_kind,
                    "target": call.target,
                    "payload": call.payload,
                }
            )
        return {"ok": True, "result": result}

    # -- reads ----------------------------------------------------------

    def _pod_summary(self, pod: Pod) -> dict:
        return {
            "name": pod.name,
            "deployment": pod.deployment,
            "phase": pod.phase,
            "node": pod.node,
            "restarts": pod.restart_count,
            "condition": pod.condition,
            "age_s": round(self._now() - pod.created_at, 1),
        }

    def _verb_get(self, call: VerbCall) -> dict | list:
        kind, name = call.target_kind, call.target
        if kind in ("pod", "pods"):
            if name:
                return self._pod_summary(self.pods[name])
            return [self._pod_summary(p) for p in sorted(self.pods.values(), key=lambda p: p.name)]
        if kind in ("deployment", "deployments"):
            def dep_row(d: Deployment) -> dict:
                pods = [p for p in self.pods_of(d.name) if p.phase != TERMINATING]
                ready = sum(1 for p in pods if p.phase == RUNNING)
                return {
                    "name": d.name,
                    "replicas": d.replicas,
                    "ready": ready,
                    "image": d.image,
                    "generation": d.generation,
                    "role": d.role,
                }
            if name:
                return dep_row(self.deployments[name])
            return [dep_row(d) for d in sorted(self.deployments.values(), key=lambda d: d.name)]
        if kind in ("service", "services"):
            def svc_row(s: Service) -> dict:
                return {
                    "name": s.name,
                    "selector": dict(s.selector),
                    "port": s.port,
                    "target_port": s.target_port,
                    "backends": [p.name for p in self.backend_pods(s)],
                    "routes": self.service_routes(s),
                }
            if name:
                return svc_row(self.services[name])
            return [svc_row(s) for s in sorted(self.services.values(), key=lambda s: s.name)]
        if kind in ("node", "nodes"):
            def node_row(n: Node) -> dict:
                return {
                    "name": n.name,
                    "cpu_millicores": n.cpu_millicores,
                    "mem_mib": n.mem_mib,
                    "cordoned": n.cordoned,
                    "pods": sorted(
                        p.name for p in self.pods.values() if p.node == n.name and p.phase != TERMINATING
                    ),
                }
            if name:
                return node_row(self.nodes[name])
            return [node_row(n) for n in sorted(self.nodes.values(), key=lambda n: n.name)]
        if kind in ("config", "configs"):
            def cfg_row(c: ConfigObject) -> dict:
                return {"name": c.name, "kind": c.kind, "data": dict(c.data), "consumers": list(c.consumers)}
            if name:
                return cfg_row(self.configs[name])
            return [cfg_row(c) for c in sorted(self.configs.values(), key=lambda c: c.name)]
        raise ValueError(f"unknown object kind {kind!r}")

    def _verb_describe(self, call: VerbCall) -> dict:
        kind, name = call.target_kind, call.target
        if kind == "pod":
            pod = self.pods[name]
            out = self._pod_summary(pod)
            out.update(
                {
                    "image": pod.image,
                    "env": dict(pod.env),
                    "ports": list(pod.ports),
                    "requests": {"cpu_m": pod.requests_cpu_m, "mem_mib": pod.requests_mem_mib},
                    "limit_mem_mib": pod.limit_mem_mib,
                    "volumes": list(pod.volumes),
                    "labels": dict(pod.labels),
                    "last_crash_message": pod.crash_message,
                }
            )
            return out
        if kind == "deployment":
            dep = self.deployments[name]
            return {
                "name": dep.name,
                "replicas": dep.replicas,
                "image": dep.image,
                "generation": dep.generation,
                "role": dep.role,
                "env": dict(dep.template.env),
                "ports": list(dep.template.ports),
                "requests": {
                    "cpu_m": dep.template.requests_cpu_m,
                    "mem_mib": dep.template.requests_mem_mib,
                },
                "limit_mem_mib": dep.template.limit_mem_mib,
                "node_selector": dict(dep.template.node_selector),
                "volumes": list(dep.template.volumes),
                "configs": list(dep.config_refs),
                "pods": [self._pod_summary(p) for p in self.pods_of(name)],
            }
        if kind == "node":
            node = self.nodes[name]
            return {
                "name": node.name,
                "cpu_millicores": node.cpu_millicores,
                "mem_mib": node.mem_mib,
                "cordoned": node.cordoned,
                "labels": dict(node.labels),
                "kernel_log_tail": [
                    {"at": round(t, 1), "message": m} for t, m in node.kernel_log[-20:]
                ],
            }
        if kind == "service":
            svc = self.services[name]
            return {
                "name": svc.name,
                "selector": dict(svc.selector),
                "port": svc.port,
                "target_port": svc.target_port,
                "backends": [self._pod_summary(p) for p in self.backend_pods(svc)],
                "routes": self.service_routes(svc),
            }
        if kind == "config":
            cfg = self.configs[name]
            return {"name": cfg.name, "kind": cfg.kind, "data": dict(cfg.data), "consumers": list(cfg.consumers)}
        raise ValueError(f"unknown object kind {kind!r}")

    def _verb_logs(self, call: VerbCall) -> dict:
        pod = self.pods[call.target]
        tail = int(call.payload.get("tail", 50))
        lines = [
            {"at": round(rec.timestamp, 1), "severity": rec.severity, "message": rec.message}
            for rec in pod.container_log[-tail:]
        ]
        return {"pod": pod.name, "lines": lines, "truncated": len(pod.container_log) > tail}

    def _verb_top(self, call: VerbCall) -> list[dict]:
        if call.target_kind in ("node", "nodes"):
            rows = []
            for node in sorted(self.nodes.values(), key=lambda n: n.name):
                pods_here = [
                    p for p in self.pods.values() if p.node == node.name and p.phase != TERMINATING
                ]
                stress_burn = (1.0 - node.stress_factor) * node.cpu_millicores
                cpu_used = sum(p.cpu_usage_m for p in pods_here) + stress_burn
                mem_used = sum(p.requests_mem_mib for p in pods_here)
                rows.append(
                    {
                        "name": node.name,
                        "cpu_used_m": round(cpu_used, 1),
                        "cpu_pct": round(100.0 * cpu_used / node.cpu_millicores, 1),
                        "mem_used_mib": mem_used,
                        "mem_pct": round(100.0 * mem_used / node.mem_mib, 1),
                    }
                )
            return rows
        rows = []
        for pod in sorted(self.pods.values(), key=lambda p: p.name):
            if pod.phase == TERMINATING:
                continue
            rows.append(
                {
                    "name": pod.name,
                    "cpu_used_m": round(pod.cpu_usage_m, 1),
                    "mem_used_mib": pod.requests_mem_mib if pod.phase == RUNNING else 0,
                }
            )
        return rows

    # -- writes -----------------------------------------------------------

    _TEMPLATE_KEYS = (
        "env_set",
        "env_remove",
        "ports",
        "requests_cpu_m",
        "requests_mem_mib",
        "limit_cpu_m",
        "limit_mem_mib",
        "node_selector",
        "volumes",
    )

    def _verb_patch(self, call: VerbCall) -> dict:
        kind, name, payload = call.target_kind, call.target, call.payload
        if kind == "deployment":
            dep = self.deployments[name]
            touched_template = False
            if "image" in payload:
                dep.image = str(payload["image"])
                touched_template = True
            if "replicas" in payload:
                dep.replicas = int(payload["replicas"])
            for key in ("env_set",):
                if key in payload:
                    dep.template.env.update({str(k): str(v) for k, v in payload[key].items()})
                    touched_template = True
            if "env_remove" in payload:
                for k in payload["env_remove"]:
                    dep.template.env.pop(str(k), None)
                touched_template = True
            if "ports" in payload:
                dep.template.ports = [int(p) for p in payload["ports"]]
                touched_template = True
            for key in ("requests_cpu_m", "requests_mem_mib", "limit_cpu_m", "limit_mem_mib"):
                if key in payload:
                    setattr(dep.template, key, None if payload[key] is None else int(payload[key]))
                    touched_template = True
            if "node_selector" in payload:
                dep.template.node_selector = {
                    str(k): str(v) for k, v in payload["node_selector"].items()
                }
                touched_template = True
            if "volumes" in payload:
                dep.template.volumes = [str(v) for v in payload["volumes"]]
                touched_template = True
            if touched_template:
                dep.generation += 1
                self.queue_flushes.add(dep.name)
            return {"name": dep.name, "generation": dep.generation, "replicas": dep.replicas}
        if kind == "service":
            svc = self.services[name]
            if "selector" in payload:
                svc.selector = {str(k): str(v) for k, v in payload["selector"].items()}
            if "port" in payload:
                svc.port = int(payload["port"])
            if "target_port" in payload:
                svc.target_port = int(payload["target_port"])
            return {"name": svc.name, "target_port": svc.target_port, "routes": self.service_routes(svc)}
        if kind == "config":
            cfg = self.configs[name]
            if "data_set" in payload:
                cfg.data.update(payload["data_set"])
            for k in payload.get("data_remove", []):
                cfg.data.pop(k, None)
            return {"name": cfg.name, "data": dict(cfg.data)}
        if kind == "node":
            node = self.nodes[name]
            if "cordoned" in payload:
                node.cordoned = bool(payload["cordoned"])
            return {"name": node.name, "cordoned": node.cordoned}
        raise ValueError(f"patch does not support kind {kind!r}")

    def _verb_delete(self, call: VerbCall) -> dict:
        kind, name = call.target_kind, call.target
        if kind == "pod":
            pod = self.pods[name]
            if pod.phase != TERMINATING:
                self._transition(pod, TERMINATING)
            return {"deleted": name}
        if kind == "deployment":
            dep = self.deployments.pop(name)
            for pod in self.pods_of(name):
                if pod.phase != TERMINATING:
                    self._transition(pod, TERMINATING)
            return {"deleted": dep.name}
        raise ValueError(f"delete does not support kind {kind!r}")

    def _verb_restart(self, call: VerbCall) -> dict:
        dep = self.deployments[call.target]
        rolled = []
        for pod in self.pods_of(dep.name):
            if pod.phase != TERMINATING:
                self._transition(pod, TERMINATING)
                rolled.append(pod.name)
        self.queue_flushes.add(dep.name)
        return {"restarted": dep.name, "rolled_pods": rolled}

    def _verb_scale(self, call: VerbCall) -> dict:
        dep = self.deployments[call.target]
        dep.replicas = int(call.payload["replicas"])
        return {"name": dep.name, "replicas": dep.replicas}

    def _verb_apply(self, call: VerbCall) -> dict:
        """Create or replace one object from a manifest-shaped entry."""
        kind, name, spec = call.target_kind, call.target, call.payload
        if kind == "config":
            self.configs[name] = ConfigObject(
                name=name,
                kind=spec.get("kind", "AppConfig"),
                data=dict(spec.get("data", {})),
                consumers=list(spec.get("consumers", [])),
            )
            return {"applied": name}
        if kind == "service":
            self.services[name] = Service(
                name=name,
                selector=dict(spec.get("selector", {"app": name})),
                port=int(spec.get("port", 80)),
                target_port=int(spec.get("target_port", spec.get("port", 80))),
            )
            return {"applied": name}
        raise ValueError(f"apply does not support kind {kind!r}")

    def _verb_set_env(self, call: VerbCall) -> dict:
        dep = self.deployments[call.target]
        payload = dict(call.payload)
        removed = payload.pop("remove", [])
        dep.template.env.update({str(k): str(v) for k, v in payload.get("set", {}).items()})
        for k in removed:
            dep.template.env.pop(str(k), None)
        dep.generation += 1
        self.queue_flushes.add(dep.name)
        return {"name": dep.name, "env": dict(dep.template.env), "generation": dep.generation}

    def _verb_run_probe(self, call: VerbCall) -> dict:
        """Synthetic request against a service: reachability + rough latency."""
        svc = self.services[call.target]
        routes = self.service_routes(svc)
        return {
            "service": svc.name,
            "reachable": routes,
            "status": 200 if routes else 503,
            "backends": len(self.backend_pods(svc)),
        }

    def _verb_port_forward(self, call: VerbCall) -> dict:
        if call.target_kind == "pod":
            pod = self.pods[call.target]
            return {"forwarded": pod.name, "established": pod.phase == RUNNING}
        svc = self.services[call.target]
        return {"forwarded": svc.name, "established": self.service_routes(svc)}

    # ------------------------------------------------------------------
    # snapshots (for purity / replay comparisons)
    # ------------------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "nodes": {
                n.name: {
                    "cordoned": n.cordoned,
                    "stress": n.stress_factor,
                    "disk_p": n.disk.read_error_prob,
                    "disk_paths": list(n.disk.affected_paths),
                    "kernel_log_len": len(n.kernel_log),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.name)
            },
            "deployments": {
                d.name: {
                    "replicas": d.replicas,
                    "image": d.image,
                    "generation": d.generation,
                    "env": dict(d.template.env),
                    "ports": list(d.template.ports),
                }
                for d in sorted(self.deployments.values(), key=lambda d: d.name)
            },
            "pods": {
                p.name: {
                    "phase": p.phase,
                    "node": p.node,
                    "restarts": p.restart_count,
                    "env": dict(p.env),
                }
                for p in sorted(self.pods.values(), key=lambda p: p.name)
            },
            "services": {
                s.name: {"selector": dict(s.selector), "port": s.port, "target_port": s.target_port}
                for s in sorted(self.services.values(), key=lambda s: s.name)
            },
            "configs": {
                c.name: {"kind": c.kind, "data": dict(c.data)}
                for c in sorted(self.configs.values(), key=lambda c: c.name)
            },
            "audit_len": len(self.audit_log),
        }
