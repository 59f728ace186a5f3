"""Fault injection plane: injector catalog, handles, and pair enumeration.

Every injector implements the same contract against live simulation state:

* ``inject`` mutates cluster/workload state and returns the reversion record
  (the exact pre-injection values of every field it touched);
* ``revert`` restores those fields (used by scripted clears and self-recovering
  disturbances);
* ``is_cleared`` is a *state predicate* — it asks whether the fault's effect is
  gone from the live system, regardless of how the agent got there. Restarting
  a crash-looping pod does not clear a config fault; patching the config (and
  letting consumers re-read it) does.
* ``suggested_fix`` yields the verb calls a perfectly informed operator would
  issue; the oracle-informed reference agent replays them.

Handles, injector ids, and designations live only in this plane. Nothing in
here may ever be written into telemetry, verb results, or object fields the
agent can read — the isolation fuzz test enforces that.

``enumerate_pairs`` expands a census of compatibility classes (primitive sets
times target selectors) into concrete (primitive, target) pairs with
per-class counts and a deduplicated total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import yaml

from . import cluster as cl
from .cluster import VerbCall

ROOT_CAUSE = "root_cause"
TRIGGER = "trigger"
NOISE = "noise"


@dataclass
class FaultSpec:
    injector: str
    target_kind: str
    target: str
    params: dict = field(default_factory=dict)
    designation: str = ROOT_CAUSE


@dataclass
class InjectionHandle:
    token: str
    spec: FaultSpec
    injected_at: float
    active: bool = True
    revert_info: dict = field(default_factory=dict)
    cleared_at: float | None = None


class Injector:
    """Base injector; subclasses override the four contract methods."""

    id = "base"
    family = "base"
    target_kinds: tuple[str, ...] = ()
    mechanism_keywords: tuple[str, ...] = ()
    # keywords that, asserted alone, indicate a *different* fault family
    exclusive_keywords: tuple[str, ...] = ()

    def inject(self, sim, spec: FaultSpec) -> dict:
        raise NotImplementedError

    def revert(self, sim, handle: InjectionHandle) -> None:
        raise NotImplementedError

    def is_cleared(self, sim, handle: InjectionHandle) -> bool:
        raise NotImplementedError

    def suggested_fix(self, sim, handle: InjectionHandle) -> list[VerbCall]:
        return []

    # -- shared helpers ---------------------------------------------------

    @staticmethod
    def _graph_deployments(sim) -> list[str]:
        return sorted(sim.graph.services)

    @staticmethod
    def _deployments_on_node(sim, node_name: str, volumes_only: bool = False, under: str | None = None) -> list[str]:
        out = set()
        for pod in sim.cluster.pods.values():
            if pod.node != node_name or pod.phase == cl.TERMINATING:
                continue
            if volumes_only and not pod.volumes:
                continue
            if under is not None and not any(v.startswith(under) or under.startswith(v) for v in pod.volumes):
                continue
            out.add(pod.deployment)
        return sorted(out)


class KillInjector(Injector):
    id = "kill"
    family = "fail_stop"
    target_kinds = ("pod",)
    mechanism_keywords = ("killed", "crashed", "exited", "terminated", "fail-stop", "sigkill")
    exclusive_keywords = ("killed", "sigkill")

    def inject(self, sim, spec):
        pod = sim.cluster.pods[spec.target]
        sim.cluster.fail_pod(pod, "container terminated unexpectedly (exit code 137)")
        return {"pod": pod.name, "deployment": pod.deployment}

    def revert(self, sim, handle):
        pod = sim.cluster.pods.get(handle.revert_info["pod"])
        if pod is not None and pod.phase == cl.FAILED:
            sim.cluster._transition(pod, cl.TERMINATING)

    def is_cleared(self, sim, handle):
        dep_name = handle.revert_info["deployment"]
        dep = sim.cluster.deployments.get(dep_name)
        if dep is None:
            return False
        pods = [p for p in sim.cluster.pods_of(dep_name) if p.phase != cl.TERMINATING]
        if any(p.phase == cl.FAILED for p in pods):
            return False
        return sum(1 for p in pods if p.phase == cl.RUNNING) >= dep.replicas

    def suggested_fix(self, sim, handle):
        return [VerbCall("restart", "deployment", handle.revert_info["deployment"])]


class HwStressInjector(Injector):
    id = "hw_stress"
    family = "fail_slow"
    target_kinds = ("node",)
    mechanism_keywords = ("cpu", "stress", "saturation", "contention", "slow", "degraded capacity")
    exclusive_keywords = ("cpu stress", "cpu saturation")

    def inject(self, sim, spec):
        node = sim.cluster.nodes[spec.target]
        saved = node.stress_factor
        node.stress_factor = saved * float(spec.params.get("factor", 0.5))
        return {"node": node.name, "stress_factor": saved}

    def revert(self, sim, handle):
        node = sim.cluster.nodes.get(handle.revert_info["node"])
        if node is not None:
            node.stress_factor = handle.revert_info["stress_factor"]

    def is_cleared(self, sim, handle):
        # hardware cannot be un-stressed by the agent; the fix is to move the
        # serving workload off the afflicted node
        node_name = handle.revert_info["node"]
        node = sim.cluster.nodes.get(node_name)
        if node is None or node.stress_factor >= handle.revert_info["stress_factor"]:
            return True  # stress reverted (scripted trigger windows)
        graph_deps = set(self._graph_deployments(sim))
        for pod in sim.cluster.pods.values():
            if pod.node == node_name and pod.phase == cl.RUNNING and pod.deployment in graph_deps:
                return False
        return True

    def suggested_fix(self, sim, handle):
        node_name = handle.revert_info["node"]
        fixes = [VerbCall("patch", "node", node_name, {"cordoned": True})]
        graph_deps = set(self._graph_deployments(sim))
        for dep in self._deployments_on_node(sim, node_name):
            if dep in graph_deps:
                fixes.append(VerbCall("restart", "deployment", dep))
        return fixes


class SyscallFailInjector(Injector):
    id = "syscall_fail"
    family = "storage"
    target_kinds = ("node",)
    mechanism_keywords = ("i/o", "io error", "input/output", "disk", "read error", "syscall", "storage")
    exclusive_keywords = ("input/output error", "disk")

    def inject(self, sim, spec):
        node = sim.cluster.nodes[spec.target]
        saved = {"prob": node.disk.read_error_prob, "paths": list(node.disk.affected_paths)}
        node.disk.read_error_prob = float(spec.params.get("read_error_prob", 0.35))
        node.disk.affected_paths = []
        return {"node": node.name, "disk": saved}

    def revert(self, sim, handle):
        node = sim.cluster.nodes.get(handle.revert_info["node"])
        if node is not None:
            node.disk.read_error_prob = handle.revert_info["disk"]["prob"]
            node.disk.affected_paths = list(handle.revert_info["disk"]["paths"])

    def is_cleared(self, sim, handle):
        node_name = handle.revert_info["node"]
        node = sim.cluster.nodes.get(node_name)
        if node is None or node.disk.read_error_prob <= handle.revert_info["disk"]["prob"]:
            return True
        for pod in sim.cluster.pods.values():
            if pod.node == node_name and pod.phase != cl.TERMINATING and pod.volumes:
                return False
        return True

    def suggested_fix(self, sim, handle):
        node_name = handle.revert_info["node"]
        fixes = [VerbCall("patch", "node", node_name, {"cordoned": True})]
        for dep in self._deployments_on_node(sim, node_name, volumes_only=True):
            fixes.append(VerbCall("restart", "deployment", dep))
        return fixes


class SectorCorruptInjector(Injector):
    id = "sector_corrupt"
    family = "storage"
    target_kinds = ("node",)
    mechanism_keywords = ("sector", "corrupt", "i/o", "input/output", "disk", "bad block")
    exclusive_keywords = ("sector", "corrupt")

    def inject(self, sim, spec):
        node = sim.cluster.nodes[spec.target]
        saved = {"prob": node.disk.read_error_prob, "paths": list(node.disk.affected_paths)}
        path = str(spec.params.get("path", "/"))
        node.disk.read_error_prob = float(spec.params.get("read_error_prob", 0.5))
        node.disk.affected_paths = saved["paths"] + [path]
        return {"node": node.name, "disk": saved, "path": path}

    def revert(self, sim, handle):
        node = sim.cluster.nodes.get(handle.revert_info["node"])
        if node is not None:
            node.disk.read_error_prob = handle.revert_info["disk"]["prob"]
            node.disk.affected_paths = list(handle.revert_info["disk"]["paths"])

    def is_cleared(self, sim, handle):
        node_name = handle.revert_info["node"]
        path = handle.revert_info["path"]
        node = sim.cluster.nodes.get(node_name)
        if node is None or path not in node.disk.affected_paths:
            return True
        for pod in sim.cluster.pods.values():
            if pod.node != node_name or pod.phase == cl.TERMINATING:
                continue
            if any(v.startswith(path) or path.startswith(v) for v in pod.volumes):
                return False
        return True

    def suggested_fix(self, sim, handle):
        node_name = handle.revert_info["node"]
        path = handle.revert_info["path"]
        fixes = [VerbCall("patch", "node", node_name, {"cordoned": True})]
        for dep in self._deployments_on_node(sim, node_name, volumes_only=True, under=path):
            fixes.append(VerbCall("restart", "deployment", dep))
        return fixes


class DeployFaultInjector(Injector):
    """Mis-deployment family: bad image, wrong port, selector, env, limits."""

    id = "deploy_fault"
    family = "misconfig"
    target_kinds = ("deployment",)
    mechanism_keywords = ("misconfig", "deployment", "rollout", "manifest")
    exclusive_keywords = ()

    _VARIANT_KEYWORDS = {
        "bad_image": ("image", "tag", "pull"),
        "port": ("port", "target port", "targetport", "routing"),
        "selector": ("selector", "label"),
        "env_drop": ("environment variable", "env var", "env"),
        "limits": ("memory limit", "limit", "oom"),
    }

    def keywords_for(self, params: dict) -> tuple[str, ...]:
        return self.mechanism_keywords + self._VARIANT_KEYWORDS.get(params.get("variant", ""), ())

    def inject(self, sim, spec):
        dep = sim.cluster.deployments[spec.target]
        variant = spec.params["variant"]
        info: dict = {"deployment": dep.name, "variant": variant}
        if variant == "bad_image":
            info["image"] = dep.image
            dep.image = str(spec.params.get("image", f"{dep.image}-hotfix"))
            dep.generation += 1
        elif variant == "port":
            info["ports"] = list(dep.template.ports)
            dep.template.ports = [int(spec.params.get("port", 9090))]
            dep.generation += 1
            svc = sim.cluster.service_for_deployment(dep.name)
            info["service"] = svc.name if svc else None
        elif variant == "selector":
            svc = sim.cluster.service_for_deployment(dep.name)
            if svc is None:
                raise ValueError(f"deployment {dep.name} has no service to mis-select")
            info["service"] = svc.name
            info["selector"] = dict(svc.selector)
            svc.selector = {"app": f"{dep.name}-canary"}
        elif variant == "env_drop":
            key = str(spec.params["key"])
            info["key"] = key
            info["value"] = dep.template.env.get(key)
            dep.template.env.pop(key, None)
            dep.generation += 1
        elif variant == "limits":
            info["limit_mem_mib"] = dep.template.limit_mem_mib
            dep.template.limit_mem_mib = int(
                spec.params.get("limit_mem_mib", max(16, dep.template.requests_mem_mib // 4))
            )
            dep.generation += 1
        else:
            raise ValueError(f"unknown deploy_fault variant {variant!r}")
        return info

    def revert(self, sim, handle):
        info = handle.revert_info
        dep = sim.cluster.deployments.get(info["deployment"])
        if dep is None:
            return
        variant = info["variant"]
        if variant == "bad_image":
            dep.image = info["image"]
            dep.generation += 1
        elif variant == "port":
            dep.template.ports = list(info["ports"])
            dep.generation += 1
        elif variant == "selector":
            svc = sim.cluster.services.get(info["service"])
            if svc is not None:
                svc.selector = dict(info["selector"])
        elif variant == "env_drop":
            if info["value"] is not None:
                dep.template.env[info["key"]] = info["value"]
            dep.generation += 1
        elif variant == "limits":
            dep.template.limit_mem_mib = info["limit_mem_mib"]
            dep.generation += 1

    def is_cleared(self, sim, handle):
        info = handle.revert_info
        dep = sim.cluster.deployments.get(info["deployment"])
        if dep is None:
            return False
        variant = info["variant"]
        pods = [p for p in sim.cluster.pods_of(dep.name) if p.phase != cl.TERMINATING]
        running = [p for p in pods if p.phase == cl.RUNNING]
        if variant == "bad_image":
            return dep.image in sim.cluster.image_registry and len(running) >= dep.replicas
        if variant == "port":
            svc = sim.cluster.service_for_deployment(dep.name)
            return svc is not None and sim.cluster.service_routes(svc)
        if variant == "selector":
            svc = sim.cluster.services.get(info["service"])
            return svc is not None and len(sim.cluster.backend_pods(svc)) > 0
        if variant == "env_drop":
            key = info["key"]
            return (
                bool(dep.template.env.get(key))
                and len(running) >= dep.replicas
                and all(p.env.get(key) for p in running)
            )
        if variant == "limits":
            ok_template = (
                dep.template.limit_mem_mib is None
                or dep.template.limit_mem_mib >= dep.template.requests_mem_mib
            )
            return ok_template and len(running) >= dep.replicas
        return False

    def suggested_fix(self, sim, handle):
        info = handle.revert_info
        dep_name = info["deployment"]
        variant = info["variant"]
        if variant == "bad_image":
            return [VerbCall("patch", "deployment", dep_name, {"image": info["image"]})]
        if variant == "port":
            return [VerbCall("patch", "deployment", dep_name, {"ports": list(info["ports"])})]
        if variant == "selector":
            return [VerbCall("patch", "service", info["service"], {"selector": dict(info["selector"])})]
        if variant == "env_drop":
            return [VerbCall("set_env", "deployment", dep_name, {"set": {info["key"]: info["value"]}})]
        if variant == "limits":
            return [VerbCall("patch", "deployment", dep_name, {"limit_mem_mib": info["limit_mem_mib"]})]
        return []


class AppConfigFaultInjector(Injector):
    id = "app_config_fault"
    family = "misconfig"
    target_kinds = ("config",)
    mechanism_keywords = ("config", "configuration", "setting", "parameter")
    exclusive_keywords = ()

    def inject(self, sim, spec):
        cfg = sim.cluster.configs[spec.target]
        changes = dict(spec.params["set"])
        saved = {k: cfg.data.get(k) for k in changes}
        cfg.data.update(changes)
        restarted = []
        if spec.params.get("restart_consumers", False):
            for dep_name in sorted(cfg.consumers):
                if dep_name in sim.cluster.deployments:
                    sim.cluster.execute_verb(
                        VerbCall("restart", "deployment", dep_name, issued_at=sim.now())
                    )
                    restarted.append(dep_name)
        return {"config": cfg.name, "saved": saved, "consumers": sorted(cfg.consumers), "restarted": restarted}

    def revert(self, sim, handle):
        cfg = sim.cluster.configs.get(handle.revert_info["config"])
        if cfg is None:
            return
        for k, v in handle.revert_info["saved"].items():
            if v is None:
                cfg.data.pop(k, None)
            else:
                cfg.data[k] = v

    def is_cleared(self, sim, handle):
        info = handle.revert_info
        cfg = sim.cluster.configs.get(info["config"])
        if cfg is None:
            return False
        for k, v in info["saved"].items():
            if cfg.data.get(k) != v:
                return False
        # consumers must actually have re-read the fixed values
        for dep_name in info["consumers"]:
            if dep_name not in sim.cluster.deployments:
                continue
            applied = sim.cluster.applied_config.get(dep_name, {}).get(info["config"], {})
            for k, v in info["saved"].items():
                if applied.get(k) != v:
                    return False
        return True

    def suggested_fix(self, sim, handle):
        info = handle.revert_info
        data_set = {k: v for k, v in info["saved"].items() if v is not None}
        removals = [k for k, v in info["saved"].items() if v is None]
        payload: dict = {"data_set": data_set}
        if removals:
            payload["data_remove"] = removals
        fixes = [VerbCall("patch", "config", info["config"], payload)]
        for dep_name in info["consumers"]:
            fixes.append(VerbCall("restart", "deployment", dep_name))
        return fixes


class PlatformConfigFaultInjector(Injector):
    """Platform-plane misconfiguration: resource quota or scheduling policy."""

    id = "platform_config_fault"
    family = "misconfig"
    target_kinds = ("config", "deployment")
    mechanism_keywords = ("quota", "platform", "schedul", "unschedulable", "policy")
    exclusive_keywords = ()

    def inject(self, sim, spec):
        variant = spec.params.get("variant", "quota")
        if variant == "quota":
            cfg = sim.cluster.configs[spec.target]
            changes = dict(spec.params["set"])
            saved = {k: cfg.data.get(k) for k in changes}
            cfg.data.update(changes)
            return {"variant": "quota", "config": cfg.name, "saved": saved, "consumers": sorted(cfg.consumers)}
        if variant == "scheduler":
            dep = sim.cluster.deployments[spec.target]
            saved = dict(dep.template.node_selector)
            dep.template.node_selector = dict(
                spec.params.get("node_selector", {"pool": "decommissioned"})
            )
            dep.generation += 1
            return {"variant": "scheduler", "deployment": dep.name, "node_selector": saved}
        raise ValueError(f"unknown platform_config_fault variant {variant!r}")

    def revert(self, sim, handle):
        info = handle.revert_info
        if info["variant"] == "quota":
            cfg = sim.cluster.configs.get(info["config"])
            if cfg is None:
                return
            for k, v in info["saved"].items():
                if v is None:
                    cfg.data.pop(k, None)
                else:
                    cfg.data[k] = v
        else:
            dep = sim.cluster.deployments.get(info["deployment"])
            if dep is not None:
                dep.template.node_selector = dict(info["node_selector"])
                dep.generation += 1

    def is_cleared(self, sim, handle):
        info = handle.revert_info
        if info["variant"] == "quota":
            consumers = info["consumers"] or sorted(sim.cluster.deployments)
            for dep_name in consumers:
                dep = sim.cluster.deployments.get(dep_name)
                if dep is None:
                    continue
                running = [p for p in sim.cluster.pods_of(dep_name) if p.phase == cl.RUNNING]
                if len(running) < dep.replicas:
                    return False
            return True
        dep = sim.cluster.deployments.get(info["deployment"])
        if dep is None:
            return False
        selector_ok = any(
            all(node.labels.get(k) == v for k, v in dep.template.node_selector.items())
            for node in sim.cluster.nodes.values()
            if not node.cordoned
        )
        running = [p for p in sim.cluster.pods_of(dep.name) if p.phase == cl.RUNNING]
        return selector_ok and len(running) >= dep.replicas

    def suggested_fix(self, sim, handle):
        info = handle.revert_info
        if info["variant"] == "quota":
            data_set = {k: v for k, v in info["saved"].items() if v is not None}
            return [VerbCall("patch", "config", info["config"], {"data_set": data_set})]
        return [
            VerbCall(
                "patch", "deployment", info["deployment"], {"node_selector": dict(info["node_selector"])}
            )
        ]


class BuggyCodeInjector(Injector):
    id = "buggy_code"
    family = "code_defect"
    target_kinds = ("deployment",)
    mechanism_keywords = ("bug", "regression", "defect", "error rate", "bad release", "code")
    exclusive_keywords = ("regression", "bad release")

    def inject(self, sim, spec):
        dep = sim.cluster.deployments[spec.target]
        saved_image = dep.image
        tag = str(spec.params.get("image_tag", f"{dep.name}:broken"))
        defect = {
            "error_rate": float(spec.params.get("error_rate", 0.3)),
            "latency_add_ms": float(spec.params.get("latency_add_ms", 0.0)),
            "capacity_factor": float(spec.params.get("capacity_factor", 1.0)),
        }
        sim.cluster.image_registry.add(tag)
        dep.image_defects[tag] = defect
        dep.image = tag
        dep.generation += 1
        return {"deployment": dep.name, "image": saved_image, "tag": tag}

    def revert(self, sim, handle):
        dep = sim.cluster.deployments.get(handle.revert_info["deployment"])
        if dep is None:
            return
        dep.image = handle.revert_info["image"]
        dep.generation += 1
        dep.image_defects.pop(handle.revert_info["tag"], None)

    def is_cleared(self, sim, handle):
        dep = sim.cluster.deployments.get(handle.revert_info["deployment"])
        if dep is None:
            return False
        if dep.active_defect():
            return False
        running = [p for p in sim.cluster.pods_of(dep.name) if p.phase == cl.RUNNING]
        return len(running) >= dep.replicas and all(p.image == dep.image for p in running)

    def suggested_fix(self, sim, handle):
        return [
            VerbCall(
                "patch", "deployment", handle.revert_info["deployment"], {"image": handle.revert_info["image"]}
            )
        ]


class BuggyOperatorInjector(Injector):
    id = "buggy_operator"
    family = "code_defect"
    target_kinds = ("deployment",)
    mechanism_keywords = ("operator", "reconcil", "controller", "scale")
    exclusive_keywords = ("operator",)

    def inject(self, sim, spec):
        dep = sim.cluster.deployments[spec.target]
        if dep.role != "operator":
            raise ValueError(f"{dep.name} is not an operator deployment")
        saved_image = dep.image
        tag = str(spec.params.get("image_tag", f"{dep.name}:broken"))
        sim.cluster.image_registry.add(tag)
        dep.image_defects[tag] = {
            "operator_forces_replicas": int(spec.params.get("forces_replicas", 0))
        }
        dep.image = tag
        dep.generation += 1
        return {"deployment": dep.name, "image": saved_image, "tag": tag, "manages": dep.manages}

    def revert(self, sim, handle):
        dep = sim.cluster.deployments.get(handle.revert_info["deployment"])
        if dep is None:
            return
        dep.image = handle.revert_info["image"]
        dep.generation += 1
        dep.image_defects.pop(handle.revert_info["tag"], None)

    def is_cleared(self, sim, handle):
        dep = sim.cluster.deployments.get(handle.revert_info["deployment"])
        if dep is None:
            return True  # operator deleted: it cannot misreconcile anymore
        if not dep.active_defect():
            return True
        return not any(p.phase == cl.RUNNING for p in sim.cluster.pods_of(dep.name))

    def suggested_fix(self, sim, handle):
        return [
            VerbCall(
                "patch", "deployment", handle.revert_info["deployment"], {"image": handle.revert_info["image"]}
            )
        ]


class OverloadInjector(Injector):
    id = "overload"
    family = "overload"
    target_kinds = ("workload",)
    mechanism_keywords = ("overload", "traffic", "surge", "load", "rps", "capacity")
    exclusive_keywords = ("surge", "overload")

    def inject(self, sim, spec):
        saved = sim.engine.load_multiplier
        sim.engine.load_multiplier = saved * float(spec.params.get("multiplier", 3.0))
        return {"load_multiplier": saved}

    def revert(self, sim, handle):
        sim.engine.load_multiplier = handle.revert_info["load_multiplier"]

    def is_cleared(self, sim, handle):
        """Cleared when un-amplified demand fits every service's capacity."""
        offered = sim.profile.rate_at(sim.now()) * sim.engine.load_multiplier
        demand = {name: 0.0 for name in sim.graph.services}
        demand[sim.graph.entry] = offered
        for name in sim.graph.topo_order():
            for edge in sim.graph.out_edges(name):
                demand[edge.callee] += demand[name]
        for name, load in demand.items():
            cap, available, _, _ = sim.engine._capacity_and_availability(name)
            if load > 0 and (not available or cap < load):
                return False
        return True

    def suggested_fix(self, sim, handle):
        offered = sim.profile.rate_at(sim.now()) * sim.engine.load_multiplier
        demand = {name: 0.0 for name in sim.graph.services}
        demand[sim.graph.entry] = offered
        fixes: list[VerbCall] = []
        for name in sim.graph.topo_order():
            for edge in sim.graph.out_edges(name):
                # retries can double effective demand until queues drain
                _, retries = sim.engine.edge_params(edge)
                amplified = demand[name] * min(retries + 1, 2)
                demand[edge.callee] += amplified
        for name in sorted(demand):
            if demand[name] <= 0:
                continue
            spec = sim.graph.services[name]
            dep = sim.cluster.deployments.get(name)
            if dep is None:
                continue
            needed = math.ceil(demand[name] * 1.1 / spec.capacity_rps_per_replica)
            if needed > dep.replicas:
                fixes.append(VerbCall("scale", "deployment", name, {"replicas": needed}))
                fixes.append(VerbCall("restart", "deployment", name))
        return fixes


INJECTORS: dict[str, Injector] = {
    inj.id: inj
    for inj in (
        KillInjector(),
        HwStressInjector(),
        SyscallFailInjector(),
        SectorCorruptInjector(),
        DeployFaultInjector(),
        AppConfigFaultInjector(),
        PlatformConfigFaultInjector(),
        BuggyCodeInjector(),
        BuggyOperatorInjector(),
        OverloadInjector(),
    )
}


class InjectorPlane:
    """Owns every live injection; invisible to the agent-facing surfaces."""

    def __init__(self, sim):
        self._sim = sim
        self.handles: list[InjectionHandle] = []
        self._counter = 0
        self.noise_activations: list[dict] = []  # {pattern, target, start, end}

    def inject(self, spec: FaultSpec) -> InjectionHandle:
        injector = INJECTORS[spec.injector]
        if spec.target_kind not in injector.target_kinds:
            raise ValueError(
                f"injector {spec.injector!r} cannot target kind {spec.target_kind!r}"
            )
        self._counter += 1
        revert_info = injector.inject(self._sim, spec)
        handle = InjectionHandle(
            token=f"fxh-{self._counter:04d}",
            spec=spec,
            injected_at=self._sim.now(),
            revert_info=revert_info,
        )
        self.handles.append(handle)
        return handle

    def inject_raw(
        self,
        injector: str,
        target_kind: str,
        target: str,
        params: dict | None = None,
        designation: str = ROOT_CAUSE,
    ) -> InjectionHandle:
        """Shorthand used by scripts and tests."""
        return self.inject(
            FaultSpec(
                injector=injector,
                target_kind=target_kind,
                target=target,
                params=dict(params or {}),
                designation=designation,
            )
        )

    def revert(self, handle: InjectionHandle) -> None:
        if not handle.active:
            return
        INJECTORS[handle.spec.injector].revert(self._sim, handle)
        handle.active = False
        handle.cleared_at = self._sim.now()

    def is_cleared(self, handle: InjectionHandle) -> bool:
        return INJECTORS[handle.spec.injector].is_cleared(self._sim, handle)

    def root_cause_handles(self) -> list[InjectionHandle]:
        return [h for h in self.handles if h.spec.designation == ROOT_CAUSE]

    def identifier_strings(self) -> set[str]:
        """Strings that must never appear in any agent-visible response."""
        out = {"fxh-", "injector", "designation", ROOT_CAUSE, "injection_handle"}
        for h in self.handles:
            out.add(h.token)
            out.add(h.spec.injector)
        return out


# ---------------------------------------------------------------------------
# compatibility-class census
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CensusTarget:
    kind: str
    name: str
    tags: tuple[str, ...] = ()


@dataclass
class CompatibilityClass:
    name: str
    selector: dict
    primitives: list[str]

    def matches(self, target: CensusTarget) -> bool:
        if self.selector.get("kind") != target.kind:
            return False
        tag = self.selector.get("tag")
        return tag is None or tag in target.tags


@dataclass
class Census:
    classes: list[CompatibilityClass]
    targets: list[CensusTarget]


def load_census(path: str | None = None) -> Census:
    if path is None:
        text = resources.files("sresim.data").joinpath("census.yaml").read_text()
        doc = yaml.safe_load(text)
    else:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    targets: list[CensusTarget] = []
    for row in doc["inventory"]:
        count = int(row.get("count", 1))
        tags = tuple(row.get("tags") or ())
        for i in range(1, count + 1):
            targets.append(CensusTarget(row["kind"], f"{row['prefix']}-{i}", tags))
    classes = [
        CompatibilityClass(c["name"], dict(c["selector"]), list(c["primitives"]))
        for c in doc["classes"]
    ]
    return Census(classes=classes, targets=targets)


def enumerate_pairs(census: Census) -> dict:
    """Count viable (primitive, target) pairs per class, plus dedup total."""
    per_class: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    for cls in census.classes:
        count = 0
        for target in census.targets:
            if not cls.matches(target):
                continue
            for primitive in cls.primitives:
                count += 1
                seen.add((primitive, target.name))
        per_class[cls.name] = count
    return {"per_class": per_class, "total": len(seen)}
