"""Environment manifests: one YAML file describes a whole simulated setup.

Schema (version 1) — all sections except ``nodes`` and ``deployments`` are
optional:

.. code-block:: yaml

    version: 1
    name: webshop
    nodes:
      - {name: node-1, cpu_millicores: 8000, mem_mib: 16384, labels: {pool: a}}
    deployments:
      - name: frontend
        replicas: 2
        image: shop/frontend:1.4.2
        role: workload            # workload | observability | operator | database
        env: {API_ADDR: "api:8080"}
        ports: [8080]
        requests: {cpu_m: 500, mem_mib: 512}
        limits: {mem_mib: 1024}   # optional
        volumes: ["/var/lib/cache"]
        node_selector: {pool: a}
        tags: [mongo]             # free-form capability tags
        configs: [rpc-settings]   # ConfigObjects read at pod start
        config_checks:            # startup validations against applied config
          - {object: app-settings, key: database_host, must_resolve: true}
        manages: api              # operator role only
    services:
      - {name: frontend, selector: {app: frontend}, port: 80, target_port: 8080}
    configs:
      - {name: rpc-settings, kind: AppConfig, data: {timeout_ms: 250, retries: 1},
         consumers: [frontend]}
    graph:
      - {name: frontend, capacity_rps_per_replica: 4000, base_latency_ms: 5}
      - {name: api, capacity_rps_per_replica: 2500, base_latency_ms: 10}
    edges:
      - caller: frontend
        callee: api
        timeout_ms: 250
        retries: 1
        config: {object: rpc-settings, timeout_key: timeout_ms, retries_key: retries}
    workload:
      entry: frontend
      offered_rps: 100
      client_timeout_ms: 1000
      ramp: [[0, 100]]            # (at_seconds, rps) steps
      trace_sample_rate: 0.01

Loading validates cross-references (services must select an existing
deployment, graph vertices must be deployments, edges must close over graph
vertices, the graph must be acyclic) and reports offending object names.
``apply_manifest`` also bootstraps the steady state: pods are created,
placed first-fit, and set Running so an incident window opens on a healthy
environment (pods that cannot schedule stay Pending, which is itself a valid
starting condition).
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .cluster import (
    ClusterState,
    ConfigObject,
    Deployment,
    DiskState,
    Node,
    PodTemplate,
    Service,
    RUNNING,
    IMAGEPULL,
)
from .workload import DependencyEdge, DependencyGraph, ServiceSpec, WorkloadProfile


class ManifestError(ValueError):
    """Raised when a manifest fails validation; message names the object."""


@dataclass
class LoadedEnvironment:
    name: str
    cluster: ClusterState
    graph: DependencyGraph
    profile: WorkloadProfile


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ManifestError(message)


def validate_manifest(doc: dict) -> list[str]:
    """Return all validation errors (empty list = valid)."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        return ["manifest root must be a mapping"]
    if doc.get("version", 1) != 1:
        errors.append(f"unsupported manifest version {doc.get('version')!r}")
    nodes = doc.get("nodes") or []
    deployments = doc.get("deployments") or []
    if not nodes:
        errors.append("manifest needs at least one node")
    if not deployments:
        errors.append("manifest needs at least one deployment")
    dep_names = {d.get("name") for d in deployments}
    node_names = [n.get("name") for n in nodes]
    if len(set(node_names)) != len(node_names):
        errors.append("duplicate node names")
    if len(dep_names) != len(deployments):
        errors.append("duplicate deployment names")
    config_names = {c.get("name") for c in doc.get("configs") or []}
    for svc in doc.get("services") or []:
        sel = svc.get("selector") or {}
        matched = False
        for d in deployments:
            labels = {"app": d.get("name"), **(d.get("labels") or {})}
            if all(labels.get(k) == v for k, v in sel.items()):
                matched = True
        if not matched:
            errors.append(f"service {svc.get('name')!r} selects no deployment")
    for d in deployments:
        for cfg in d.get("configs") or []:
            if cfg not in config_names:
                errors.append(f"deployment {d.get('name')!r} consumes unknown config {cfg!r}")
        if d.get("role") == "operator" and d.get("manages") not in dep_names:
            errors.append(f"operator {d.get('name')!r} manages unknown deployment {d.get('manages')!r}")
    graph_rows = doc.get("graph") or []
    graph_names = {g.get("name") for g in graph_rows}
    for g in graph_rows:
        if g.get("name") not in dep_names:
            errors.append(f"graph service {g.get('name')!r} has no deployment")
    for e in doc.get("edges") or []:
        for end in (e.get("caller"), e.get("callee")):
            if end not in graph_names:
                errors.append(f"edge {e.get('caller')}->{e.get('callee')} references unknown service {end!r}")
    workload = doc.get("workload") or {}
    if graph_rows:
        if workload.get("entry") not in graph_names:
            errors.append(f"workload entry {workload.get('entry')!r} is not a graph service")
    if graph_rows and not errors:
        # cycle check via the real constructor
        try:
            DependencyGraph(
                entry=workload.get("entry"),
                services={
                    g["name"]: ServiceSpec(
                        g["name"],
                        float(g.get("capacity_rps_per_replica", 100.0)),
                        float(g.get("base_latency_ms", 10.0)),
                    )
                    for g in graph_rows
                },
                edges=[
                    DependencyEdge(
                        e["caller"], e["callee"],
                        float(e.get("timeout_ms", 250.0)), int(e.get("retries", 1)),
                        e.get("config"),
                    )
                    for e in doc.get("edges") or []
                ],
            )
        except ValueError as exc:
            errors.append(str(exc))
    return errors


def apply_manifest(doc: dict) -> LoadedEnvironment:
    errors = validate_manifest(doc)
    _require(not errors, "; ".join(errors))

    cluster = ClusterState()
    for n in doc["nodes"]:
        cluster.nodes[n["name"]] = Node(
            name=n["name"],
            cpu_millicores=int(n.get("cpu_millicores", 4000)),
            mem_mib=int(n.get("mem_mib", 8192)),
            labels=dict(n.get("labels") or {}),
            disk=DiskState(),
        )
    for c in doc.get("configs") or []:
        cluster.configs[c["name"]] = ConfigObject(
            name=c["name"],
            kind=c.get("kind", "AppConfig"),
            data=dict(c.get("data") or {}),
            consumers=list(c.get("consumers") or []),
        )
    for d in doc["deployments"]:
        requests = d.get("requests") or {}
        limits = d.get("limits") or {}
        template = PodTemplate(
            env={str(k): str(v) for k, v in (d.get("env") or {}).items()},
            ports=[int(p) for p in d.get("ports") or []],
            requests_cpu_m=int(requests.get("cpu_m", 100)),
            requests_mem_mib=int(requests.get("mem_mib", 128)),
            limit_cpu_m=int(limits["cpu_m"]) if "cpu_m" in limits else None,
            limit_mem_mib=int(limits["mem_mib"]) if "mem_mib" in limits else None,
            volumes=[str(v) for v in d.get("volumes") or []],
            node_selector=dict(d.get("node_selector") or {}),
            labels=dict(d.get("labels") or {}),
        )
        dep = Deployment(
            name=d["name"],
            replicas=int(d.get("replicas", 1)),
            image=str(d.get("image", f"{d['name']}:latest")),
            template=template,
            role=str(d.get("role", "workload")),
            tags=list(d.get("tags") or []),
            manages=d.get("manages"),
            known_good_image=str(d.get("image", f"{d['name']}:latest")),
            required_env=sorted((d.get("env") or {}).keys()),
            config_refs=list(d.get("configs") or []),
            config_checks=list(d.get("config_checks") or []),
        )
        if dep.role == "operator" and dep.manages:
            managed_row = next(r for r in doc["deployments"] if r["name"] == dep.manages)
            dep.managed_replicas = int(managed_row.get("replicas", 1))
        cluster.deployments[dep.name] = dep
        cluster.image_registry.add(dep.image)
    for s in doc.get("services") or []:
        cluster.services[s["name"]] = Service(
            name=s["name"],
            selector=dict(s.get("selector") or {"app": s["name"]}),
            port=int(s.get("port", 80)),
            target_port=int(s.get("target_port", s.get("port", 80))),
        )

    # steady-state bootstrap: schedule and start every pod we can
    for dep in sorted(cluster.deployments.values(), key=lambda d: d.name):
        cluster.refresh_applied_config(dep.name)
        for _ in range(dep.replicas):
            pod = cluster.create_pod(dep)
            for node in sorted(cluster.nodes.values(), key=lambda n: n.name):
                quota = cluster._quota_for(dep.name)
                over_quota = False
                if quota is not None and "mem_mib" in quota.data:
                    over_quota = (
                        cluster._quota_usage(quota) + pod.requests_mem_mib
                        > quota.data["mem_mib"]
                    )
                if not over_quota and cluster._node_fits(node, pod):
                    pod.node = node.name
                    break
            if pod.node is None:
                pod.condition = "Unschedulable: no node satisfies resource requests and selectors"
                continue
            if pod.image in cluster.image_registry:
                cluster._transition(pod, RUNNING)
                pod.started_at = 0.0
            else:
                cluster._transition(pod, IMAGEPULL)

    graph_rows = doc.get("graph") or []
    workload = doc.get("workload") or {}
    if graph_rows:
        graph = DependencyGraph(
            entry=workload["entry"],
            services={
                g["name"]: ServiceSpec(
                    name=g["name"],
                    capacity_rps_per_replica=float(g.get("capacity_rps_per_replica", 100.0)),
                    base_latency_ms=float(g.get("base_latency_ms", 10.0)),
                )
                for g in graph_rows
            },
            edges=[
                DependencyEdge(
                    caller=e["caller"],
                    callee=e["callee"],
                    timeout_ms=float(e.get("timeout_ms", 250.0)),
                    retries=int(e.get("retries", 1)),
                    config_ref=e.get("config"),
                )
                for e in doc.get("edges") or []
            ],
        )
    else:
        # degenerate single-vertex graph over the first deployment
        first = sorted(cluster.deployments)[0]
        graph = DependencyGraph(
            entry=first,
            services={first: ServiceSpec(first, 1000.0, 5.0)},
            edges=[],
        )
        workload.setdefault("entry", first)

    profile = WorkloadProfile(
        offered_rps=float(workload.get("offered_rps", 100.0)),
        client_timeout_ms=float(workload.get("client_timeout_ms", 1000.0)),
        ramp=[(float(a), float(r)) for a, r in (workload.get("ramp") or [])],
        trace_sample_rate=float(workload.get("trace_sample_rate", 0.01)),
    )
    return LoadedEnvironment(
        name=str(doc.get("name", "env")),
        cluster=cluster,
        graph=graph,
        profile=profile,
    )


def load_manifest_file(path: str) -> LoadedEnvironment:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return apply_manifest(doc)
