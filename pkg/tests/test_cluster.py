"""Cluster state machine: phases, crashes, quotas, verbs, config snapshots."""

import pytest

from sresim.cluster import (
    CRASHLOOP,
    FAILED,
    IMAGEPULL,
    PENDING,
    RUNNING,
    TERMINATING,
    PHASE_GRAPH,
    VerbCall,
    crash_backoff,
)

from conftest import build_sim


def run_pods(sim, deployment):
    return [p for p in sim.cluster.pods_of(deployment) if p.phase == RUNNING]


def test_phase_graph_is_closed_under_its_own_names():
    phases = {PENDING, RUNNING, CRASHLOOP, IMAGEPULL, FAILED, TERMINATING}
    assert set(PHASE_GRAPH) == phases
    for targets in PHASE_GRAPH.values():
        assert targets <= phases


def test_illegal_transition_is_rejected(sim):
    sim.advance(10.0)
    pod = run_pods(sim, "frontend")[0]
    with pytest.raises(RuntimeError, match="illegal pod transition"):
        sim.cluster._transition(pod, PENDING)


def test_terminating_is_terminal(sim):
    assert PHASE_GRAPH[TERMINATING] == set()


def test_crash_backoff_doubles_and_caps():
    assert [crash_backoff(k) for k in range(6)] == [10.0, 20.0, 40.0, 80.0, 160.0, 300.0]
    assert crash_backoff(50) == 300.0


def test_failed_pod_is_not_replaced_automatically(sim):
    sim.advance(10.0)
    pod = run_pods(sim, "api")[0]
    sim.cluster.fail_pod(pod, "container terminated unexpectedly (exit code 137)")
    sim.advance(120.0)
    assert pod.phase == FAILED
    assert len(run_pods(sim, "api")) == 1  # the survivor; nobody rebuilt the dead one


def test_restart_replaces_failed_pods(sim):
    sim.advance(10.0)
    pod = run_pods(sim, "api")[0]
    sim.cluster.fail_pod(pod, "container terminated unexpectedly (exit code 137)")
    sim.advance(5.0)
    out = sim.execute_verb(VerbCall(verb="restart", target_kind="deployment", target="api"))
    assert out["ok"]
    sim.advance(30.0)
    assert len(run_pods(sim, "api")) == 2
    assert all(p.phase != FAILED for p in sim.cluster.pods_of("api"))


def test_unregistered_image_lands_in_imagepull_backoff(sim):
    sim.advance(10.0)
    out = sim.execute_verb(
        VerbCall(
            verb="patch",
            target_kind="deployment",
            target="api",
            payload={"image": "shop/api:99.0.0-nowhere"},
        )
    )
    assert out["ok"]
    sim.advance(60.0)
    assert {p.phase for p in sim.cluster.pods_of("api") if p.phase != TERMINATING} == {IMAGEPULL}


def test_template_edit_bumps_generation_and_rolls_pods(sim):
    sim.advance(10.0)
    before = {p.name for p in run_pods(sim, "frontend")}
    gen = sim.cluster.deployments["frontend"].generation
    sim.execute_verb(
        VerbCall(
            verb="set_env",
            target_kind="deployment",
            target="frontend",
            payload={"set": {"FEATURE_FLAG": "on"}},
        )
    )
    sim.advance(30.0)
    after = {p.name for p in run_pods(sim, "frontend")}
    assert sim.cluster.deployments["frontend"].generation == gen + 1
    assert before.isdisjoint(after)


def test_read_verbs_do_not_mutate_state(sim):
    sim.advance(20.0)
    before = sim.snapshot()
    for verb, kind in (
        ("get", "pods"),
        ("get", "deployments"),
        ("get", "services"),
        ("get", "nodes"),
        ("get", "configs"),
        ("describe", "deployment"),
        ("top", "nodes"),
    ):
        target = "api" if verb == "describe" else ""
        out = sim.execute_verb(VerbCall(verb=verb, target_kind=kind, target=target))
        assert out["ok"], out
    pod = run_pods(sim, "api")[0].name
    sim.execute_verb(VerbCall(verb="logs", target_kind="pod", target=pod))
    assert sim.snapshot() == before


def test_quota_patch_evicts_newest_consumer_pods(webshop):
    webshop.advance(20.0)
    out = webshop.execute_verb(
        VerbCall(
            verb="patch",
            target_kind="config",
            target="team-quota",
            payload={"data_set": {"mem_mib": 512}},
        )
    )
    assert out["ok"]
    webshop.advance(20.0)
    alive = [
        p
        for d in ("user-service", "catalog")
        for p in webshop.cluster.pods_of(d)
        if p.phase == RUNNING
    ]
    # 512 MiB holds exactly one 512 MiB pod across both consumers
    assert len(alive) == 1


def test_config_snapshot_is_stale_until_restart(sim):
    sim.advance(10.0)
    edge = next(iter(sim.engine.graph.edges))
    assert sim.engine.edge_params(edge) == (250.0, 1)
    sim.execute_verb(
        VerbCall(
            verb="patch",
            target_kind="config",
            target="rpc-settings",
            payload={"data_set": {"timeout_ms": 100, "retries": 0}},
        )
    )
    sim.advance(5.0)
    # running pods still hold the startup-time snapshot
    assert sim.engine.edge_params(edge) == (250.0, 1)
    sim.execute_verb(VerbCall(verb="restart", target_kind="deployment", target="frontend"))
    sim.advance(30.0)
    assert sim.engine.edge_params(edge) == (100.0, 0)


def test_restart_flushes_the_service_queue(sim):
    sim.advance(10.0)
    sim.engine.queues["api"] = 5000.0
    sim.execute_verb(VerbCall(verb="restart", target_kind="deployment", target="api"))
    sim.advance(1.0)
    assert sim.engine.queues["api"] < 5000.0


def test_health_check_exclusion_masks_a_component(sim):
    sim.advance(10.0)
    pod = run_pods(sim, "api")[0]
    sim.cluster.fail_pod(pod, "container terminated unexpectedly (exit code 137)")
    sim.advance(5.0)
    assert not sim.health().healthy
    masked = sim.health(exclude={"api", pod.name})
    assert masked.healthy, masked.reasons


def test_write_verbs_append_to_the_audit_log(sim):
    sim.advance(10.0)
    n = len(sim.cluster.audit_log)
    sim.execute_verb(VerbCall(verb="scale", target_kind="deployment", target="api", payload={"replicas": 3}))
    sim.execute_verb(VerbCall(verb="get", target_kind="pods"))
    assert len(sim.cluster.audit_log) == n + 1
    entry = sim.cluster.audit_log[-1]
    assert entry["verb"] == "scale" and entry["target"] == "api"
