"""Fault injectors and the compatibility-class census."""

import yaml
from importlib import resources

import pytest

from sresim.cluster import RUNNING, VerbCall
from sresim.faults import INJECTORS, FaultSpec, enumerate_pairs, load_census

from conftest import build_sim

FROZEN_CLASS_COUNTS = {
    "universal-kubernetes": 3475,
    "storage-dependent": 30,
    "daemonset-level": 3,
    "operator-level": 30,
    "mongodb-specific": 72,
    "valkey-specific": 2,
    "app-misconfig": 2,
    "node-kernel": 9,
}
FROZEN_TOTAL = 3623


def test_census_counts_match_the_frozen_fixture():
    result = enumerate_pairs(load_census())
    assert result["per_class"] == FROZEN_CLASS_COUNTS
    assert result["total"] == FROZEN_TOTAL


def test_census_total_agrees_with_a_brute_force_recount():
    """Independent recount straight off the YAML, no library code paths."""
    doc = yaml.safe_load(
        resources.files("sresim.data").joinpath("census.yaml").read_text()
    )
    expanded = []
    for row in doc["inventory"]:
        for i in range(1, int(row.get("count", 1)) + 1):
            expanded.append((row["kind"], f"{row['prefix']}-{i}", set(row.get("tags") or ())))
    pairs = set()
    for cls in doc["classes"]:
        want_kind = cls["selector"].get("kind")
        want_tag = cls["selector"].get("tag")
        for kind, name, tags in expanded:
            if kind != want_kind:
                continue
            if want_tag is not None and want_tag not in tags:
                continue
            for primitive in cls["primitives"]:
                pairs.add((primitive, name))
    assert len(pairs) == FROZEN_TOTAL


def test_inject_validates_target_kind(sim):
    sim.advance(5.0)
    with pytest.raises(ValueError, match="cannot target kind"):
        sim.injectors.inject(
            FaultSpec(injector="kill", target_kind="node", target="node-1", params={}, designation="root_cause")
        )


def test_every_injector_declares_its_surface():
    for name, injector in INJECTORS.items():
        assert injector.id == name
        assert injector.family
        assert injector.target_kinds
        assert injector.mechanism_keywords


def test_identifier_strings_cover_handles(sim):
    sim.advance(5.0)
    pod = sim.cluster.pods_of("api")[0]
    handle = sim.injectors.inject_raw("kill", "pod", pod.name)
    idents = sim.injectors.identifier_strings()
    assert handle.token in idents
    assert "kill" in idents
    assert "fxh-" in idents


def _fix_and_settle(sim, handle, settle_s=60.0):
    for call in INJECTORS[handle.spec.injector].suggested_fix(sim, handle):
        out = sim.execute_verb(call)
        assert out["ok"], out
    sim.advance(settle_s)


def test_kill_round_trip(sim):
    sim.advance(10.0)
    pod = [p for p in sim.cluster.pods_of("api") if p.phase == RUNNING][0]
    handle = sim.injectors.inject_raw("kill", "pod", pod.name)
    sim.advance(5.0)
    assert not sim.injectors.is_cleared(handle)
    _fix_and_settle(sim, handle)
    assert sim.injectors.is_cleared(handle)
    assert sim.health().healthy


def test_hw_stress_round_trip(webshop):
    # node-2 and node-3 share the app pool, so the cordon-and-drain fix has
    # somewhere to put the displaced pods
    webshop.advance(10.0)
    handle = webshop.injectors.inject_raw("hw_stress", "node", "node-2", {"factor": 0.25})
    webshop.advance(5.0)
    assert webshop.cluster.nodes["node-2"].stress_factor == pytest.approx(0.25)
    assert not webshop.injectors.is_cleared(handle)
    _fix_and_settle(webshop, handle)
    assert webshop.injectors.is_cleared(handle)
    assert webshop.health(exclude={"node-2"}).healthy


def test_deploy_fault_port_round_trip(sim):
    sim.advance(10.0)
    handle = sim.injectors.inject_raw(
        "deploy_fault", "deployment", "api", {"variant": "port", "port": 9090}
    )
    sim.advance(30.0)
    svc = sim.cluster.services["api"]
    assert not sim.cluster.service_routes(svc)
    assert not sim.injectors.is_cleared(handle)
    _fix_and_settle(sim, handle)
    assert sim.cluster.service_routes(svc)
    assert sim.injectors.is_cleared(handle)


def test_app_config_fault_round_trip(sim):
    sim.advance(10.0)
    handle = sim.injectors.inject_raw(
        "app_config_fault",
        "config",
        "rpc-settings",
        {"set": {"timeout_ms": 50, "retries": 30}, "restart_consumers": True},
    )
    sim.advance(30.0)
    assert not sim.injectors.is_cleared(handle)
    _fix_and_settle(sim, handle)
    assert sim.injectors.is_cleared(handle)
    assert sim.cluster.configs["rpc-settings"].data["timeout_ms"] == 250


def test_buggy_code_round_trip(webshop):
    webshop.advance(10.0)
    handle = webshop.injectors.inject_raw(
        "buggy_code",
        "deployment",
        "catalog",
        {"image": "shop/catalog:9.9.9-rc0", "error_rate": 0.4},
    )
    webshop.advance(30.0)
    assert not webshop.injectors.is_cleared(handle)
    assert webshop.engine.goodput_samples[-1].ratio < 0.95
    _fix_and_settle(webshop, handle)
    assert webshop.injectors.is_cleared(handle)
    assert webshop.engine.goodput_samples[-1].ratio == 1.0


def test_overload_round_trip(sim):
    sim.advance(10.0)
    handle = sim.injectors.inject_raw("overload", "workload", "frontend", {"multiplier": 55.0})
    sim.advance(60.0)
    assert sim.engine.goodput_samples[-1].ratio < 0.5
    assert not sim.injectors.is_cleared(handle)
    fixes = INJECTORS["overload"].suggested_fix(sim, handle)
    assert any(c.verb == "scale" for c in fixes)
    for call in fixes:
        assert sim.execute_verb(call)["ok"]
    sim.injectors.revert(handle)  # the surge itself subsides
    sim.advance(90.0)
    assert sim.injectors.is_cleared(handle)


def test_scheduler_fault_leaves_pods_pending(webshop):
    webshop.advance(10.0)
    handle = webshop.injectors.inject_raw(
        "platform_config_fault",
        "deployment",
        "metrics-collector",
        {"variant": "scheduler"},
    )
    webshop.advance(30.0)
    phases = {p.phase for p in webshop.cluster.pods_of("metrics-collector") if p.phase != "Terminating"}
    assert phases == {"Pending"}
    assert not webshop.injectors.is_cleared(handle)
    _fix_and_settle(webshop, handle)
    assert webshop.injectors.is_cleared(handle)


def test_buggy_operator_forces_replicas(webshop):
    webshop.advance(10.0)
    handle = webshop.injectors.inject_raw(
        "buggy_operator",
        "deployment",
        "autoscale-operator",
        {"image": "shop/autoscale-operator:1.0.0", "forces_replicas": 0},
    )
    webshop.advance(60.0)
    assert webshop.cluster.deployments["catalog"].replicas == 0
    _fix_and_settle(webshop, handle, settle_s=90.0)
    assert webshop.injectors.is_cleared(handle)
    assert webshop.cluster.deployments["catalog"].replicas == 2
