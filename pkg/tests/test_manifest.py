"""Manifest loading and validation."""

import copy

import pytest

from sresim.manifest import ManifestError, apply_manifest, validate_manifest
from sresim.scenarios import list_manifests, load_manifest_doc

from conftest import build_sim


def test_all_packaged_manifests_validate():
    for name in list_manifests():
        assert validate_manifest(load_manifest_doc(name)) == []


@pytest.mark.parametrize("name", ["webshop", "datastore", "retrystorm"])
def test_every_manifest_bootstraps_healthy(name):
    sim = build_sim(name)
    sim.advance(60.0)
    health = sim.health()
    assert health.healthy, health.reasons
    assert sim.engine.goodput_samples[-1].ratio == 1.0


def test_unknown_config_reference_is_reported():
    doc = copy.deepcopy(load_manifest_doc("retrystorm"))
    doc["deployments"][0]["configs"].append("no-such-config")
    errors = validate_manifest(doc)
    assert any("unknown config 'no-such-config'" in e for e in errors)


def test_selectorless_service_is_reported():
    doc = copy.deepcopy(load_manifest_doc("retrystorm"))
    doc["services"][0]["selector"] = {"app": "ghost"}
    errors = validate_manifest(doc)
    assert any("selects no deployment" in e for e in errors)


def test_edge_to_unknown_service_is_reported():
    doc = copy.deepcopy(load_manifest_doc("retrystorm"))
    doc["edges"].append({"caller": "frontend", "callee": "billing"})
    errors = validate_manifest(doc)
    assert any("unknown service 'billing'" in e for e in errors)


def test_bad_workload_entry_is_reported():
    doc = copy.deepcopy(load_manifest_doc("retrystorm"))
    doc["workload"]["entry"] = "nowhere"
    errors = validate_manifest(doc)
    assert any("is not a graph service" in e for e in errors)


def test_dependency_cycle_is_reported():
    doc = copy.deepcopy(load_manifest_doc("retrystorm"))
    doc["edges"].append({"caller": "api", "callee": "frontend"})
    errors = validate_manifest(doc)
    assert errors, "a cyclic call graph must not validate"


def test_apply_manifest_rejects_invalid_documents():
    doc = copy.deepcopy(load_manifest_doc("retrystorm"))
    doc["nodes"] = []
    with pytest.raises(ManifestError):
        apply_manifest(doc)


def test_bootstrap_respects_node_selectors():
    sim = build_sim("retrystorm")
    sim.advance(10.0)
    for pod in sim.cluster.pods_of("frontend"):
        assert pod.node == "node-1"
    for pod in sim.cluster.pods_of("api"):
        assert pod.node == "node-2"


def test_required_env_and_known_good_image_freeze_at_load():
    sim = build_sim("webshop")
    dep = sim.cluster.deployments["frontend"]
    assert dep.known_good_image == dep.image
    assert "USER_SERVICE_ADDR" in dep.required_env
