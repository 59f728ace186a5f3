import pytest

from sresim.manifest import apply_manifest
from sresim.scenarios import load_manifest_doc
from sresim.sim import Simulation


def build_sim(manifest: str = "retrystorm", seed: int = 0, **profile_overrides) -> Simulation:
    """Fresh simulation over one of the packaged manifests."""
    env = apply_manifest(load_manifest_doc(manifest))
    for key, value in profile_overrides.items():
        setattr(env.profile, key, value)
    return Simulation(env.cluster, env.graph, env.profile, seed=seed)


@pytest.fixture
def sim():
    return build_sim()


@pytest.fixture
def webshop():
    return build_sim("webshop")
