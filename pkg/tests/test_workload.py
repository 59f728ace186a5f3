"""Fluid engine: conservation, retry amplification, stress-visible latency."""

import math

from sresim.cluster import VerbCall

from conftest import build_sim

TICK = 0.1


def test_per_tick_flow_conservation():
    """queue' = queue + (arrivals - completions - drops) * dt, every tick."""
    sim = build_sim()
    for _ in range(3000):  # 300 simulated seconds, tick by tick
        sim.advance(TICK)
        for rt in sim.engine.last_runtimes.values():
            expected = rt.queue_before + (rt.arrivals_rps - rt.completions_rps - rt.drops_rps) * TICK
            assert abs(rt.queue_after - expected) <= 1e-6 * max(1.0, abs(expected))


def test_conservation_survives_capacity_loss():
    sim = build_sim()
    sim.advance(10.0)
    sim.injectors.inject_raw("hw_stress", "node", "node-2", {"factor": 0.25})
    for _ in range(600):
        sim.advance(TICK)
        for rt in sim.engine.last_runtimes.values():
            expected = rt.queue_before + (rt.arrivals_rps - rt.completions_rps - rt.drops_rps) * TICK
            assert abs(rt.queue_after - expected) <= 1e-6 * max(1.0, abs(expected))


def test_steady_state_is_healthy_at_nominal_load():
    sim = build_sim()
    sim.advance(120.0)
    sample = sim.engine.goodput_samples[-1]
    assert sample.ratio == 1.0
    assert sample.goodput_rps == sample.offered_rps == 100.0


def test_retry_amplification_is_one_under_timeout():
    sim = build_sim()
    sim.advance(60.0)
    assert sim.engine.last_runtimes["api"].retry_amplification == 1.0


def test_retry_amplification_caps_at_retries_plus_one():
    sim = build_sim()
    sim.advance(10.0)
    sim.execute_verb(
        VerbCall(
            verb="patch",
            target_kind="config",
            target="rpc-settings",
            payload={"data_set": {"timeout_ms": 50, "retries": 30}},
        )
    )
    for dep in ("frontend", "api"):
        sim.execute_verb(VerbCall(verb="restart", target_kind="deployment", target=dep))
    sim.advance(30.0)
    # drown the api tier so latency pins above any timeout
    sim.injectors.inject_raw("hw_stress", "node", "node-2", {"factor": 0.02})
    sim.advance(120.0)
    rt = sim.engine.last_runtimes["api"]
    assert rt.retry_amplification == 31.0  # retries + 1
    assert rt.arrivals_rps > 2000.0


def test_amplification_follows_latency_ratio_before_the_cap():
    sim = build_sim()
    sim.advance(10.0)
    sim.injectors.inject_raw("hw_stress", "node", "node-2", {"factor": 0.5})
    sim.advance(0.5)
    rt = sim.engine.last_runtimes["api"]
    edge = next(iter(sim.engine.graph.edges))
    timeout_ms, retries = sim.engine.edge_params(edge)
    seen_ms = rt.latency_s * 1000.0
    if seen_ms > timeout_ms:
        expected = min(retries + 1, math.ceil(seen_ms / timeout_ms))
        assert rt.retry_amplification == float(expected)


def test_node_stress_is_visible_in_latency():
    sim = build_sim()
    sim.advance(60.0)
    calm = sim.engine.last_runtimes["api"].latency_s
    sim.injectors.inject_raw("hw_stress", "node", "node-2", {"factor": 0.5})
    sim.advance(10.0)
    stressed = sim.engine.last_runtimes["api"].latency_s
    # the slowest replica dominates: base latency scales by 1/0.5
    assert stressed >= calm * 1.8


def test_goodput_collapses_when_a_tier_is_unavailable():
    sim = build_sim("webshop")
    sim.advance(30.0)
    for pod in list(sim.cluster.pods_of("sessions")):
        if pod.phase == "Running":
            sim.cluster.fail_pod(pod, "container terminated unexpectedly (exit code 137)")
    sim.advance(30.0)
    assert sim.engine.goodput_samples[-1].ratio == 0.0


def test_offered_rate_follows_the_ramp():
    sim = build_sim(offered_rps=100.0, ramp=[(50.0, 400.0)])
    sim.advance(40.0)
    assert sim.engine.goodput_samples[-1].offered_rps == 100.0
    sim.advance(30.0)
    assert sim.engine.goodput_samples[-1].offered_rps == 400.0


def test_metrics_are_emitted_every_five_seconds():
    sim = build_sim()
    sim.advance(30.0)
    points = sim.telemetry.query_metrics("client.goodput_rps")
    stamps = [p.timestamp for p in points]
    assert stamps == sorted(stamps)
    gaps = {round(b - a, 6) for a, b in zip(stamps, stamps[1:])}
    assert gaps == {5.0}
