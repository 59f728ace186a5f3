"""Release gate: ten checks, one test (and one verbose pass/fail line) each.

Run with ``pytest -v tests/test_acceptance.py``; the per-test PASSED/FAILED
lines are the acceptance checklist. Each test also prints the measured
numbers, which pytest shows with ``-s`` or on failure.
"""

import copy
import json
import random
import time

from sresim.agents import AGENTS, AgentSpec
from sresim.bench import RunRecord, aggregate, execute_cell, run_matrix
from sresim.faults import enumerate_pairs, load_census
from sresim.gateway import GatewaySession
from sresim.noise import PATTERNS, related_components
from sresim.oracles import (
    aggregate_answers,
    load_checklist,
    load_scoring_defaults,
    score_mitigation,
)
from sresim.scenarios import Problem, get_problem, list_problems, load_problem

from conftest import build_sim
from test_bench import mk_record

QUESTIONS = [f"D{d}-Q{q}" for d in (1, 2, 3) for q in (1, 2, 3)]

EXPECTED_CLASS_COUNTS = {
    "universal-kubernetes": 3475,
    "storage-dependent": 30,
    "daemonset-level": 3,
    "operator-level": 30,
    "mongodb-specific": 72,
    "valkey-specific": 2,
    "app-misconfig": 2,
    "node-kernel": 9,
}


def report(n: int, detail: str) -> None:
    print(f"[criterion {n:02d}] {detail}")


def test_criterion_01_coverage_enumeration_matches_frozen_counts():
    t0 = time.perf_counter()
    result = enumerate_pairs(load_census())
    elapsed = time.perf_counter() - t0
    assert result["per_class"] == EXPECTED_CLASS_COUNTS
    assert result["total"] == 3623
    assert elapsed < 1.0
    report(1, f"per-class counts match, total {result['total']}, {elapsed:.3f}s")


def _storm_run(retries: int, until: float, seed: int = 3):
    problem = copy.deepcopy(get_problem(9))
    problem.injections[0].params["set"]["retries"] = retries
    armed = load_problem(problem, seed=seed)
    armed.sim.advance(until)
    return armed.sim.engine.goodput_samples


def test_criterion_02_metastable_storm_outlives_its_trigger():
    nominal = 3000.0
    trigger_off = 360.0  # 60 s capacity-halving disturbance ends here

    t0 = time.perf_counter()
    samples = _storm_run(retries=30, until=980.0)
    storm_wall = time.perf_counter() - t0
    window = [s for s in samples if trigger_off < s.t <= trigger_off + 600.0]
    assert window[-1].t - window[0].t >= 599.0  # full post-trigger stretch observed
    worst = max(s.goodput_rps for s in window)
    assert worst < 0.10 * nominal
    assert storm_wall < 30.0

    t0 = time.perf_counter()
    control = _storm_run(retries=0, until=500.0)
    control_wall = time.perf_counter() - t0
    recovered = [
        s for s in control if s.t > trigger_off and s.goodput_rps >= 0.95 * nominal
    ]
    assert recovered and recovered[0].t <= trigger_off + 120.0
    assert control_wall < 30.0
    report(
        2,
        f"storm peak goodput {worst:.0f} rps over [{window[0].t:.0f},{window[-1].t:.0f}]s "
        f"({storm_wall:.1f}s wall); retries=0 recovered at t={recovered[0].t:.1f}s "
        f"({control_wall:.1f}s wall)",
    )


def test_criterion_03_oracle_agents_bracket_the_problem_set():
    problems = list_problems()
    assert len(problems) >= 12

    for noise_on in (False, True):
        for problem in problems:
            rec = execute_cell("oracle_informed", problem, noise_on, 0, base_seed=13)
            label = f"p{problem.id:02d} noise={'on' if noise_on else 'off'}"
            assert rec.diag_pass, f"oracle_informed diagnosis failed on {label}"
            assert rec.mitig_pass, f"oracle_informed mitigation failed on {label}"

    config_subset = [p for p in problems if p.family in ("misconfig", "code_defect")]
    fail_stop_subset = [p for p in problems if p.family == "fail_stop"]
    assert config_subset and fail_stop_subset
    config_passes = [
        p.id
        for p in config_subset
        if execute_cell("restart_loop", p, False, 0, base_seed=13).mitig_pass
    ]
    assert config_passes == []  # restarts never fix config/code/operator faults
    fail_stop_passes = [
        p.id
        for p in fail_stop_subset
        if execute_cell("restart_loop", p, False, 0, base_seed=13).mitig_pass
    ]
    assert len(fail_stop_passes) >= 1
    report(
        3,
        f"oracle_informed 100% diag+mitig on {len(problems)} problems x noise on/off; "
        f"restart_loop 0/{len(config_subset)} on config/code/operator, "
        f"{len(fail_stop_passes)}/{len(fail_stop_subset)} on fail-stop",
    )


def test_criterion_04_checklist_arithmetic_and_monotonicity():
    checklist = load_checklist()
    fixture = {q: q.startswith("D1") or q == "D3-Q1" for q in QUESTIONS}
    score = aggregate_answers(checklist, fixture).score
    assert abs(score - 4.0 / 9.0) <= 1e-12

    weights = {d["id"]: d["weight"] for d in checklist["dimensions"]}
    rng = random.Random(1234)
    for _ in range(1000):
        answers = {q: rng.random() < 0.5 for q in QUESTIONS}
        verdict = aggregate_answers(checklist, answers)
        by_hand = sum(
            weights[f"D{d}"] * sum(answers[f"D{d}-Q{q}"] for q in (1, 2, 3)) / 3.0
            for d in (1, 2, 3)
        )
        assert abs(verdict.score - by_hand) <= 1e-12  # weighted sum, nothing else
        noes = [q for q, a in answers.items() if not a]
        if noes:
            flipped = dict(answers)
            flipped[rng.choice(noes)] = True
            assert aggregate_answers(checklist, flipped).score >= verdict.score
    report(4, "fixture = 4/9 within 1e-12; weight-sum and monotonicity hold on 1000 verdicts")


def _fault_free_problem() -> Problem:
    return Problem(
        id=999,
        name="fault-free-noise",
        manifest="webshop",
        kind="single",
        family="",
        family_tag="new",
        horizon_s=3600.0,
        summary="",
        injections=[],
        reverts=[],
        workload_overrides={},
        ground_truth={},
    )


def test_criterion_05_noise_cadence_and_target_separation():
    armed = load_problem(_fault_free_problem(), seed=5, noise_on=True)
    armed.sim.advance(3600.0)
    acts = armed.noise.activations
    assert len(acts) == 24
    assert all(a.applied for a in acts)
    sim = armed.sim
    assert all(n.stress_factor == 1.0 for n in sim.cluster.nodes.values())
    assert all(not p.paused for p in sim.cluster.pods.values())
    assert not sim.engine.edge_effects
    verdict = score_mitigation(armed, load_scoring_defaults()["mitigation"])
    assert verdict.passed

    problems = list_problems()
    checked = 0
    for seed in range(100):
        problem = problems[seed % len(problems)]
        run = load_problem(problem, seed=seed, noise_on=True)
        roots = [(s.target_kind, s.target) for s in problem.injections]
        deps, nodes = related_components(run.sim, roots)
        for act in run.noise.activations:
            checked += 1
            if act.pattern == "node_stress":
                assert act.target not in nodes
            elif act.pattern in ("link_latency", "packet_drop"):
                u, v = act.target.split("->")
                assert u not in deps and v not in deps
            else:  # pause_restart_pod targets one deployment's pod
                assert act.target not in deps
    report(5, f"24/24 activations self-recovered, oracle healthy; {checked} noise targets across 100 seeded runs never touch root-cause components")


def test_criterion_06_never_submitting_agent_hits_both_caps():
    class Sleeper:
        def run(self, gateway, armed=None):
            while gateway.call("wait", {"seconds": 300.0}).get("ok"):
                pass

    AGENTS["sleeper"] = AgentSpec(
        name="sleeper", factory=Sleeper, privileged=False, description="never submits"
    )
    try:
        records = [
            execute_cell("sleeper", get_problem(1), False, i, base_seed=99)
            for i in range(2)
        ]
    finally:
        del AGENTS["sleeper"]
    for rec in records:
        assert not rec.diag_submitted and not rec.mitig_submitted
        assert rec.ttd_s == 1800.0 and rec.ttd_capped
        assert rec.ttm_s == 1800.0 and rec.ttm_capped
        assert not rec.diag_pass and not rec.mitig_pass and not rec.e2e
    stats = aggregate(records).configs[0]
    assert stats.mean_ttd == 1800.0 and stats.mean_ttm == 1800.0
    report(6, "TTD=TTM=1800 with fail verdicts; aggregate means sit on the cap")


def test_criterion_07_reruns_are_byte_identical(tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        run_matrix(
            ["restart_loop"],
            [1, 5],
            [True],
            runs_per_problem=1,
            base_seed=404,
            out_dir=out,
        )
        outputs.append(out)
    records_a = (outputs[0] / "records.jsonl").read_bytes()
    records_b = (outputs[1] / "records.jsonl").read_bytes()
    assert records_a == records_b
    config_a = (outputs[0] / "run_config.json").read_bytes()
    config_b = (outputs[1] / "run_config.json").read_bytes()
    assert config_a == config_b
    report(7, f"records.jsonl byte-identical across executions ({len(records_a)} bytes)")


def test_criterion_08_ten_thousand_calls_leak_no_injector_identifiers():
    armed = load_problem(14, seed=21, noise_on=True)
    session = GatewaySession(armed, turn_cost_s=0.0)
    armed.sim.advance(armed.problem.max_scripted_time() + 10.0)
    idents = sorted({s.lower() for s in armed.sim.injectors.identifier_strings()})
    assert idents

    rng = random.Random(8)
    kinds = ["pods", "deployments", "services", "nodes", "configs"]
    names = [d for d in armed.sim.cluster.deployments] + [
        c for c in armed.sim.cluster.configs
    ]

    def random_call():
        roll = rng.random()
        if roll < 0.35:
            return "cluster.exec", {"verb": rng.choice(["get", "describe", "top"]), "target_kind": rng.choice(kinds), "target": rng.choice(names) if rng.random() < 0.5 else ""}
        if roll < 0.45:
            return "cluster.exec", {"verb": "logs", "target_kind": "pods", "target": rng.choice(names)}
        if roll < 0.55:
            return "metrics.query", {"series": rng.choice(["", "client.goodput_rps", "service.error_rate", "service.latency_p99_ms", "node.cpu_used_pct"])}
        if roll < 0.65:
            return "logs.search", {"severity": rng.choice([None, "INFO", "WARN", "ERROR"]), "contains": rng.choice(["", "probe", "timeout", "error"]), "limit": rng.randint(1, 40)}
        if roll < 0.75:
            return "traces.get", {"status": rng.choice([None, "ok", "error"]), "limit": rng.randint(1, 10)}
        if roll < 0.85:
            return "wait", {"seconds": rng.random() * 0.05}
        if roll < 0.95:
            return "cluster.exec", {"verb": rng.choice(["restart", "scale", "run_probe"]), "target_kind": "deployment", "target": rng.choice(names), "payload": {"replicas": rng.randint(1, 3)}}
        return "cluster.exec", {"verb": "bogus-verb", "target_kind": "pods"}

    leaks = 0
    for _ in range(10_000):
        tool, params = random_call()
        envelope = session.call(tool, params)
        text = json.dumps(envelope).lower()
        if any(ident in text for ident in idents):
            leaks += 1
    assert leaks == 0
    report(8, f"0 of 10000 randomized responses contained any of {len(idents)} injector-plane identifiers")


def test_criterion_09_rate_identities_hold_on_synthetic_populations():
    rng = random.Random(99)
    populations = 0
    for _ in range(1000):
        n = rng.randint(1, 10)
        records = []
        for i in range(n):
            unscored = rng.random() < 0.15
            diag = (not unscored) and rng.random() < 0.5
            records.append(
                mk_record(
                    diag=diag,
                    mitig=rng.random() < 0.5,
                    diag_unscored=unscored,
                    run_index=i,
                )
            )
        stats = aggregate(records).configs[0]
        assert stats.e2e_rate <= stats.mitig_rate
        if stats.diag_rate is not None:
            assert stats.e2e_rate <= stats.diag_rate
        law = stats.mitig_rate_among_diag_scored
        if law is not None:
            total = 0
            if stats.p_m_given_d is not None:
                total += stats.p_m_given_d * stats.diag_rate
            if stats.p_m_given_not_d is not None:
                total += stats.p_m_given_not_d * (1 - stats.diag_rate)
            assert total == law  # exact rational arithmetic, no tolerance
        populations += 1
    report(9, f"E2E <= min(Diag, Mitig) and the conditional-split identity hold exactly on {populations} record sets")


def test_criterion_10_telemetry_is_sound_over_an_hour():
    sim = build_sim("webshop")
    tick = 0.1
    worst_residual = 0.0
    for _ in range(36_000):
        sim.advance(tick)
        for rt in sim.engine.last_runtimes.values():
            expected = rt.queue_before + (rt.arrivals_rps - rt.completions_rps - rt.drops_rps) * tick
            residual = abs(rt.queue_after - expected) / max(1.0, abs(expected))
            worst_residual = max(worst_residual, residual)
            assert residual <= 1e-6

    edges = sim.engine.graph.edge_set()
    span_edges = 0
    for root in sim.telemetry.traces:
        for span in root.walk():
            for child in span.children:
                span_edges += 1
                assert (span.service, child.service) in edges
    assert span_edges > 0
    report(10, f"{span_edges} span edges all in the dependency graph; worst conservation residual {worst_residual:.2e}")
