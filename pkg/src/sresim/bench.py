"""Evaluation matrix runner, record persistence, and report math.

A run matrix is (agent x problem x noise x run index). Every cell builds an
isolated simulation with a seed derived from the cell coordinates, drives the
agent through a gateway session, and persists one JSON record per cell as a
line in ``records.jsonl``. Records carry no wall-clock data, so re-running the
same matrix with the same base seed reproduces the files byte for byte.

Aggregation is exact: pass rates and the conditional-probability identity
  Mitig% = P(M|D) * Diag% + P(M|not D) * (1 - Diag%)
are computed with ``fractions.Fraction`` so report tests can assert equality,
not closeness. Time-to-diagnose / time-to-mitigate means include the cap value
for runs that never submitted, so slow failures stay visible in the mean.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .agents import AGENTS, build_agent
from .gateway import DEFAULT_HORIZON_S, DEFAULT_TURN_COST_S, GatewaySession, InProcessGateway
from .kernel import derive_seed
from .scenarios import Problem, get_problem, load_problem

TIME_CAP_S = 1800.0
RUNS_PER_PROBLEM = 3
WRITE_BURST_GAP_S = 60.0


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    agent: str
    problem_id: int
    problem: str
    family: str
    family_tag: str
    noise: bool
    run_index: int
    seed: int
    infra_error: str | None
    agent_error: str | None
    diag_submitted: bool
    diag_unscored: bool
    diag_pass: bool
    diag_score: float | None
    diag_dimensions: dict[str, float]
    ttd_s: float
    ttd_capped: bool
    mitig_submitted: bool
    mitig_pass: bool
    ttm_s: float
    ttm_capped: bool
    e2e: bool
    mitigation_attempts: int
    tool_counts: dict[str, int]
    calls: list[dict]
    redactions: int
    tokens: int | None = None

    def as_dict(self) -> dict:
        return {
            "agent": self.agent,
            "problem_id": self.problem_id,
            "problem": self.problem,
            "family": self.family,
            "family_tag": self.family_tag,
            "noise": self.noise,
            "run_index": self.run_index,
            "seed": self.seed,
            "infra_error": self.infra_error,
            "agent_error": self.agent_error,
            "diag_submitted": self.diag_submitted,
            "diag_unscored": self.diag_unscored,
            "diag_pass": self.diag_pass,
            "diag_score": self.diag_score,
            "diag_dimensions": dict(self.diag_dimensions),
            "ttd_s": self.ttd_s,
            "ttd_capped": self.ttd_capped,
            "mitig_submitted": self.mitig_submitted,
            "mitig_pass": self.mitig_pass,
            "ttm_s": self.ttm_s,
            "ttm_capped": self.ttm_capped,
            "e2e": self.e2e,
            "mitigation_attempts": self.mitigation_attempts,
            "tool_counts": dict(self.tool_counts),
            "calls": list(self.calls),
            "redactions": self.redactions,
            "tokens": self.tokens,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        return cls(**doc)


def mitigation_attempts(calls: list[dict]) -> int:
    """Write bursts: consecutive mutations separated by >=60s gaps count as
    distinct mitigation attempts."""
    writes = sorted(c["at"] for c in calls if c["category"] == "kubectl_write")
    attempts = 0
    last = None
    for at in writes:
        if last is None or at - last >= WRITE_BURST_GAP_S:
            attempts += 1
        last = at
    return attempts


def execute_cell(
    agent_name: str,
    problem: Problem,
    noise_on: bool,
    run_index: int,
    base_seed: int,
    turn_cost_s: float = DEFAULT_TURN_COST_S,
    horizon_s: float = DEFAULT_HORIZON_S,
    noise_cfg: dict | None = None,
) -> RunRecord:
    """Run one matrix cell in an isolated simulation."""
    seed = derive_seed(base_seed, agent_name, problem.id, int(noise_on), run_index)
    spec = AGENTS[agent_name]
    armed = load_problem(problem, seed=seed, noise_on=noise_on, noise_cfg=noise_cfg)
    session = GatewaySession(armed, horizon_s=horizon_s, turn_cost_s=turn_cost_s)
    agent = build_agent(agent_name)
    agent_error: str | None = None
    try:
        agent.run(InProcessGateway(session), armed=armed if spec.privileged else None)
    except Exception as exc:  # noqa: BLE001 - an agent crash is a timeout run, not a harness crash
        agent_error = f"{type(exc).__name__}: {exc}"
    out = session.outcome()
    dv = out.diagnosis_verdict
    mv = out.mitigation_verdict
    diag_submitted = out.diagnosed_at is not None
    mitig_submitted = out.mitigated_at is not None
    diag_unscored = bool(diag_submitted and dv is not None and not dv.scored)
    diag_pass = bool(dv is not None and dv.scored and dv.passed)
    mitig_pass = bool(mv is not None and mv.passed)
    ttd = out.diagnosed_at if diag_submitted else min(TIME_CAP_S, horizon_s)
    ttm = out.mitigated_at if mitig_submitted else min(TIME_CAP_S, horizon_s)
    calls = [
        {
            "at": round(c.at, 3),
            "tool": c.tool,
            "verb": c.params.get("verb") if c.tool == "cluster.exec" else None,
            "category": c.category,
            "ok": c.ok,
        }
        for c in session.calls
    ]
    return RunRecord(
        agent=agent_name,
        problem_id=problem.id,
        problem=problem.name,
        family=problem.family,
        family_tag=problem.family_tag,
        noise=noise_on,
        run_index=run_index,
        seed=seed,
        infra_error=None,
        agent_error=agent_error,
        diag_submitted=diag_submitted,
        diag_unscored=diag_unscored,
        diag_pass=diag_pass,
        diag_score=(round(dv.score, 6) if dv is not None and dv.scored else None),
        diag_dimensions=(
            {k: round(v, 6) for k, v in dv.dimension_scores.items()}
            if dv is not None and dv.scored
            else {}
        ),
        ttd_s=round(ttd, 3),
        ttd_capped=not diag_submitted,
        mitig_submitted=mitig_submitted,
        mitig_pass=mitig_pass,
        ttm_s=round(ttm, 3),
        ttm_capped=not mitig_submitted,
        e2e=diag_pass and mitig_pass,
        mitigation_attempts=mitigation_attempts(calls),
        tool_counts=dict(sorted(session.usage_counts().items())),
        calls=calls,
        redactions=out.redactions,
    )


def run_matrix(
    agents: list[str],
    problems: list[Problem | int],
    noise_flags: list[bool],
    runs_per_problem: int = RUNS_PER_PROBLEM,
    base_seed: int = 0,
    out_dir: str | Path | None = None,
    turn_cost_s: float = DEFAULT_TURN_COST_S,
    horizon_s: float = DEFAULT_HORIZON_S,
    noise_cfg: dict | None = None,
    progress=None,
) -> list[RunRecord]:
    """Execute the full matrix; persist records incrementally when out_dir is set."""
    resolved = [p if isinstance(p, Problem) else get_problem(p) for p in problems]
    for name in agents:
        if name not in AGENTS:
            raise KeyError(f"unknown agent {name!r}; known: {sorted(AGENTS)}")
    records: list[RunRecord] = []
    sink = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        config = {
            "agents": list(agents),
            "problems": [p.id for p in resolved],
            "noise": [bool(f) for f in noise_flags],
            "runs_per_problem": runs_per_problem,
            "base_seed": base_seed,
            "turn_cost_s": turn_cost_s,
            "horizon_s": horizon_s,
            "noise_schedule": dict(noise_cfg) if noise_cfg else None,
        }
        (out_path / "run_config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
        sink = open(out_path / "records.jsonl", "w")
    try:
        for agent_name in agents:
            for problem in resolved:
                for noise_on in noise_flags:
                    for run_index in range(runs_per_problem):
                        record = execute_cell(
                            agent_name,
                            problem,
                            noise_on,
                            run_index,
                            base_seed,
                            turn_cost_s=turn_cost_s,
                            horizon_s=horizon_s,
                            noise_cfg=noise_cfg,
                        )
                        records.append(record)
                        if sink is not None:
                            sink.write(json.dumps(record.as_dict(), sort_keys=True) + "\n")
                            sink.flush()
                        if progress is not None:
                            progress(record)
    finally:
        if sink is not None:
            sink.close()
    return records


def load_records(path: str | Path) -> list[RunRecord]:
    records = []
    with open(Path(path)) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(RunRecord.from_dict(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _fmt_frac(value: Fraction | None) -> str:
    if value is None:
        return "undef"
    return f"{float(value) * 100.0:5.1f}%"


@dataclass
class ConfigStats:
    """Exact pass-rate arithmetic for one (agent, noise) configuration."""

    agent: str
    noise: bool
    runs: int
    diag_scored: int
    diag_passes: int
    mitig_passes: int
    e2e_passes: int
    both_d_and_m: int
    m_given_not_d: int
    mean_ttd: float
    mean_ttm: float
    mean_tokens: float | None

    @property
    def diag_rate(self) -> Fraction | None:
        return Fraction(self.diag_passes, self.diag_scored) if self.diag_scored else None

    @property
    def mitig_rate(self) -> Fraction | None:
        return Fraction(self.mitig_passes, self.runs) if self.runs else None

    @property
    def e2e_rate(self) -> Fraction | None:
        return Fraction(self.e2e_passes, self.runs) if self.runs else None

    @property
    def p_m_given_d(self) -> Fraction | None:
        return Fraction(self.both_d_and_m, self.diag_passes) if self.diag_passes else None

    @property
    def p_m_given_not_d(self) -> Fraction | None:
        not_d = self.diag_scored - self.diag_passes
        return Fraction(self.m_given_not_d, not_d) if not_d else None

    @property
    def mitig_rate_among_diag_scored(self) -> Fraction | None:
        """Mitigation rate over the diagnosis-scored subpopulation; the
        conditional-probability identity is exact against this rate."""
        if not self.diag_scored:
            return None
        return Fraction(self.both_d_and_m + self.m_given_not_d, self.diag_scored)


@dataclass
class BenchReport:
    configs: list[ConfigStats]
    heat_grid: dict[str, dict[str, str]]  # problem -> config label -> "k/n"
    tag_partition: dict[str, dict[str, Fraction | None]]
    usage: dict[str, dict]

    def render(self) -> str:
        lines = []
        lines.append("configuration        runs  Diag%   Mitig%  E2E%    P(M|D)  P(M|!D) mTTD(s)  mTTM(s)")
        for c in self.configs:
            label = f"{c.agent}/{'noise' if c.noise else 'quiet'}"
            lines.append(
                f"{label:20s} {c.runs:4d}  {_fmt_frac(c.diag_rate)}  {_fmt_frac(c.mitig_rate)}  "
                f"{_fmt_frac(c.e2e_rate)}  {_fmt_frac(c.p_m_given_d):7s} {_fmt_frac(c.p_m_given_not_d):7s} "
                f"{c.mean_ttd:7.1f}  {c.mean_ttm:7.1f}"
            )
        lines.append("")
        lines.append("end-to-end successes per problem (k/n):")
        labels = [f"{c.agent}/{'noise' if c.noise else 'quiet'}" for c in self.configs]
        head = "problem".ljust(32) + "  ".join(f"{l:>24s}" for l in labels)
        lines.append(head)
        for problem in sorted(self.heat_grid):
            row = self.heat_grid[problem]
            cells = "  ".join(f"{row.get(l, '-'):>24s}" for l in labels)
            lines.append(f"{problem:32s}{cells}")
        lines.append("")
        lines.append("partition by problem lineage:")
        for tag in sorted(self.tag_partition):
            rates = self.tag_partition[tag]
            lines.append(
                f"  {tag:8s} diag={_fmt_frac(rates['diag'])} mitig={_fmt_frac(rates['mitig'])} "
                f"e2e={_fmt_frac(rates['e2e'])}"
            )
        lines.append("")
        lines.append("tool usage (mean per run; mean across runs per problem, then across problems):")
        for label in sorted(self.usage):
            u = self.usage[label]
            cats = ", ".join(f"{k}={v:.1f}" for k, v in sorted(u["category_means"].items()))
            lines.append(f"  {label}")
            lines.append(f"    {cats}")
            lines.append(
                f"    read:write ratio {u['read_write_ratio']}, reads before first write {u['reads_before_first_write']:.1f}"
            )
            lines.append(f"    top reads {u['top_reads']}, top writes {u['top_writes']}")
            lines.append(f"    mean mitigation attempts {u['mean_mitigation_attempts']:.2f}")
        return "\n".join(lines) + "\n"


def _config_label(agent: str, noise: bool) -> str:
    return f"{agent}/{'noise' if noise else 'quiet'}"


def aggregate(records: list[RunRecord]) -> BenchReport:
    if not records:
        raise ValueError("no records to aggregate")
    scored = [r for r in records if r.infra_error is None]
    by_config: dict[tuple[str, bool], list[RunRecord]] = {}
    for r in scored:
        by_config.setdefault((r.agent, r.noise), []).append(r)

    configs: list[ConfigStats] = []
    for (agent, noise) in sorted(by_config, key=lambda k: (k[0], k[1])):
        rs = by_config[(agent, noise)]
        diag_scored = [r for r in rs if not r.diag_unscored]
        diag_passes = sum(1 for r in diag_scored if r.diag_pass)
        tokens = [r.tokens for r in rs if r.tokens is not None]
        configs.append(
            ConfigStats(
                agent=agent,
                noise=noise,
                runs=len(rs),
                diag_scored=len(diag_scored),
                diag_passes=diag_passes,
                mitig_passes=sum(1 for r in rs if r.mitig_pass),
                e2e_passes=sum(1 for r in rs if r.e2e),
                both_d_and_m=sum(1 for r in diag_scored if r.diag_pass and r.mitig_pass),
                m_given_not_d=sum(1 for r in diag_scored if not r.diag_pass and r.mitig_pass),
                mean_ttd=sum(r.ttd_s for r in rs) / len(rs),
                mean_ttm=sum(r.ttm_s for r in rs) / len(rs),
                mean_tokens=(sum(tokens) / len(tokens)) if tokens else None,
            )
        )

    heat: dict[str, dict[str, str]] = {}
    for r in scored:
        label = _config_label(r.agent, r.noise)
        row = heat.setdefault(f"p{r.problem_id:02d}-{r.problem}", {})
        k, n = row.get(label, "0/0").split("/")
        row[label] = f"{int(k) + int(r.e2e)}/{int(n) + 1}"

    tags: dict[str, dict[str, Fraction | None]] = {}
    by_tag: dict[str, list[RunRecord]] = {}
    for r in scored:
        by_tag.setdefault(r.family_tag, []).append(r)
    for tag, rs in by_tag.items():
        diag_scored = [r for r in rs if not r.diag_unscored]
        tags[tag] = {
            "diag": Fraction(sum(1 for r in diag_scored if r.diag_pass), len(diag_scored)) if diag_scored else None,
            "mitig": Fraction(sum(1 for r in rs if r.mitig_pass), len(rs)) if rs else None,
            "e2e": Fraction(sum(1 for r in rs if r.e2e), len(rs)) if rs else None,
        }

    return BenchReport(
        configs=configs,
        heat_grid=heat,
        tag_partition=tags,
        usage=tool_usage_report(scored),
    )


def tool_usage_report(records: list[RunRecord]) -> dict[str, dict]:
    """Per-configuration tool usage: category means averaged across runs per
    problem and then across problems, pooled read:write ratio, mean reads
    before the first mutation, and top verbs."""
    out: dict[str, dict] = {}
    by_config: dict[tuple[str, bool], list[RunRecord]] = {}
    for r in records:
        if r.infra_error is None:
            by_config.setdefault((r.agent, r.noise), []).append(r)
    for (agent, noise), rs in sorted(by_config.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        by_problem: dict[int, list[RunRecord]] = {}
        for r in rs:
            by_problem.setdefault(r.problem_id, []).append(r)

        categories = sorted({c for r in rs for c in r.tool_counts})
        category_means: dict[str, float] = {}
        for cat in categories:
            per_problem = [
                sum(r.tool_counts.get(cat, 0) for r in runs) / len(runs)
                for runs in by_problem.values()
            ]
            category_means[cat] = sum(per_problem) / len(per_problem)

        total_reads = sum(r.tool_counts.get("kubectl_read", 0) for r in rs)
        total_writes = sum(r.tool_counts.get("kubectl_write", 0) for r in rs)
        ratio = f"{total_reads}:{total_writes}"  # reads:0 stays a sentinel, never divided

        def reads_before_first_write(record: RunRecord) -> int:
            count = 0
            for call in record.calls:
                if call["category"] == "kubectl_write":
                    return count
                if call["category"] == "kubectl_read":
                    count += 1
            return count

        rbfw_per_problem = [
            sum(reads_before_first_write(r) for r in runs) / len(runs)
            for runs in by_problem.values()
        ]
        attempts_per_problem = [
            sum(r.mitigation_attempts for r in runs) / len(runs) for runs in by_problem.values()
        ]

        read_verbs: Counter = Counter()
        write_verbs: Counter = Counter()
        for r in rs:
            for call in r.calls:
                if call["category"] == "kubectl_read":
                    read_verbs[call["verb"]] += 1
                elif call["category"] == "kubectl_write":
                    write_verbs[call["verb"]] += 1

        out[_config_label(agent, noise)] = {
            "category_means": category_means,
            "read_write_ratio": ratio,
            "reads_before_first_write": sum(rbfw_per_problem) / len(rbfw_per_problem),
            "mean_mitigation_attempts": sum(attempts_per_problem) / len(attempts_per_problem),
            "top_reads": read_verbs.most_common(5),
            "top_writes": write_verbs.most_common(5),
        }
    return out
