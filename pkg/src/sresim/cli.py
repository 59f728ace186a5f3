"""Command line entry points.

Subcommands:
  run                  execute an agent x problem x noise matrix
  report               aggregate a records.jsonl directory into a text report
  list-problems        print the problem registry with lineage/mode tags
  enumerate-coverage   count viable (primitive, target) pairs per class

``run`` accepts either flags or a YAML/JSON run configuration file
(``--config``); explicit flags win over file values. External diagnosis
scoring, when enabled, reads its endpoint from SRESIM_EVAL_URL and
SRESIM_EVAL_KEY.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import bench
from .agents import AGENTS
from .faults import enumerate_pairs, load_census
from .gateway import DEFAULT_HORIZON_S, DEFAULT_TURN_COST_S
from .scenarios import get_problem, list_problems


def _parse_problem_ids(text: str) -> list[int]:
    if text.strip().lower() == "all":
        return [p.id for p in list_problems()]
    ids = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        ids.append(get_problem(chunk).id)
    if not ids:
        raise ValueError(f"no problems selected from {text!r}")
    return ids


def _noise_flags(mode: str) -> list[bool]:
    mode = mode.lower()
    if mode == "on":
        return [True]
    if mode == "off":
        return [False]
    if mode == "both":
        return [False, True]
    raise ValueError(f"--noise must be on, off, or both (got {mode!r})")


def _load_run_config(path: str) -> dict:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"run config {path} must be a mapping")
    return doc


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args.config) if args.config else {}

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        if key in cfg and cfg[key] is not None:
            return cfg[key]
        return default

    agents = pick(args.agent, "agents", None)
    if agents is None:
        print("error: --agent is required (or 'agents:' in the run config)", file=sys.stderr)
        return 2
    if isinstance(agents, str):
        agents = [a.strip() for a in agents.split(",") if a.strip()]
    problems_arg = pick(args.problems, "problems", "all")
    if isinstance(problems_arg, list):
        problem_ids = [get_problem(p).id for p in problems_arg]
    else:
        problem_ids = _parse_problem_ids(str(problems_arg))
    noise_flags = _noise_flags(str(pick(args.noise, "noise", "off")))
    runs = int(pick(args.runs, "runs", bench.RUNS_PER_PROBLEM))
    seed = int(pick(args.seed, "seed", 0))
    turn_cost = float(pick(args.turn_cost_seconds, "turn_cost_s", DEFAULT_TURN_COST_S))
    horizon = float(pick(args.horizon_seconds, "horizon_s", DEFAULT_HORIZON_S))
    out_dir = pick(args.out, "out", "runs/latest")
    noise_cfg = cfg.get("noise_schedule") or None

    def progress(record: bench.RunRecord) -> None:
        flag = "noise" if record.noise else "quiet"
        print(
            f"[{record.agent}] p{record.problem_id:02d} {flag} run{record.run_index}: "
            f"diag={'pass' if record.diag_pass else 'fail'} "
            f"mitig={'pass' if record.mitig_pass else 'fail'} "
            f"ttd={record.ttd_s:.0f}s ttm={record.ttm_s:.0f}s"
        )

    records = bench.run_matrix(
        agents,
        problem_ids,
        noise_flags,
        runs_per_problem=runs,
        base_seed=seed,
        out_dir=out_dir,
        turn_cost_s=turn_cost,
        horizon_s=horizon,
        noise_cfg=noise_cfg,
        progress=progress,
    )
    report = bench.aggregate(records)
    text = report.render()
    Path(out_dir, "report.txt").write_text(text)
    print()
    print(text, end="")
    print(f"\n{len(records)} records -> {Path(out_dir) / 'records.jsonl'}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    records_path = Path(args.indir) / "records.jsonl"
    if not records_path.exists():
        print(f"error: {records_path} not found", file=sys.stderr)
        return 2
    records = bench.load_records(records_path)
    report = bench.aggregate(records)
    print(report.render(), end="")
    return 0


def cmd_list_problems(_args: argparse.Namespace) -> int:
    print(f"{'id':>3} {'name':32} {'manifest':10} {'kind':12} {'family':12} {'lineage':8} injections")
    for p in list_problems():
        print(
            f"{p.id:>3} {p.name:32} {p.manifest:10} {p.kind:12} {p.family:12} "
            f"{p.family_tag:8} {len(p.injections)}"
        )
    print(f"\nagents: {', '.join(sorted(AGENTS))}")
    return 0


def cmd_enumerate_coverage(args: argparse.Namespace) -> int:
    census = load_census()
    result = enumerate_pairs(census)
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))
        return 0
    print(f"{'class':28} pairs")
    for name, count in result["per_class"].items():
        print(f"{name:28} {count}")
    print(f"{'total (deduplicated)':28} {result['total']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sresim", description="fault-injection benchmark over a simulated cluster"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an evaluation matrix")
    run_p.add_argument("--agent", help="comma-separated agent names", default=None)
    run_p.add_argument("--problems", help="comma-separated ids/names, or 'all'", default=None)
    run_p.add_argument("--noise", choices=["on", "off", "both"], default=None)
    run_p.add_argument("--runs", type=int, default=None, help="runs per problem")
    run_p.add_argument("--seed", type=int, default=None, help="base seed for the matrix")
    run_p.add_argument("--turn-cost-seconds", type=float, default=None,
                       help="simulated seconds charged per tool call")
    run_p.add_argument("--horizon-seconds", type=float, default=None,
                       help="simulated session budget per run")
    run_p.add_argument("--out", default=None, help="output directory for records and report")
    run_p.add_argument("--config", default=None, help="YAML/JSON run configuration file")
    run_p.set_defaults(func=cmd_run)

    report_p = sub.add_parser("report", help="aggregate persisted records")
    report_p.add_argument("--in", dest="indir", required=True, help="directory with records.jsonl")
    report_p.set_defaults(func=cmd_report)

    list_p = sub.add_parser("list-problems", help="print the problem registry")
    list_p.set_defaults(func=cmd_list_problems)

    cov_p = sub.add_parser("enumerate-coverage", help="count viable fault/target pairs")
    cov_p.add_argument("--json", action="store_true", help="machine-readable output")
    cov_p.set_defaults(func=cmd_enumerate_coverage)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
