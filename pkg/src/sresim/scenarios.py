"""Problem catalog: reproducible incident scenarios over packaged manifests.

A problem file pins one environment manifest, a timeline of fault injections
(with optional scripted reverts for transient triggers), optional workload
overrides (e.g. a ramp), and the ground truth used for scoring. ``load_problem``
builds the simulation, schedules the timeline, and (optionally) arms the
background-noise schedule; the returned handle tracks live injections so
verdicts can ask "is the root cause actually gone?".

Injection events are guarded: if the target object does not exist yet when
the event fires (e.g. a pod name that is mid-roll), the injection retries
every second for up to 30 s before giving up loudly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources

import yaml

from .faults import FaultSpec, InjectionHandle, ROOT_CAUSE
from .manifest import apply_manifest
from .noise import NoiseSchedule
from .sim import Simulation

GUARD_RETRY_S = 1.0
GUARD_MAX_TRIES = 30


@dataclass
class InjectionStep:
    at: float
    injector: str
    target_kind: str
    target: str
    designation: str = ROOT_CAUSE
    params: dict = field(default_factory=dict)
    impact_note: str = ""


@dataclass
class Problem:
    id: int
    name: str
    manifest: str
    kind: str  # single | metastable | concurrent | correlated
    family: str
    family_tag: str  # ported | similar | new
    horizon_s: float
    summary: str
    injections: list[InjectionStep]
    reverts: list[dict]
    workload_overrides: dict
    ground_truth: dict
    nominal_rps: float | None = None

    def max_scripted_time(self) -> float:
        times = [step.at for step in self.injections]
        times += [float(rv["at"]) for rv in self.reverts]
        return max(times) if times else 0.0


def _problem_from_doc(doc: dict) -> Problem:
    steps = [
        InjectionStep(
            at=float(row["at"]),
            injector=row["injector"],
            target_kind=row["target_kind"],
            target=row["target"],
            designation=row.get("designation", ROOT_CAUSE),
            params=dict(row.get("params") or {}),
            impact_note=row.get("impact_note", ""),
        )
        for row in doc.get("injections") or []
    ]
    return Problem(
        id=int(doc["id"]),
        name=str(doc["name"]),
        manifest=str(doc["manifest"]),
        kind=str(doc.get("kind", "single")),
        family=str(doc.get("family", "")),
        family_tag=str(doc.get("family_tag", "new")),
        horizon_s=float(doc.get("horizon_s", 1800.0)),
        summary=" ".join(str(doc.get("summary", "")).split()),
        injections=steps,
        reverts=[dict(rv) for rv in doc.get("reverts") or []],
        workload_overrides=dict(doc.get("workload_overrides") or {}),
        ground_truth=dict(doc.get("ground_truth") or {}),
        nominal_rps=(float(doc["nominal_rps"]) if "nominal_rps" in doc else None),
    )


def _data_dir(kind: str):
    return resources.files("sresim.data").joinpath(kind)


def list_problems() -> list[Problem]:
    problems = []
    for entry in sorted(_data_dir("problems").iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".yaml"):
            continue
        problems.append(_problem_from_doc(yaml.safe_load(entry.read_text())))
    problems.sort(key=lambda p: p.id)
    return problems


def get_problem(ident: int | str) -> Problem:
    for p in list_problems():
        if p.id == ident or p.name == ident or str(p.id) == str(ident):
            return p
    raise KeyError(f"no such problem: {ident!r}")


def list_manifests() -> list[str]:
    return sorted(
        e.name[: -len(".yaml")]
        for e in _data_dir("manifests").iterdir()
        if e.name.endswith(".yaml")
    )


def load_manifest_doc(name: str) -> dict:
    return yaml.safe_load(_data_dir("manifests").joinpath(f"{name}.yaml").read_text())


@dataclass
class ArmedProblem:
    problem: Problem
    sim: Simulation
    noise: NoiseSchedule | None
    handles: dict[int, InjectionHandle] = field(default_factory=dict)

    def root_handles(self) -> list[InjectionHandle]:
        return [
            self.handles[i]
            for i, step in enumerate(self.problem.injections)
            if i in self.handles and step.designation == ROOT_CAUSE
        ]

    def all_injected(self) -> bool:
        return len(self.handles) == len(self.problem.injections)

    def faults_cleared(self) -> bool:
        """Every root-cause injection is in, and its effect is gone."""
        root_steps = [
            i for i, s in enumerate(self.problem.injections) if s.designation == ROOT_CAUSE
        ]
        if any(i not in self.handles for i in root_steps):
            return False
        return all(self.sim.injectors.is_cleared(self.handles[i]) for i in root_steps)

    def excluded_components(self) -> set[str]:
        if self.noise is None:
            return set()
        return self.noise.excluded_components(self.sim.now())


def load_problem(
    problem: Problem | int | str,
    seed: int = 0,
    noise_on: bool = False,
    noise_cfg: dict | None = None,
) -> ArmedProblem:
    if not isinstance(problem, Problem):
        problem = get_problem(problem)
    doc = load_manifest_doc(problem.manifest)
    env = apply_manifest(doc)
    if "offered_rps" in problem.workload_overrides:
        env.profile.offered_rps = float(problem.workload_overrides["offered_rps"])
    if "ramp" in problem.workload_overrides:
        env.profile.ramp = [
            (float(a), float(r)) for a, r in problem.workload_overrides["ramp"]
        ]
    if "client_timeout_ms" in problem.workload_overrides:
        env.profile.client_timeout_ms = float(
            problem.workload_overrides["client_timeout_ms"]
        )
    sim = Simulation(env.cluster, env.graph, env.profile, seed=seed)
    armed = ArmedProblem(problem=problem, sim=sim, noise=None)

    def fire(index: int, tries: int = 0) -> None:
        step = problem.injections[index]
        spec = FaultSpec(
            injector=step.injector,
            target_kind=step.target_kind,
            target=step.target,
            params=dict(step.params),
            designation=step.designation,
        )
        try:
            armed.handles[index] = sim.injectors.inject(spec)
        except KeyError:
            if tries + 1 >= GUARD_MAX_TRIES:
                raise RuntimeError(
                    f"injection target {step.target!r} never appeared for problem {problem.id}"
                )
            sim.schedule(GUARD_RETRY_S, lambda: fire(index, tries + 1), label="inject-retry")

    def revert(rv: dict) -> None:
        index = int(rv["index"])
        handle = armed.handles.get(index)
        if handle is None:  # injection was guard-delayed; try again shortly
            sim.schedule(GUARD_RETRY_S, lambda: revert(rv), label="revert-retry")
            return
        sim.injectors.revert(handle)

    for i, step in enumerate(problem.injections):
        sim.schedule_at(step.at, lambda i=i: fire(i), label=f"inject-{step.injector}")
    for rv in problem.reverts:
        sim.schedule_at(float(rv["at"]), lambda rv=rv: revert(rv), label="revert")

    if noise_on:
        cfg = dict(noise_cfg or {})
        targets = [(s.target_kind, s.target) for s in problem.injections]
        if cfg.get("seed") is not None:
            rng = random.Random(f"{cfg['seed']}/noise")
        else:
            rng = sim.rng.stream("noise")
        kwargs = {
            key: cfg[src]
            for key, src in (
                ("period_s", "period_s"),
                ("per_period", "per_period"),
                ("duration_s", "duration_s"),
            )
            if src in cfg
        }
        schedule = NoiseSchedule(
            sim, rng, targets, horizon_s=problem.horizon_s, **kwargs
        )
        schedule.arm()
        armed.noise = schedule
    return armed
