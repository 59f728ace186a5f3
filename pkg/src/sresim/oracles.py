"""Verdict logic: diagnosis checklist scoring and mitigation checking.

Diagnosis is scored against a fixed 3x3 checklist (localization,
characterization, scope). Each dimension's score is the fraction of its
questions answered yes; the aggregate is the weight-sum over dimensions and
passes at 2/3. Answers come either from the deterministic rule evaluator in
this module or from an external chat-completion endpoint.

Mitigation is a conjunction over live state at submission time: the injected
faults must actually be gone (state predicates, not "did you restart
something"), the cluster must report healthy, and the client must have seen a
clean trailing window of goodput. Time windows polluted by scheduled
background noise are skipped, walking back up to a few windows.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources

import yaml

DIAG_PASS_THRESHOLD = 2.0 / 3.0
CLIENT_HEALTH_RATIO = 0.99
CLIENT_WINDOW_S = 60.0
LOOKBACK_WINDOWS = 5
RECOVERY_FRACTION = 0.95

_EPS = 1e-9


def load_checklist() -> dict:
    doc = yaml.safe_load(resources.files("sresim.data").joinpath("checklist.yaml").read_text())
    total = sum(d["weight"] for d in doc["dimensions"])
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"checklist dimension weights sum to {total}, expected 1.0")
    return doc


def load_scoring_defaults() -> dict:
    return yaml.safe_load(resources.files("sresim.data").joinpath("oracle.yaml").read_text())


# ---------------------------------------------------------------------------
# diagnosis
# ---------------------------------------------------------------------------


@dataclass
class DiagnosisVerdict:
    answers: dict[str, bool]
    dimension_scores: dict[str, float]
    score: float
    passed: bool
    scored: bool = True  # False when the evaluator was unavailable
    evidence: dict[str, str] = field(default_factory=dict)
    confidence: str = "High"

    def as_dict(self) -> dict:
        return {
            "answers": dict(self.answers),
            "dimension_scores": {k: round(v, 6) for k, v in self.dimension_scores.items()},
            "score": round(self.score, 6),
            "passed": self.passed,
            "scored": self.scored,
            "confidence": self.confidence,
        }


def aggregate_answers(checklist: dict, answers: dict[str, bool], evidence: dict | None = None) -> DiagnosisVerdict:
    dim_scores: dict[str, float] = {}
    score = 0.0
    for dim in checklist["dimensions"]:
        qs = dim["questions"]
        yes = sum(1 for q in qs if answers.get(q["id"], False))
        s_d = yes / len(qs)
        dim_scores[dim["id"]] = s_d
        score += dim["weight"] * s_d
    passed = score >= DIAG_PASS_THRESHOLD - _EPS
    margin = abs(score - DIAG_PASS_THRESHOLD)
    confidence = "High" if margin >= 0.2 else ("Medium" if margin >= 0.1 else "Low")
    return DiagnosisVerdict(
        answers=dict(answers),
        dimension_scores=dim_scores,
        score=score,
        passed=passed,
        evidence=dict(evidence or {}),
        confidence=confidence,
    )


def _aliases(name: str) -> list[str]:
    low = name.lower()
    variants = {low, low.replace("-", " "), low.replace("-", "_"), low.replace("-", "")}
    return sorted(variants, key=len, reverse=True)


@dataclass
class Mention:
    component: str
    start: int
    end: int


def find_mentions(text: str, components: list[str]) -> list[Mention]:
    """All component mentions, longest-match wins at overlapping positions.

    "user-service-1" mentions the pod, not (additionally) the deployment
    "user-service" embedded in its name; a separate occurrence of the shorter
    name still counts.
    """
    low = text.lower()
    raw: list[Mention] = []
    for comp in components:
        for alias in _aliases(comp):
            # a dot blocks the boundary only when it joins another word
            # character, so "sessions.legacy.internal" is one hostname token
            # while a sentence-ending "sessions." still mentions sessions
            pattern = (
                r"(?<![\w-])(?<![\w-]\.)" + re.escape(alias) + r"(?![\w-])(?!\.[\w-])"
            )
            for m in re.finditer(pattern, low):
                raw.append(Mention(comp, m.start(), m.end()))
    raw.sort(key=lambda m: (m.start, -(m.end - m.start)))
    kept: list[Mention] = []
    for m in raw:
        if any(
            k.start <= m.start and m.end <= k.end and k.component != m.component
            for k in kept
        ):
            continue  # shadowed by a longer mention
        if any(k.component == m.component and k.start == m.start for k in kept):
            continue
        kept.append(m)
    return kept


# conservative per-family markers: asserting one of these claims that family
FAMILY_MARKERS: dict[str, tuple[str, ...]] = {
    "fail_stop": ("killed", "sigkill", "exit code 137", "oomkilled"),
    "fail_slow": ("cpu saturation", "cpu-saturat", "cpu stress", "noisy neighbor"),
    "storage": ("bad sector", "sector", "input/output error", "i/o error", "disk"),
    "misconfig": ("port", "environment variable", "image", "config", "quota", "selector"),
    "code_defect": ("regression", "bad release", "code bug", "reconcile bug", "buggy"),
    "overload": ("surge", "traffic spike", "overload"),
}


def builtin_evaluate(
    text: str,
    ground_truth: dict,
    components: list[str],
    checklist: dict | None = None,
) -> DiagnosisVerdict:
    """Deterministic rule evaluator over the 3x3 checklist.

    ``components`` is the full universe of nameable objects in the
    environment (deployments, services, nodes, configs) plus any
    ground-truth-specific names (e.g. the killed pod).
    """
    checklist = checklist or load_checklist()
    gt = ground_truth
    low = text.lower()
    origin = gt["origin"]
    contributing = list(gt.get("contributing") or [origin])
    affected = list(gt.get("affected") or [])
    involved = set(contributing) | set(affected) | {origin}
    universe = sorted(set(components) | involved)
    mentions = find_mentions(text, universe)
    mentioned = {m.component for m in mentions}
    evidence: dict[str, str] = {}
    answers: dict[str, bool] = {}

    # D1: localization
    answers["D1-Q1"] = origin in mentioned
    evidence["D1-Q1"] = f"origin {origin!r} mentioned: {answers['D1-Q1']}"
    first = mentions[0].component if mentions else None
    answers["D1-Q2"] = first == origin
    evidence["D1-Q2"] = f"first-named component: {first!r}"
    answers["D1-Q3"] = first is not None and first in involved
    evidence["D1-Q3"] = f"asserted origin {first!r} involved: {answers['D1-Q3']}"

    # D2: characterization
    mech = [k.lower() for k in gt.get("mechanism_keywords") or []]
    answers["D2-Q1"] = any(k in low for k in mech)
    evidence["D2-Q1"] = f"mechanism keyword hit: {next((k for k in mech if k in low), None)!r}"
    params = [str(p).lower() for p in gt.get("param_terms") or []]
    answers["D2-Q2"] = any(p in low for p in params)
    evidence["D2-Q2"] = f"param term hit: {next((p for p in params if p in low), None)!r}"
    true_family = gt.get("family", "")
    rival = None
    for family, markers in sorted(FAMILY_MARKERS.items()):
        if family == true_family:
            continue
        hit = next((mk for mk in markers if mk in low), None)
        if hit is not None:
            rival = (family, hit)
            break
    answers["D2-Q3"] = rival is None or answers["D2-Q1"]
    evidence["D2-Q3"] = f"rival family asserted: {rival!r}"

    # D3: scope
    outsiders = {
        m.component for m in mentions if m.component not in involved
    }
    answers["D3-Q1"] = not outsiders
    evidence["D3-Q1"] = f"uninvolved components named: {sorted(outsiders)!r}"
    required = set(contributing) | set(affected)
    # naming a pod of a required deployment counts for that deployment
    covered = set(mentioned)
    for m in mentions:
        for req in required:
            if m.component.startswith(f"{req}-"):
                covered.add(req)
    missing = required - covered
    answers["D3-Q2"] = not missing
    evidence["D3-Q2"] = f"missing required components: {sorted(missing)!r}"
    impact = [k.lower() for k in gt.get("impact_keywords") or []]
    answers["D3-Q3"] = any(k in low for k in impact)
    evidence["D3-Q3"] = f"impact keyword hit: {next((k for k in impact if k in low), None)!r}"

    return aggregate_answers(checklist, answers, evidence)


class ExternalEvaluatorError(RuntimeError):
    pass


class ChatCompletionEvaluator:
    """Scores a diagnosis by asking a chat-completion endpoint the checklist.

    The endpoint and key come from ``SRESIM_EVAL_URL`` / ``SRESIM_EVAL_KEY``
    unless passed explicitly. One retry; if both attempts fail the diagnosis
    is returned unscored rather than silently failed.
    """

    def __init__(self, url: str | None = None, api_key: str | None = None, model: str = "gpt-4o-mini", session=None):
        self.url = url or os.environ.get("SRESIM_EVAL_URL", "")
        self.api_key = api_key or os.environ.get("SRESIM_EVAL_KEY", "")
        self.model = model
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def _prompt(self, text: str, ground_truth: dict, checklist: dict) -> str:
        lines = [
            "You grade an incident diagnosis against ground truth.",
            "Answer every question with true or false; reply with a single JSON",
            'object mapping question id to boolean, e.g. {"D1-Q1": true, ...}.',
            "",
            f"Ground truth: {json.dumps(ground_truth, sort_keys=True)}",
            f"Diagnosis under review: {text!r}",
            "",
            "Questions:",
        ]
        for dim in checklist["dimensions"]:
            for q in dim["questions"]:
                lines.append(f"- {q['id']}: {q['text']} (Hint: {q['hint']})")
        return "\n".join(lines)

    def _ask(self, prompt: str) -> dict[str, bool]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = self._session.post(
            self.url,
            json={
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            },
            headers=headers,
            timeout=60,
        )
        if resp.status_code != 200:
            raise ExternalEvaluatorError(f"evaluator returned HTTP {resp.status_code}")
        content = resp.json()["choices"][0]["message"]["content"]
        match = re.search(r"\{.*\}", content, re.DOTALL)
        if not match:
            raise ExternalEvaluatorError("no JSON object in evaluator reply")
        parsed = json.loads(match.group(0))
        return {str(k): bool(v) for k, v in parsed.items()}

    def evaluate(self, text: str, ground_truth: dict, components: list[str], checklist: dict | None = None) -> DiagnosisVerdict:
        checklist = checklist or load_checklist()
        prompt = self._prompt(text, ground_truth, checklist)
        last_error = None
        for _ in range(2):  # one retry
            try:
                answers = self._ask(prompt)
                return aggregate_answers(checklist, answers, {"evaluator": "external"})
            except (ExternalEvaluatorError, KeyError, ValueError, OSError) as exc:
                last_error = exc
        verdict = aggregate_answers(checklist, {}, {"error": str(last_error)})
        verdict.scored = False
        verdict.passed = False
        verdict.confidence = "Low"
        return verdict


# ---------------------------------------------------------------------------
# mitigation
# ---------------------------------------------------------------------------


@dataclass
class MitigationVerdict:
    passed: bool
    fault_cleared: bool
    system_healthy: bool
    client_ok: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "fault_cleared": self.fault_cleared,
            "system_healthy": self.system_healthy,
            "client_ok": self.client_ok,
            "details": dict(self.details),
        }


def _client_window_ok(armed, now: float, cfg: dict) -> tuple[bool, dict]:
    """Mean goodput ratio over the freshest unmasked trailing window.

    Walks back up to ``lookback_windows`` windows when noise pollutes the
    recent ones; with nothing usable, the client signal is treated as
    unavailable and does not fail the verdict. A window is only evidence of
    recovery if it postdates the last mutating action — samples older than
    that reflect the un-mitigated system (or the fault's own damage) and
    must not decide the verdict either way.
    """
    window = float(cfg.get("window_s", CLIENT_WINDOW_S))
    ratio_needed = float(cfg.get("health_ratio", CLIENT_HEALTH_RATIO))
    lookback = int(cfg.get("lookback_windows", LOOKBACK_WINDOWS))
    samples = armed.sim.engine.goodput_samples
    noise = armed.noise
    last_write = max((e["at"] for e in armed.sim.cluster.audit_log), default=0.0)
    for k in range(lookback):
        hi = now - k * window
        lo = hi - window
        if lo < 0 or lo < last_write - _EPS:
            break
        in_window = [s for s in samples if lo < s.t <= hi]
        if not in_window:
            continue
        if noise is not None:
            usable = [s for s in in_window if not noise.masked_window(s.t, s.t)]
        else:
            usable = in_window
        if not usable:
            continue  # fully noise-polluted; look further back
        mean_ratio = sum(s.ratio for s in usable) / len(usable)
        detail = {
            "window": [round(lo, 1), round(hi, 1)],
            "mean_ratio": round(mean_ratio, 6),
            "samples": len(usable),
        }
        if armed.problem.kind == "metastable" and armed.problem.nominal_rps:
            floor = float(cfg.get("recovery_fraction", RECOVERY_FRACTION)) * armed.problem.nominal_rps
            mean_goodput = sum(s.goodput_rps for s in usable) / len(usable)
            detail["mean_goodput"] = round(mean_goodput, 3)
            detail["goodput_floor"] = round(floor, 3)
            return (mean_ratio >= ratio_needed - _EPS and mean_goodput >= floor - _EPS), detail
        return mean_ratio >= ratio_needed - _EPS, detail
    return True, {"note": "no unmasked client window available"}


def score_mitigation(armed, cfg: dict | None = None) -> MitigationVerdict:
    """Evaluate mitigation against live state at the current sim time."""
    cfg = dict(cfg or {})
    now = armed.sim.now()
    cleared = armed.faults_cleared()
    excluded = armed.excluded_components()
    health = armed.sim.health(exclude=excluded)
    client_ok, client_detail = _client_window_ok(armed, now, cfg)
    passed = cleared and health.healthy and client_ok
    return MitigationVerdict(
        passed=passed,
        fault_cleared=cleared,
        system_healthy=health.healthy,
        client_ok=client_ok,
        details={
            "at": round(now, 3),
            "health_reasons": health.reasons[:10],
            "excluded": sorted(excluded),
            "client": client_detail,
        },
    )
