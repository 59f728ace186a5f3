#!/usr/bin/env python3
"""Show the retry storm outliving its trigger, next to a retry-free control.

Both runs share one scenario: an aggressive rpc policy lands at t=5, load
ramps to 3000 rps at t=60, and the api tier loses half its capacity between
t=300 and t=360. With retries=30 the storm feeds itself long after the
capacity comes back; with retries=0 goodput snaps back within seconds.
"""

import argparse
import copy

from sresim.scenarios import get_problem, load_problem

BUCKETS = " .:-=+*#%@"


def run_variant(retries: int, until: float, seed: int):
    problem = copy.deepcopy(get_problem("checkout-retry-storm"))
    problem.injections[0].params["set"]["retries"] = retries
    armed = load_problem(problem, seed=seed)
    armed.sim.advance(until)
    return armed.sim.engine.goodput_samples


def sparkline(samples, nominal: float, step_s: float = 20.0) -> str:
    cells = []
    next_t = 0.0
    for s in samples:
        if s.t >= next_t:
            frac = min(1.0, s.goodput_rps / nominal)
            cells.append(BUCKETS[min(len(BUCKETS) - 1, int(frac * (len(BUCKETS) - 1) + 0.5))])
            next_t += step_s
    return "".join(cells)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--until", type=float, default=1200.0, help="simulated seconds")
    args = ap.parse_args()

    nominal = 3000.0
    print(f"scenario: checkout-retry-storm, trigger window [300, 360]s, seed {args.seed}")
    print(f"each cell = 20 s; scale ' {BUCKETS[1:]}' = 0..{nominal:.0f} rps goodput\n")
    for retries in (30, 0):
        samples = run_variant(retries, args.until, args.seed)
        tail = [s for s in samples if s.t > 360.0]
        recovered = next((s.t for s in tail if s.goodput_rps >= 0.95 * nominal), None)
        line = sparkline(samples, nominal)
        print(f"retries={retries:<2d} |{line}|")
        if recovered is None:
            floor = max(s.goodput_rps for s in tail)
            print(f"           no recovery by t={args.until:.0f}s; post-trigger goodput <= {floor:.0f} rps\n")
        else:
            print(f"           recovered to >=95% of nominal at t={recovered:.1f}s\n")


if __name__ == "__main__":
    main()
