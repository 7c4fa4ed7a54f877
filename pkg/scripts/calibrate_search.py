"""Calibrate the scan+churn search-improvement check.

Builds a scan+churn composite trace, reports how the LRU and LFU seeds and a
few hand-written priority functions do on it, then runs several seeded mock
searches and prints the improvement of each over the best seed.

    python scripts/calibrate_search.py --runs 10 --rounds 20
"""
from __future__ import annotations

import argparse
import os
import tempfile
import time

from policyforge.dsl.library import EXAMPLE_SCORE
from policyforge.dsl.parser import parse
from policyforge.search import EvaluatorSpec, SearchConfig, build_evaluator, run_search

DEFAULT_PHASES = "churn:3000:400,scan:1500,churn:3000:400,scan:1500,churn:3000:400"

REFERENCE = {
    "lru": "return last_access_time;",
    "lfu": "return count;",
    "count/size": "return count * 100 / size;",
    "example": EXAMPLE_SCORE,
}


def spec_for(args) -> EvaluatorSpec:
    return EvaluatorSpec(
        kind="cache",
        synth="scan_churn",
        synth_phases=args.phases,
        synth_size=args.size,
        synth_seed=args.trace_seed,
        capacity=args.capacity,
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--phases", default=DEFAULT_PHASES)
    ap.add_argument("--size", default="uniform:1:100")
    ap.add_argument("--capacity", default="10%")
    ap.add_argument("--trace-seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--candidates", type=int, default=25)
    ap.add_argument("--threshold", type=float, default=0.02)
    args = ap.parse_args(argv)

    spec = spec_for(args)
    ev = build_evaluator(spec)
    print(f"trace: {len(ev.trace)} requests, capacity {ev.config.capacity_bytes} bytes")
    ref = {name: ev.evaluate(parse(src, "cache")) for name, src in REFERENCE.items()}
    for name, fit in ref.items():
        print(f"  {name:>12}: fitness {fit:.4f}")
    best_seed = max(ref["lru"], ref["lfu"])

    wins = 0
    with tempfile.TemporaryDirectory() as tmp:
        for run in range(args.runs):
            cfg = SearchConfig(
                rounds=args.rounds,
                candidates_per_round=args.candidates,
                seed=run,
                evaluator=spec,
                db_path=os.path.join(tmp, f"run{run}.jsonl"),
            )
            t0 = time.perf_counter()
            res = run_search(cfg, evaluator=ev)
            gain = res.fitness - best_seed
            wins += gain >= args.threshold
            print(f"run {run}: best {res.fitness:.4f} gain {100 * gain:+.2f}pp ({time.perf_counter() - t0:.1f}s)")
    print(f"{wins}/{args.runs} runs gained at least {100 * args.threshold:.1f}pp")


if __name__ == "__main__":
    main()
