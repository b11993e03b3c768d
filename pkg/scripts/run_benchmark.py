#!/usr/bin/env python3
"""Run the pinned longitudinal benchmark and print the headline numbers.

15 users x 60 sessions under all four bandwidth-control schemes, paired
assignment.  Writes sessions.jsonl / decisions.jsonl / summary.csv /
throughput.csv / curves.csv to --out and prints per-scheme engagement plus
the early-vs-late uncertainty decay of the adaptive scheme.

    python3 scripts/run_benchmark.py --out results/ [--profile profile.jsonl]
"""
import argparse
import time

import numpy as np

from qoesim.harness import benchmark_config, load_profile, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--profile", help="pre-built profile.jsonl (built if omitted)")
    args = ap.parse_args()

    cfg = benchmark_config()
    profile = load_profile(args.profile) if args.profile else None
    t0 = time.time()
    result = run_experiment(cfg, out_dir=args.out, profile=profile)
    elapsed = time.time() - t0

    n_ok = sum(1 for o in result.outcomes if o.record is not None)
    print(f"{n_ok}/{len(result.outcomes)} sessions completed in {elapsed:.0f}s; outputs in {args.out}")
    for scheme in cfg.schemes:
        full = result.mean_engagement(scheme)
        early = result.mean_engagement(scheme, range(1, 31))
        print(f"  {scheme:>10}: engagement {full:.3f} (sessions 1-30: {early:.3f})")

    def pattern_unc(lo, hi):
        vals = [
            o.pattern_uncertainty
            for o in result.outcomes
            if o.scheme == "vidhoc" and o.record is not None and lo <= o.session_index <= hi
        ]
        return float(np.mean(vals))

    e, l = pattern_unc(1, 20), pattern_unc(41, 60)
    print(f"  adaptive-scheme uncertainty: sessions 1-20 {e:.3f} -> 41-60 {l:.3f} (ratio {l / e:.3f})")


if __name__ == "__main__":
    main()
