#!/usr/bin/env python3
"""Build the player transition profile once and save it for reuse.

A saved profile lets repeated experiment runs skip the profiling pass:

    python3 scripts/build_profile.py --out profile.jsonl --trials 50
"""
import argparse

from qoesim.core import default_ladder
from qoesim.harness import benchmark_config, make_profile, save_profile
from qoesim.synthetic import stable_seed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="profile.jsonl")
    ap.add_argument("--trials", type=int, default=None,
                    help="trials per start cell (default: benchmark setting)")
    args = ap.parse_args()

    cfg = benchmark_config()
    trials = args.trials if args.trials is not None else cfg.profile_trials
    profile = make_profile(
        default_ladder(), cfg.player, trials=trials, seed=stable_seed(cfg.seed, "profile")
    )
    save_profile(args.out, profile)
    print(f"wrote {len(profile.table)} cells (branching {profile.branching()}) to {args.out}")


if __name__ == "__main__":
    main()
