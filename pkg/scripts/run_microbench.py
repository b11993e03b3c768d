#!/usr/bin/env python3
"""Config sweeps: horizon depth, state noise, profiling window, time features.

Runs a reduced cohort through each sweep cell and writes one CSV row per
(sweep, value, scheme) with mean engagement, planner latency, and candidate
count.

    python3 scripts/run_microbench.py --out microbench.csv
"""
import argparse

from qoesim.harness import ExperimentConfig, microbenchmarks, write_microbench_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="microbench.csv")
    ap.add_argument("--users", type=int, default=5)
    ap.add_argument("--sessions", type=int, default=15)
    args = ap.parse_args()

    base = ExperimentConfig(
        num_users=args.users,
        sessions_per_user=args.sessions,
        schemes=("vidhoc", "greedy_opt"),
        profile_trials=50,
        video_pool_chunks=(20,),
    )
    rows = microbenchmarks(base)
    write_microbench_csv(args.out, rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")


if __name__ == "__main__":
    main()
