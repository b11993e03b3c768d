#!/usr/bin/env python3
"""Heterogeneity report from a benchmark's session log.

Computes, for each incident type (stall / low bitrate / large switch) and
each grouping (user / device / video), how dispersed the per-group
engagement drops are, with bootstrap confidence intervals.

    python3 scripts/analyze_heterogeneity.py --sessions results/sessions.jsonl
"""
import argparse
import csv

from qoesim.analysis import heterogeneity_report
from qoesim.core import default_ladder, read_jsonl, session_from_dict


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sessions", required=True, help="sessions.jsonl from a benchmark run")
    ap.add_argument("--out", default="heterogeneity_report.csv")
    ap.add_argument("--min-group", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = [session_from_dict(d) for d in read_jsonl(args.sessions)]
    report = heterogeneity_report(
        rows, default_ladder(), min_group=args.min_group, seed=args.seed
    )
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["incident", "group_by", "dispersion", "ci_low", "ci_high"])
        w.writeheader()
        for r in report:
            w.writerow(r)
    print(f"wrote {len(report)} report rows to {args.out}")
    for r in report:
        print(f"  {r['incident']:>14} by {r['group_by']:>6}: dispersion {r['dispersion']:.2f} "
              f"[{r['ci_low']:.2f}, {r['ci_high']:.2f}]")


if __name__ == "__main__":
    main()
