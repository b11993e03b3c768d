"""Command-line entry points for the simulation suite."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .analysis import heterogeneity_report
from .core import (
    default_ladder,
    read_jsonl,
    read_qoe_dataset_csv,
    session_from_dict,
    session_to_dict,
    write_jsonl,
)
from .harness import (
    ExperimentConfig,
    load_config,
    make_profile,
    microbenchmarks,
    run_experiment,
    save_profile,
    load_profile,
    simulate_session,
    write_microbench_csv,
)
from .qoe_model import train
from .synthetic import make_initial_dataset, make_users, stable_seed


def _cmd_profile_player(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    profile = make_profile(
        default_ladder(), cfg.player, trials=cfg.profile_trials,
        seed=stable_seed(cfg.seed, "profile"),
    )
    save_profile(args.out, profile)
    print(f"wrote {len(profile.table)} profile cells to {args.out}")


def _cmd_run_experiment(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    profile = load_profile(args.profile) if args.profile else None
    result = run_experiment(cfg, out_dir=args.out, profile=profile)
    n_ok = sum(1 for o in result.outcomes if o.record is not None)
    print(f"{n_ok}/{len(result.outcomes)} sessions completed; outputs in {args.out}")
    for scheme in cfg.schemes:
        print(f"  {scheme}: mean engagement {result.mean_engagement(scheme):.3f}")


def _cmd_microbench(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig(
        num_users=5, sessions_per_user=15, schemes=("vidhoc", "greedy_opt"),
    )
    rows = microbenchmarks(cfg)
    write_microbench_csv(args.out, rows)
    print(f"wrote {len(rows)} sweep rows to {args.out}")


def _cmd_analyze(args):
    ladder = default_ladder()
    if args.sessions:
        rows = [session_from_dict(d) for d in read_jsonl(args.sessions)]
    else:
        print("analyze requires --sessions (sessions.jsonl)", file=sys.stderr)
        sys.exit(2)
    report = heterogeneity_report(rows, ladder, seed=args.seed)
    with open(args.out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["incident", "group_by", "dispersion", "ci_low", "ci_high"])
        w.writeheader()
        for r in report:
            w.writerow(r)
    print(f"wrote {len(report)} report rows to {args.out}")


def _cmd_simulate_session(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    ladder = default_ladder()
    profile = load_profile(args.profile) if args.profile else make_profile(
        ladder, cfg.player, trials=cfg.profile_trials, seed=stable_seed(cfg.seed, "profile"),
    )
    from .core import constant_bitrate_manifest

    users = make_users(cfg.num_users, seed=stable_seed(cfg.seed, "users"),
                       noise_sigma=cfg.user_noise_sigma)
    user = users[args.user % len(users)]
    manifest = constant_bitrate_manifest("demo", args.chunks, ladder)
    forest = None
    if args.scheme != "no_opt":
        initial = make_initial_dataset(ladder, cfg.num_seed_users, cfg.seed_sessions_per_user,
                                       seed=stable_seed(cfg.seed, "initial"),
                                       noise_sigma=cfg.user_noise_sigma,
                                       num_parts=cfg.forest.num_parts)
        forest = train(initial, cfg.forest)
    outcome = simulate_session(
        user, args.scheme, args.session_index, manifest, forest, profile, cfg,
        session_tag=f"{user.user_id}:{args.scheme}:{args.session_index}",
    )
    if outcome.record is None:
        print("session failed (infeasible scheduling)")
        sys.exit(1)
    print(json.dumps(session_to_dict(outcome.record), indent=2, sort_keys=True))


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="qoesim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile-player", help="build the player transition profile")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", default="profile.jsonl")
    p.set_defaults(func=_cmd_profile_player)

    p = sub.add_parser("run-experiment", help="run the full multi-scheme experiment")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--profile", help="pre-built profile.jsonl (built if omitted)")
    p.set_defaults(func=_cmd_run_experiment)

    p = sub.add_parser("microbench", help="run the config sweeps")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--out", default="microbench.csv")
    p.set_defaults(func=_cmd_microbench)

    p = sub.add_parser("analyze", help="heterogeneity report from session logs")
    p.add_argument("--sessions", help="sessions.jsonl")
    p.add_argument("--dataset", help="qoe_dataset.csv (accepted, reserved for feature-level tools)")
    p.add_argument("--out", default="heterogeneity_report.csv")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("simulate-session", help="run and print a single session")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--profile", help="pre-built profile.jsonl")
    p.add_argument("--scheme", default="vidhoc")
    p.add_argument("--user", type=int, default=0)
    p.add_argument("--chunks", type=int, default=20)
    p.add_argument("--session-index", type=int, default=1)
    p.set_defaults(func=_cmd_simulate_session)

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
