"""Quality-pattern and bandwidth-schedule selection.

Candidates are enumerated over a short look-ahead horizon of coalesced
segments; beyond the horizon the player is assumed to adapt perfectly to a
pinned constant level.  The chosen action maximizes predicted engagement
plus a weighted uncertainty bonus, subject to an average-bandwidth budget.
Schedule selection chains the player's empirical transition profile to
weight each reachable quality pattern by its probability.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    BITRATE_BUCKET_KBPS,
    REBUF_BUCKET_S,
    BandwidthSchedule,
    PlayerState,
    QualityPattern,
    SegmentQuality,
    StateBucket,
    VideoManifest,
    bucket_midpoint,
    coalesce,
    expand_to_chunks,
    quantize_state,
)
from .player import ProfileGapError, TransitionProfile
from .qoe_model import QoeForest, extract_features, predict_qoe_batch, uncertainty_batch

FEASIBILITY_EPS_KBPS = 1.0


class InfeasibleError(RuntimeError):
    """No candidate satisfies the bandwidth constraint."""


@dataclass(frozen=True)
class SchedulerConfig:
    horizon_segments: int = 2
    coalesce_factor: int = 4
    bandwidth_limit_kbps: float = 600.0
    candidate_grid_kbps: tuple[float, ...] | None = None  # default: the ladder
    scheme: str = "vidhoc"
    qoe_weight: float = 1.0
    uncertainty_weight: float = 1.0  # lambda
    pf_window_sessions: int = 30

    def __post_init__(self):
        if self.horizon_segments < 1:
            raise ValueError("horizon must be >= 1")
        if self.bandwidth_limit_kbps <= 0:
            raise ValueError("bandwidth limit must be positive")

    def grid(self, manifest: VideoManifest) -> tuple[float, ...]:
        return self.candidate_grid_kbps or manifest.ladder.levels


@dataclass
class DecisionLog:
    """Per-decision audit record emitted to decisions.jsonl."""

    entries: list[dict] = field(default_factory=list)

    def record(self, **kw) -> None:
        self.entries.append(kw)


def objective_value(
    f: QoeForest,
    pattern: QualityPattern,
    manifest: VideoManifest,
    uncertainty_weight: float = 1.0,
    qoe_weight: float = 1.0,
) -> float:
    x = extract_features(pattern, manifest.ladder, num_parts=f.config.num_parts)
    xs = x[None, :]
    return float(qoe_weight * predict_qoe_batch(f, xs)[0] + uncertainty_weight * uncertainty_batch(f, xs)[0])


def bandwidth_usage(pattern: QualityPattern, predicted_qoe: float, manifest: VideoManifest) -> float:
    """Mean bitrate (Kbps) over the expected watched prefix of the video."""
    if predicted_qoe <= 0:
        return 0.0
    per_chunk = expand_to_chunks(pattern.bitrates(), manifest.num_chunks, pattern.coalesce_factor)
    watched = min(math.ceil(predicted_qoe * manifest.num_chunks), manifest.num_chunks)
    dur = manifest.ladder.chunk_duration_s
    return sum(per_chunk[:watched]) * dur / (predicted_qoe * manifest.duration_s)


def pinned_level(manifest: VideoManifest, limit_kbps: float) -> float:
    """Largest ladder level whose constant streaming respects the limit."""
    idx = manifest.ladder.level_at_most(limit_kbps + FEASIBILITY_EPS_KBPS)
    if idx is None:
        raise InfeasibleError(f"limit {limit_kbps} Kbps is below the ladder minimum")
    return manifest.ladder.levels[idx]


def _assemble_pattern(
    prefix: tuple[SegmentQuality, ...],
    horizon: tuple[SegmentQuality, ...],
    tail_level: float,
    total_segments: int,
    coalesce_factor: int,
) -> QualityPattern:
    segs = list(prefix) + list(horizon)
    while len(segs) < total_segments:
        prev = segs[-1].bitrate_kbps if segs else tail_level
        sw = abs(tail_level - prev) if segs else 0.0
        segs.append(SegmentQuality(bitrate_kbps=tail_level, rebuffer_s=0.0, switch_kbps=sw))
    return QualityPattern(tuple(segs[:total_segments]), coalesce_factor=coalesce_factor)


def _score_patterns(f, patterns, manifest, config):
    """(objective, qoe term, uncertainty, usage) per pattern, one forest call."""
    xs = np.stack([extract_features(p, manifest.ladder, num_parts=f.config.num_parts) for p in patterns])
    counts = f.votes(xs)
    qoes = (np.argmax(counts, axis=1) + 0.5) / counts.shape[1]
    top2 = np.sort(counts, axis=1)[:, -2:]
    uncs = 1.0 - (top2[:, 1] - top2[:, 0]) / f.num_trees
    objs = config.qoe_weight * qoes + config.uncertainty_weight * uncs
    usages = np.array([bandwidth_usage(p, q, manifest) for p, q in zip(patterns, qoes)])
    return objs, qoes, uncs, usages


def _better(cand: tuple, best: tuple | None) -> bool:
    """Strictly-better comparison implementing the tie-break chain.

    Keys are (objective, qoe, -usage); iterating candidates in lexicographic
    order and replacing only on strict improvement keeps the smallest.
    """
    if best is None:
        return True
    for c, b in zip(cand, best):
        if c > b + 1e-12:
            return True
        if c < b - 1e-12:
            return False
    return False


def select_quality_pattern(
    f: QoeForest,
    manifest: VideoManifest,
    config: SchedulerConfig,
    prefix: tuple[SegmentQuality, ...] = (),
    current_bitrate_kbps: float | None = None,
) -> QualityPattern:
    """Feasible argmax of the objective over ladder^horizon candidate patterns."""
    g = config.coalesce_factor
    total_segments = coalesce(manifest.num_chunks, manifest.ladder.chunk_duration_s, g)
    remaining = total_segments - len(prefix)
    if remaining <= 0:
        raise ValueError("no segments left to plan")
    horizon = min(config.horizon_segments, remaining)
    tail = pinned_level(manifest, config.bandwidth_limit_kbps)

    prev_br = prefix[-1].bitrate_kbps if prefix else current_bitrate_kbps
    candidates = []
    for combo in itertools.product(manifest.ladder.levels, repeat=horizon):
        segs = []
        prev = prev_br
        for br in combo:
            sw = 0.0 if prev is None else abs(br - prev)
            if not segs and not prefix:
                sw = 0.0  # session opening carries no switch
            segs.append(SegmentQuality(bitrate_kbps=br, rebuffer_s=0.0, switch_kbps=sw))
            prev = br
        candidates.append(_assemble_pattern(prefix, tuple(segs), tail, total_segments, g))

    objs, qoes, _, usages = _score_patterns(f, candidates, manifest, config)
    best = None
    best_pattern = None
    for pat, obj, qoe, usage in zip(candidates, objs, qoes, usages):
        if usage > config.bandwidth_limit_kbps + FEASIBILITY_EPS_KBPS:
            continue
        key = (obj, qoe, -usage)
        if _better(key, best):
            best = key
            best_pattern = pat
    if best_pattern is None:
        raise InfeasibleError("no feasible quality pattern under the bandwidth limit")
    return best_pattern


def enumerate_outcomes(
    schedule_kbps: tuple[float, ...],
    profile: TransitionProfile,
    start_state: PlayerState,
) -> list[tuple[float, tuple[StateBucket, ...]]]:
    """All (probability, state-bucket path) outcomes of a horizon schedule."""
    start = quantize_state(start_state)
    paths: list[tuple[float, tuple[StateBucket, ...]]] = [(1.0, ())]
    cur_states: list[StateBucket] = [start]
    for bw in schedule_kbps:
        new_paths = []
        new_states = []
        for (p, path), s in zip(paths, cur_states):
            for s2, q in profile.outcomes(s, bw):
                new_paths.append((p * q, path + (s2,)))
                new_states.append(s2)
        paths, cur_states = new_paths, new_states
    return paths


def _path_to_segments(
    path: tuple[StateBucket, ...], prev_bitrate: float | None
) -> tuple[SegmentQuality, ...]:
    segs = []
    prev = prev_bitrate
    for i, s2 in enumerate(path):
        # Lower bucket edge: ladder levels sit exactly on bucket boundaries,
        # so this represents them without inflating the bandwidth budget.
        br = s2.bitrate_idx * BITRATE_BUCKET_KBPS
        rebuf = s2.rebuf_idx * REBUF_BUCKET_S  # bucket lower edge: bucket 0 means no stall
        sw = 0.0 if prev is None else abs(br - prev)
        segs.append(SegmentQuality(bitrate_kbps=br, rebuffer_s=rebuf, switch_kbps=sw))
        prev = br
    return tuple(segs)


def _outcome_patterns(
    schedule_kbps: tuple[float, ...],
    profile: TransitionProfile,
    start_state: PlayerState,
    manifest: VideoManifest,
    config: SchedulerConfig,
    prefix: tuple[SegmentQuality, ...],
):
    g = config.coalesce_factor
    total_segments = coalesce(manifest.num_chunks, manifest.ladder.chunk_duration_s, g)
    tail = pinned_level(manifest, config.bandwidth_limit_kbps)
    prev_br = prefix[-1].bitrate_kbps if prefix else (start_state.bitrate_kbps if start_state.bitrate_kbps > 0 else None)
    outcomes = enumerate_outcomes(schedule_kbps, profile, start_state)
    result = []
    for p, path in outcomes:
        segs = _path_to_segments(path, prev_br)
        if not prefix and segs:
            segs = (replace(segs[0], switch_kbps=0.0),) + segs[1:]
        result.append((p, _assemble_pattern(prefix, segs, tail, total_segments, g)))
    return result


def expected_objective(
    schedule: BandwidthSchedule,
    profile: TransitionProfile,
    f: QoeForest,
    start_state: PlayerState,
    manifest: VideoManifest,
    config: SchedulerConfig,
    prefix: tuple[SegmentQuality, ...] = (),
) -> float:
    """Probability-weighted objective over all patterns the schedule can induce."""
    horizon = schedule.per_segment_kbps[: config.horizon_segments]
    outcomes = _outcome_patterns(horizon, profile, start_state, manifest, config, prefix)
    patterns = [pat for _, pat in outcomes]
    objs, _, _, _ = _score_patterns(f, patterns, manifest, config)
    return float(sum(p * o for (p, _), o in zip(outcomes, objs)))


def select_bandwidth_schedule(
    f: QoeForest,
    profile: TransitionProfile,
    manifest: VideoManifest,
    state: PlayerState,
    config: SchedulerConfig,
    prefix: tuple[SegmentQuality, ...] = (),
    log: DecisionLog | None = None,
    session: str | None = None,
) -> BandwidthSchedule:
    """Expected-regret-minimizing bandwidth per remaining coalesced segment.

    Re-invoke at every segment boundary with the realized prefix and the
    updated player state.
    """
    g = config.coalesce_factor
    total_segments = coalesce(manifest.num_chunks, manifest.ladder.chunk_duration_s, g)
    remaining = total_segments - len(prefix)
    if remaining <= 0:
        raise ValueError("no segments left to plan")
    horizon = min(config.horizon_segments, remaining)
    tail = pinned_level(manifest, config.bandwidth_limit_kbps)
    grid = config.grid(manifest)

    candidates = list(itertools.product(grid, repeat=horizon))
    per_combo = [_outcome_patterns(combo, profile, state, manifest, config, prefix)
                 for combo in candidates]
    outcomes_evaluated = sum(len(o) for o in per_combo)
    # Outcome patterns repeat heavily across combos; score each unique
    # pattern once in a single batched forest call.
    index: dict[QualityPattern, int] = {}
    for outcomes in per_combo:
        for _, pat in outcomes:
            if pat not in index:
                index[pat] = len(index)
    unique = list(index)
    objs, qoes, uncs, usages = _score_patterns(f, unique, manifest, config)

    best = None
    best_schedule = None
    best_uncertainty = 0.0
    best_selected_uncertainty = 0.0
    for combo, outcomes in zip(candidates, per_combo):
        probs = np.array([p for p, _ in outcomes])
        idx = np.array([index[pat] for _, pat in outcomes])
        exp_obj = float(probs @ objs[idx])
        exp_qoe = float(probs @ qoes[idx])
        exp_usage = float(probs @ usages[idx])
        if exp_usage > config.bandwidth_limit_kbps + FEASIBILITY_EPS_KBPS:
            continue
        key = (exp_obj, exp_qoe, -exp_usage)
        if _better(key, best):
            best = key
            best_schedule = combo
            best_uncertainty = float(probs @ uncs[idx])
            # The pattern this schedule is steering toward: its most likely outcome.
            best_selected_uncertainty = float(uncs[idx[int(np.argmax(probs))]])
    if best_schedule is None:
        raise InfeasibleError("no feasible bandwidth schedule on the candidate grid")

    full = tuple(best_schedule) + (tail,) * (remaining - horizon)
    if log is not None:
        log.record(
            session=session,
            segment=len(prefix),
            candidates=len(candidates),
            outcomes=outcomes_evaluated,
            chosen=list(full),
            objective=best[0],
            expected_qoe=best[1],
            expected_uncertainty=best_uncertainty,
            selected_uncertainty=best_selected_uncertainty,
            expected_usage_kbps=-best[2],
        )
    return BandwidthSchedule(full, coalesce_factor=g)


def baseline_policy(
    name: str,
    f: QoeForest,
    profile: TransitionProfile,
    manifest: VideoManifest,
    state: PlayerState,
    config: SchedulerConfig,
    session_index: int = 1,
    prefix: tuple[SegmentQuality, ...] = (),
    log: DecisionLog | None = None,
    session: str | None = None,
) -> BandwidthSchedule:
    """The three reference policies.

    greedy_opt exploits the current model (no uncertainty bonus); greedy_pf
    maximizes uncertainty alone for the user's first profiling-window
    sessions and then behaves like greedy_opt; no_opt pins bandwidth at the
    limit and lets the player's own ABR do the rest.
    """
    g = config.coalesce_factor
    total_segments = coalesce(manifest.num_chunks, manifest.ladder.chunk_duration_s, g)
    remaining = total_segments - len(prefix)
    if name == "no_opt":
        return BandwidthSchedule((config.bandwidth_limit_kbps,) * remaining, coalesce_factor=g)
    if name == "greedy_opt":
        cfg = replace(config, qoe_weight=1.0, uncertainty_weight=0.0)
    elif name == "greedy_pf":
        if session_index <= config.pf_window_sessions:
            cfg = replace(config, qoe_weight=0.0, uncertainty_weight=1.0)
        else:
            cfg = replace(config, qoe_weight=1.0, uncertainty_weight=0.0)
    else:
        raise ValueError(f"unknown baseline {name!r}")
    return select_bandwidth_schedule(f, profile, manifest, state, cfg, prefix, log=log, session=session)
