"""Synthetic users and datasets.

Users carry per-aspect sensitivity weights (stalls, low bitrate, switches)
and positional time weights over 20 video parts, so a cohort can be made
heterogeneous both in which quality aspect hurts and in when it hurts.
They stand in for the human viewers the live system would observe.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import (
    BitrateLadder,
    QualityPattern,
    SegmentQuality,
    SessionRecord,
    pattern_from_bitrates,
)
from .analysis import IncidentFilter
from .qoe_model import NUM_PARTS, UserDataset, extract_features


def stable_seed(*parts) -> int:
    key = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "big")


@dataclass(frozen=True)
class SyntheticUser:
    user_id: str
    beta_rebuffer: float  # engagement drop per stall-second (part-weighted)
    gamma_low_bitrate: float  # drop per unit bitrate deficit fraction
    delta_switch: float  # drop per unit switch fraction
    time_weights: tuple[float, ...]  # over 20 video parts, sums to 1
    noise_sigma: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.beta_rebuffer, self.gamma_low_bitrate, self.delta_switch) < 0:
            raise ValueError("sensitivity weights must be >= 0")
        if abs(sum(self.time_weights) - 1.0) > 1e-9:
            raise ValueError("time weights must sum to 1")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")


def uniform_weights(n: int = NUM_PARTS) -> tuple[float, ...]:
    return tuple([1.0 / n] * n)


def geometric_weights(ratio: float, n: int = NUM_PARTS, reverse: bool = False) -> tuple[float, ...]:
    w = np.array([ratio**i for i in range(n)])
    if reverse:
        w = w[::-1]
    w = w / w.sum()
    return tuple(w.tolist())


def ground_truth_engagement(
    user: SyntheticUser,
    pattern: QualityPattern,
    ladder: BitrateLadder,
    noise_seed: int | None = None,
) -> float:
    """Oracle engagement: 1 minus part-weighted quality penalties plus noise."""
    feats = extract_features(pattern, ladder, num_parts=len(user.time_weights))
    br_max = ladder.max_kbps
    drop = 0.0
    for p, w in enumerate(user.time_weights):
        mean_br = feats[3 * p]
        switch = feats[3 * p + 1]
        rebuf = feats[3 * p + 2]
        deficit = max(0.0, 1.0 - mean_br / br_max)
        drop += w * (
            user.beta_rebuffer * rebuf
            + user.gamma_low_bitrate * deficit
            + user.delta_switch * switch / br_max
        )
    eps = 0.0
    if user.noise_sigma > 0:
        rng = np.random.default_rng(user.rng_seed if noise_seed is None else noise_seed)
        eps = rng.normal(0.0, user.noise_sigma)
    return float(np.clip(1.0 - drop + eps, 0.0, 1.0))


# Archetypes cycled when building a cohort: (beta, gamma, delta, weight shape).
_ARCHETYPES = (
    ("stall", 2.5, 0.35, 0.3, "uniform"),
    ("bitrate", 0.8, 0.7, 0.2, "uniform"),
    ("switch", 0.8, 0.35, 2.5, "uniform"),
    ("front", 1.2, 0.5, 0.5, "front"),
    ("back", 1.2, 0.5, 0.5, "back"),
)


def make_users(
    n: int = 15,
    seed: int = 0,
    noise_sigma: float = 0.05,
    prefix: str = "user",
    jitter: tuple[float, float] = (0.75, 1.25),
) -> list[SyntheticUser]:
    """Heterogeneous cohort: archetypes cycled with per-user magnitude jitter."""
    rng = np.random.default_rng(seed)
    users = []
    for i in range(n):
        name, beta, gamma, delta, shape = _ARCHETYPES[i % len(_ARCHETYPES)]
        scale = rng.uniform(*jitter)
        if shape == "front":
            weights = geometric_weights(0.78)
        elif shape == "back":
            weights = geometric_weights(0.78, reverse=True)
        else:
            weights = uniform_weights()
        users.append(
            SyntheticUser(
                user_id=f"{prefix}_{i:02d}_{name}",
                beta_rebuffer=beta * scale,
                gamma_low_bitrate=gamma * scale,
                delta_switch=delta * scale,
                time_weights=weights,
                noise_sigma=noise_sigma,
                rng_seed=stable_seed(seed, prefix, i),
            )
        )
    return users


def random_pattern(
    ladder: BitrateLadder,
    n_segments: int,
    rng: np.random.Generator,
    stall_prob: float = 0.25,
    coalesce_factor: int = 4,
) -> QualityPattern:
    """A plausible session quality pattern: bitrate random walk plus rare stalls."""
    levels = ladder.levels
    idx = rng.integers(len(levels))
    bitrates = []
    rebuffers = []
    for _ in range(n_segments):
        idx = int(np.clip(idx + rng.integers(-1, 2), 0, len(levels) - 1))
        bitrates.append(levels[idx])
        rebuffers.append(float(rng.uniform(0.3, 1.5)) if rng.random() < stall_prob else 0.0)
    return pattern_from_bitrates(bitrates, coalesce_factor=coalesce_factor, rebuffers=rebuffers)


def make_initial_dataset(
    ladder: BitrateLadder,
    num_seed_users: int = 10,
    sessions_per_user: int = 12,
    seed: int = 0,
    noise_sigma: float = 0.05,
    num_parts: int = NUM_PARTS,
) -> UserDataset:
    """Shared bootstrap dataset: seed users watching randomly degraded sessions."""
    seed_users = make_users(num_seed_users, seed=stable_seed(seed, "seed-users"),
                            noise_sigma=noise_sigma, prefix="seed")
    rng = np.random.default_rng(stable_seed(seed, "seed-patterns"))
    dataset = UserDataset()
    for u_idx, user in enumerate(seed_users):
        for s_idx in range(sessions_per_user):
            n_seg = int(rng.integers(5, 16))
            pattern = random_pattern(ladder, n_seg, rng)
            engagement = ground_truth_engagement(
                user, pattern, ladder, noise_seed=stable_seed(seed, "init", u_idx, s_idx)
            )
            feats = extract_features(pattern, ladder, num_parts=num_parts)
            dataset.add_row(feats, engagement, provenance="initial")
    return dataset


# ---------------------------------------------------------------------------
# Synthetic rows for the heterogeneity analysis


def _clean_segments(n: int, ladder: BitrateLadder) -> list[SegmentQuality]:
    return [SegmentQuality(ladder.max_kbps, 0.0, 0.0) for _ in range(n)]


def _incident_segment(f: IncidentFilter, ladder: BitrateLadder) -> SegmentQuality:
    mid = (f.magnitude_lo + f.magnitude_hi) / 2.0
    if f.kind == "rebuffering":
        return SegmentQuality(ladder.max_kbps, mid, 0.0)
    if f.kind == "low_bitrate":
        return SegmentQuality(ladder.max_kbps - mid, 0.0, 0.0)
    return SegmentQuality(ladder.max_kbps, 0.0, mid)


def incident_pattern(
    f: IncidentFilter, ladder: BitrateLadder, n_segments: int, position: int
) -> QualityPattern:
    """Clean pattern with exactly one incident at the given segment index."""
    segs = _clean_segments(n_segments, ladder)
    segs[position] = _incident_segment(f, ladder)
    if position == 0 and segs[0].switch_kbps != 0:
        segs[position] = SegmentQuality(segs[0].bitrate_kbps, segs[0].rebuffer_s, 0.0)
    return QualityPattern(tuple(segs))


def planted_incident_sessions(
    user_id: str,
    plant_delta_q: float,
    f: IncidentFilter,
    ladder: BitrateLadder,
    n_with: int = 50,
    n_without: int = 50,
    base_engagement: float = 0.9,
    sigma: float = 0.05,
    seed: int = 0,
    n_segments: int = 20,
    device: str = "desktop",
) -> list[SessionRecord]:
    """Sessions whose with/without engagement gap equals the planted drop."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_without):
        pat = QualityPattern(tuple(_clean_segments(n_segments, ladder)))
        e = float(np.clip(base_engagement + rng.normal(0, sigma), 0, 1))
        rows.append(SessionRecord(user_id, f"vid_{i}", "no_opt", pat, e, 1000.0, {"device": device}))
    for i in range(n_with):
        pos = int(rng.integers(1, n_segments))
        pat = incident_pattern(f, ladder, n_segments, pos)
        e = float(np.clip(base_engagement + plant_delta_q + rng.normal(0, sigma), 0, 1))
        rows.append(
            SessionRecord(user_id, f"vid_w{i}", "no_opt", pat, e, 1000.0, {"device": device})
        )
    return rows


def user_incident_sessions(
    user: SyntheticUser,
    f: IncidentFilter,
    ladder: BitrateLadder,
    positions: list[int],
    n_per_position: int = 25,
    n_without: int = 50,
    seed: int = 0,
    n_segments: int = 20,
) -> list[SessionRecord]:
    """Sessions where the user's own time weights shape the incident impact."""
    rows = []
    for i in range(n_without):
        pat = QualityPattern(tuple(_clean_segments(n_segments, ladder)))
        e = ground_truth_engagement(user, pat, ladder, noise_seed=stable_seed(seed, "clean", i))
        rows.append(SessionRecord(user.user_id, f"vid_{i}", "no_opt", pat, e, 1000.0))
    for pos in positions:
        for i in range(n_per_position):
            pat = incident_pattern(f, ladder, n_segments, pos)
            e = ground_truth_engagement(
                user, pat, ladder, noise_seed=stable_seed(seed, "incident", pos, i)
            )
            rows.append(
                SessionRecord(user.user_id, f"vid_p{pos}_{i}", "no_opt", pat, e, 1000.0)
            )
    return rows
