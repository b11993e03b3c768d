"""Heterogeneity analysis over per-session quality and engagement.

Quantifies how much one kind of quality incident (a short stall, a
low-bitrate stretch, or a large switch) drops a user's engagement, how
dispersed those drops are across users / devices / videos, and whether the
drop depends on where in the video the incident lands.
"""
from __future__ import annotations

from dataclasses import dataclass
from statistics import pstdev
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import BitrateLadder, QualityPattern, SessionRecord

INCIDENT_KINDS = ("rebuffering", "low_bitrate", "bitrate_switch")

MIN_GROUP = 5
# "Clean otherwise" gates: no stray stalls, no switch above one bucket.
CLEAN_MAX_SWITCH_KBPS = 200.0


class InsufficientDataError(ValueError):
    """A comparison group has fewer rows than the minimum."""


class UndefinedDispersionError(ZeroDivisionError):
    """Dispersion is std/|mean| and the mean is zero."""


@dataclass(frozen=True)
class IncidentFilter:
    kind: str  # rebuffering | low_bitrate | bitrate_switch
    magnitude_lo: float
    magnitude_hi: float

    def __post_init__(self):
        if self.kind not in INCIDENT_KINDS:
            raise ValueError(f"unknown incident kind {self.kind!r}")
        if self.magnitude_lo > self.magnitude_hi:
            raise ValueError("magnitude range lower bound exceeds upper bound")


def rebuffer_filter(lo: float = 0.3, hi: float = 0.5) -> IncidentFilter:
    return IncidentFilter("rebuffering", lo, hi)


def low_bitrate_filter(lo: float = 200.0, hi: float = 500.0) -> IncidentFilter:
    """Magnitudes are Kbps below the ladder maximum."""
    return IncidentFilter("low_bitrate", lo, hi)


def switch_filter(lo: float = 1000.0, hi: float = 1500.0) -> IncidentFilter:
    return IncidentFilter("bitrate_switch", lo, hi)


def _segment_is_incident(seg, f: IncidentFilter, ladder: BitrateLadder) -> bool:
    if f.kind == "rebuffering":
        return f.magnitude_lo <= seg.rebuffer_s <= f.magnitude_hi
    if f.kind == "low_bitrate":
        deficit = ladder.max_kbps - seg.bitrate_kbps
        return f.magnitude_lo <= deficit <= f.magnitude_hi
    return f.magnitude_lo <= seg.switch_kbps <= f.magnitude_hi


def _segment_is_clean(seg, ladder: BitrateLadder) -> bool:
    return (
        seg.rebuffer_s == 0.0
        and seg.bitrate_kbps >= ladder.max_kbps
        and seg.switch_kbps <= CLEAN_MAX_SWITCH_KBPS
    )


def incident_positions(pattern: QualityPattern, f: IncidentFilter, ladder: BitrateLadder) -> list[int]:
    return [i for i, seg in enumerate(pattern.segments) if _segment_is_incident(seg, f, ladder)]


def classify_row(pattern: QualityPattern, f: IncidentFilter, ladder: BitrateLadder) -> str | None:
    """'with' = exactly one in-range incident, clean otherwise; 'without' = fully clean."""
    hits = incident_positions(pattern, f, ladder)
    others_clean = all(
        _segment_is_clean(seg, ladder) for i, seg in enumerate(pattern.segments) if i not in hits
    )
    if not hits and others_clean:
        return "without"
    if len(hits) == 1 and others_clean:
        return "with"
    return None


def delta_q(
    rows: Sequence[SessionRecord],
    f: IncidentFilter,
    ladder: BitrateLadder,
    min_group: int = MIN_GROUP,
    position_filter: Callable[[QualityPattern, int], bool] | None = None,
) -> float:
    """Mean engagement with the incident minus mean engagement without it."""
    with_group: list[float] = []
    without_group: list[float] = []
    for r in rows:
        cls = classify_row(r.pattern, f, ladder)
        if cls == "without":
            without_group.append(r.engagement)
        elif cls == "with":
            if position_filter is not None:
                pos = incident_positions(r.pattern, f, ladder)[0]
                if not position_filter(r.pattern, pos):
                    continue
            with_group.append(r.engagement)
    if len(with_group) < min_group or len(without_group) < min_group:
        raise InsufficientDataError(
            f"groups of {len(with_group)}/{len(without_group)} rows, need {min_group} each"
        )
    return float(np.mean(with_group) - np.mean(without_group))


def heterogeneity_dispersion(delta_qs: Sequence[float]) -> float:
    """Population standard deviation of the group drops over |mean|."""
    if len(delta_qs) < 2:
        raise InsufficientDataError("need at least two groups")
    mean = float(np.mean(delta_qs))
    if mean == 0.0:
        raise UndefinedDispersionError("mean delta-Q is zero")
    return pstdev(delta_qs) / abs(mean)


def bootstrap_ci(
    statistic: Callable[[Sequence], float],
    rows: Sequence,
    frac: float = 0.10,
    reps: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """(mean, half-width) of the statistic over fractional resamples."""
    if not rows:
        raise InsufficientDataError("no rows to bootstrap")
    rng = np.random.default_rng(seed)
    n = max(1, int(round(frac * len(rows))))
    stats = []
    for _ in range(reps):
        idx = rng.integers(0, len(rows), size=n)
        stats.append(statistic([rows[i] for i in idx]))
    return float(np.mean(stats)), float(1.96 * np.std(stats))


def time_sensitivity(
    rows: Sequence[SessionRecord],
    f: IncidentFilter,
    ladder: BitrateLadder,
    edge_segments: int = 3,
    min_group: int = MIN_GROUP,
) -> tuple[float, float]:
    """Delta-Q for incidents in the first vs last `edge_segments` segments."""
    early = delta_q(
        rows, f, ladder, min_group=min_group,
        position_filter=lambda pat, pos: pos < edge_segments,
    )
    late = delta_q(
        rows, f, ladder, min_group=min_group,
        position_filter=lambda pat, pos: pos >= len(pat.segments) - edge_segments,
    )
    return early, late


def heterogeneity_report(
    rows: Sequence[SessionRecord],
    ladder: BitrateLadder,
    filters: dict[str, IncidentFilter] | None = None,
    group_keys: Sequence[str] = ("user", "device", "video"),
    min_group: int = MIN_GROUP,
    seed: int = 0,
) -> list[dict]:
    """Rows for heterogeneity_report.csv: dispersion of per-group drops with CIs."""
    if filters is None:
        filters = {
            "rebuffering": rebuffer_filter(),
            "low_bitrate": low_bitrate_filter(),
            "bitrate_switch": switch_filter(),
        }

    def key_of(r: SessionRecord, group_by: str) -> str:
        if group_by == "user":
            return r.user_id
        if group_by == "video":
            return r.video_id
        return r.context.get(group_by, "")

    out = []
    for incident, filt in filters.items():
        for group_by in group_keys:
            groups: dict[str, list[SessionRecord]] = {}
            for r in rows:
                groups.setdefault(key_of(r, group_by), []).append(r)
            dqs = []
            for members in groups.values():
                try:
                    dqs.append(delta_q(members, filt, ladder, min_group=min_group))
                except InsufficientDataError:
                    continue
            if len(dqs) < 2:
                continue
            try:
                disp = heterogeneity_dispersion(dqs)
            except UndefinedDispersionError:
                continue
            mean, half = bootstrap_ci(
                lambda sample: float(np.std(sample) / abs(np.mean(sample))) if np.mean(sample) else 0.0,
                dqs,
                seed=seed,
            )
            out.append(
                {
                    "incident": incident,
                    "group_by": group_by,
                    "dispersion": disp,
                    "ci_low": mean - half,
                    "ci_high": mean + half,
                }
            )
    return out
