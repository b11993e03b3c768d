"""Shared domain types for the streaming QoE simulator.

Everything here is an immutable value type: bitrate ladders, manifests,
player states and their bucketized form, per-segment quality, bandwidth
schedules, and completed session records.  All other modules build on
these plus the quantization helpers.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Iterator, Mapping, Sequence

# Bucket widths for state quantization (Kbps / seconds).
BITRATE_BUCKET_KBPS = 200.0
BUFFER_BUCKET_S = 1.0
BANDWIDTH_BUCKET_KBPS = 200.0
REBUF_BUCKET_S = 1.0

SCHEMES = ("vidhoc", "greedy_opt", "greedy_pf", "no_opt")

DEFAULT_LADDER_KBPS = (200.0, 400.0, 600.0, 800.0, 1000.0)
DEFAULT_CHUNK_DURATION_S = 3.0


class InvalidStateError(ValueError):
    """A player state carried a negative or non-finite field."""


@dataclass(frozen=True)
class BitrateLadder:
    levels: tuple[float, ...]
    chunk_duration_s: float

    def __post_init__(self):
        if not self.levels:
            raise ValueError("ladder must have at least one level")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("ladder levels must be strictly increasing")
        if self.chunk_duration_s <= 0:
            raise ValueError("chunk_duration_s must be positive")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))

    @property
    def min_kbps(self) -> float:
        return self.levels[0]

    @property
    def max_kbps(self) -> float:
        return self.levels[-1]

    def level_at_most(self, kbps: float) -> int | None:
        """Index of the highest level <= kbps, or None if all are above."""
        best = None
        for i, lvl in enumerate(self.levels):
            if lvl <= kbps:
                best = i
        return best


def default_ladder() -> BitrateLadder:
    return BitrateLadder(DEFAULT_LADDER_KBPS, DEFAULT_CHUNK_DURATION_S)


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    num_chunks: int
    ladder: BitrateLadder
    chunk_bytes: tuple[tuple[int, ...], ...]  # [level][chunk]

    def __post_init__(self):
        if self.num_chunks < 1:
            raise ValueError("manifest needs at least one chunk")
        if len(self.chunk_bytes) != len(self.ladder.levels):
            raise ValueError("chunk_bytes must have one row per ladder level")
        for row in self.chunk_bytes:
            if len(row) != self.num_chunks:
                raise ValueError("chunk_bytes rows must have one entry per chunk")
            if any(b <= 0 for b in row):
                raise ValueError("chunk sizes must be positive")
        object.__setattr__(
            self, "chunk_bytes", tuple(tuple(int(b) for b in row) for row in self.chunk_bytes)
        )

    @property
    def duration_s(self) -> float:
        return self.num_chunks * self.ladder.chunk_duration_s


def constant_bitrate_manifest(
    video_id: str, num_chunks: int, ladder: BitrateLadder
) -> VideoManifest:
    """Manifest whose chunk sizes realize each ladder level exactly."""
    rows = []
    for kbps in ladder.levels:
        size = int(round(kbps * 1000.0 * ladder.chunk_duration_s / 8.0))
        rows.append(tuple([size] * num_chunks))
    return VideoManifest(video_id, num_chunks, ladder, tuple(rows))


@dataclass(frozen=True)
class PlayerState:
    bitrate_kbps: float
    buffer_s: float
    bw_past_kbps: float
    bw_now_kbps: float
    rebuf_window_s: float = 0.0

    def validate(self) -> "PlayerState":
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise InvalidStateError(f"{name}={value!r} is negative or non-finite")
        return self


@dataclass(frozen=True)
class StateBucket:
    bitrate_idx: int
    buffer_idx: int
    bandwidth_idx: int
    rebuf_idx: int

    def key(self) -> tuple[int, int, int, int]:
        return (self.bitrate_idx, self.buffer_idx, self.bandwidth_idx, self.rebuf_idx)


def quantize_state(s: PlayerState) -> StateBucket:
    """Bucketize a player state on the 200 Kbps / 1 s / 200 Kbps / 1 s grid.

    Buckets are half-open [k*w, (k+1)*w).
    """
    s.validate()
    return StateBucket(
        bitrate_idx=int(s.bitrate_kbps // BITRATE_BUCKET_KBPS),
        buffer_idx=int(s.buffer_s // BUFFER_BUCKET_S),
        bandwidth_idx=int(s.bw_now_kbps // BANDWIDTH_BUCKET_KBPS),
        rebuf_idx=int(s.rebuf_window_s // REBUF_BUCKET_S),
    )


def bucket_midpoint(idx: int, width: float) -> float:
    return (idx + 0.5) * width


def dequantize_bucket(b: StateBucket) -> PlayerState:
    """Representative (midpoint) state of a bucket."""
    return PlayerState(
        bitrate_kbps=bucket_midpoint(b.bitrate_idx, BITRATE_BUCKET_KBPS),
        buffer_s=bucket_midpoint(b.buffer_idx, BUFFER_BUCKET_S),
        bw_past_kbps=bucket_midpoint(b.bandwidth_idx, BANDWIDTH_BUCKET_KBPS),
        bw_now_kbps=bucket_midpoint(b.bandwidth_idx, BANDWIDTH_BUCKET_KBPS),
        rebuf_window_s=bucket_midpoint(b.rebuf_idx, REBUF_BUCKET_S),
    )


def bandwidth_bucket(kbps: float) -> int:
    if not math.isfinite(kbps) or kbps < 0:
        raise InvalidStateError(f"bandwidth {kbps!r} is negative or non-finite")
    return int(kbps // BANDWIDTH_BUCKET_KBPS)


@dataclass(frozen=True)
class SegmentQuality:
    bitrate_kbps: float
    rebuffer_s: float
    switch_kbps: float

    def __post_init__(self):
        if self.rebuffer_s < 0:
            raise ValueError("rebuffer_s must be >= 0")
        if self.switch_kbps < 0:
            raise ValueError("switch_kbps must be >= 0")


@dataclass(frozen=True)
class QualityPattern:
    segments: tuple[SegmentQuality, ...]
    coalesce_factor: int = 1

    def __post_init__(self):
        if not self.segments:
            raise ValueError("quality pattern must be non-empty")
        if self.coalesce_factor < 1:
            raise ValueError("coalesce_factor must be >= 1")
        if self.segments[0].switch_kbps != 0:
            raise ValueError("first segment cannot carry a switch")
        object.__setattr__(self, "segments", tuple(self.segments))

    def bitrates(self) -> tuple[float, ...]:
        return tuple(s.bitrate_kbps for s in self.segments)

    def total_rebuffer_s(self) -> float:
        return sum(s.rebuffer_s for s in self.segments)


def pattern_from_bitrates(
    bitrates: Sequence[float],
    coalesce_factor: int = 1,
    rebuffers: Sequence[float] | None = None,
) -> QualityPattern:
    """Build a pattern from per-segment bitrates; switches are absolute deltas."""
    rebuffers = rebuffers if rebuffers is not None else [0.0] * len(bitrates)
    segs = []
    prev = None
    for br, rb in zip(bitrates, rebuffers):
        sw = 0.0 if prev is None else abs(br - prev)
        segs.append(SegmentQuality(bitrate_kbps=br, rebuffer_s=rb, switch_kbps=sw))
        prev = br
    return QualityPattern(tuple(segs), coalesce_factor=coalesce_factor)


@dataclass(frozen=True)
class BandwidthSchedule:
    per_segment_kbps: tuple[float, ...]
    coalesce_factor: int = 1

    def __post_init__(self):
        if not self.per_segment_kbps:
            raise ValueError("schedule must be non-empty")
        if any(v <= 0 for v in self.per_segment_kbps):
            raise ValueError("schedule entries must be positive")
        if self.coalesce_factor < 1:
            raise ValueError("coalesce_factor must be >= 1")
        object.__setattr__(
            self, "per_segment_kbps", tuple(float(v) for v in self.per_segment_kbps)
        )


@dataclass(frozen=True)
class SessionRecord:
    user_id: str
    video_id: str
    scheme: str
    pattern: QualityPattern
    engagement: float
    bandwidth_limit_kbps: float
    context: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 <= self.engagement <= 1.0:
            raise ValueError("engagement must be in [0, 1]")
        object.__setattr__(self, "context", dict(self.context))


# ---------------------------------------------------------------------------
# Unit math

def chunk_bitrate(m: VideoManifest, level: int, chunk: int) -> float:
    """Bitrate in Kbps of one chunk at one ladder level."""
    if not 0 <= level < len(m.ladder.levels):
        raise IndexError(f"level {level} out of range")
    if not 0 <= chunk < m.num_chunks:
        raise IndexError(f"chunk {chunk} out of range")
    return m.chunk_bytes[level][chunk] * 8.0 / (1000.0 * m.ladder.chunk_duration_s)


def coalesce(num_chunks: int, chunk_duration_s: float, g: int) -> int:
    """Number of coalesced segments when grouping g consecutive chunks."""
    if g < 1:
        raise ValueError("coalesce factor must be >= 1")
    if num_chunks < 1:
        raise ValueError("num_chunks must be >= 1")
    if chunk_duration_s <= 0:
        raise ValueError("chunk_duration_s must be positive")
    return math.ceil(num_chunks / g)


def segment_chunk_counts(num_chunks: int, g: int) -> list[int]:
    """Chunks per coalesced segment; only the last segment may be short."""
    n_seg = math.ceil(num_chunks / g)
    counts = [g] * n_seg
    counts[-1] = num_chunks - g * (n_seg - 1)
    return counts


def expand_to_chunks(values: Sequence[float], num_chunks: int, g: int) -> list[float]:
    """Repeat per-segment values out to per-chunk granularity."""
    out: list[float] = []
    for v, c in zip(values, segment_chunk_counts(num_chunks, g)):
        out.extend([v] * c)
    return out


# ---------------------------------------------------------------------------
# Serialization: JSON-lines for manifests / sessions, CSV for QoE datasets.

def _ladder_to_dict(l: BitrateLadder) -> dict:
    return {"levels": list(l.levels), "chunk_duration_s": l.chunk_duration_s}


def _ladder_from_dict(d: dict) -> BitrateLadder:
    return BitrateLadder(tuple(d["levels"]), d["chunk_duration_s"])


def manifest_to_dict(m: VideoManifest) -> dict:
    return {
        "video_id": m.video_id,
        "num_chunks": m.num_chunks,
        "ladder": _ladder_to_dict(m.ladder),
        "chunk_bytes": [list(row) for row in m.chunk_bytes],
    }


def manifest_from_dict(d: dict) -> VideoManifest:
    return VideoManifest(
        video_id=d["video_id"],
        num_chunks=d["num_chunks"],
        ladder=_ladder_from_dict(d["ladder"]),
        chunk_bytes=tuple(tuple(row) for row in d["chunk_bytes"]),
    )


def pattern_to_dict(p: QualityPattern) -> dict:
    return {
        "coalesce_factor": p.coalesce_factor,
        "segments": [
            {"bitrate_kbps": s.bitrate_kbps, "rebuffer_s": s.rebuffer_s, "switch_kbps": s.switch_kbps}
            for s in p.segments
        ],
    }


def pattern_from_dict(d: dict) -> QualityPattern:
    return QualityPattern(
        tuple(
            SegmentQuality(s["bitrate_kbps"], s["rebuffer_s"], s["switch_kbps"])
            for s in d["segments"]
        ),
        coalesce_factor=d["coalesce_factor"],
    )


def session_to_dict(r: SessionRecord) -> dict:
    return {
        "user_id": r.user_id,
        "video_id": r.video_id,
        "scheme": r.scheme,
        "pattern": pattern_to_dict(r.pattern),
        "engagement": r.engagement,
        "bandwidth_limit_kbps": r.bandwidth_limit_kbps,
        "context": dict(r.context),
    }


def session_from_dict(d: dict) -> SessionRecord:
    return SessionRecord(
        user_id=d["user_id"],
        video_id=d["video_id"],
        scheme=d["scheme"],
        pattern=pattern_from_dict(d["pattern"]),
        engagement=d["engagement"],
        bandwidth_limit_kbps=d["bandwidth_limit_kbps"],
        context=d.get("context", {}),
    )


def write_jsonl(path, dicts: Iterable[dict]) -> None:
    with open(path, "w") as f:
        for d in dicts:
            f.write(json.dumps(d, sort_keys=True))
            f.write("\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


QOE_CSV_FEATURES = 60


def write_qoe_dataset_csv(path, rows: Iterable[dict]) -> None:
    """Rows: {user, device, video, features: seq of 60, qoe}."""
    header = ["user", "device", "video"] + [f"feature_{i}" for i in range(1, QOE_CSV_FEATURES + 1)] + ["qoe"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            feats = list(r["features"])
            if len(feats) != QOE_CSV_FEATURES:
                raise ValueError(f"expected {QOE_CSV_FEATURES} features, got {len(feats)}")
            w.writerow([r["user"], r.get("device", ""), r["video"], *feats, r["qoe"]])


def read_qoe_dataset_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            feats = [float(row[f"feature_{i}"]) for i in range(1, QOE_CSV_FEATURES + 1)]
            out.append(
                {
                    "user": row["user"],
                    "device": row["device"],
                    "video": row["video"],
                    "features": feats,
                    "qoe": float(row["qoe"]),
                }
            )
    return out
