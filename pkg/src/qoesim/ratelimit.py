"""Bandwidth throttling math.

Requests are delayed so the realized rate of each transfer matches the
active segment's target, using a hold time computed against the estimated
real bandwidth of the previous transfer.  A token bucket caps a whole
session's mean throughput at a fraction of the link rate so competing
schemes stay comparable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import BandwidthSchedule


@dataclass
class ThrottleState:
    target_bw_kbps: float
    last_request: tuple[int, float] | None = None  # (bytes, duration_s)
    alpha: float = 0.6
    ewma_weight: float = 1.0  # 1.0 = single-sample estimator
    _ewma_kbps: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.target_bw_kbps <= 0:
            raise ValueError("target bandwidth must be positive")

    def observe(self, size_bytes: int, duration_s: float) -> float:
        """Record a completed transfer; returns the current bandwidth estimate."""
        sample = estimate_real_bw((size_bytes, duration_s))
        if self._ewma_kbps is None:
            self._ewma_kbps = sample
        else:
            w = self.ewma_weight
            self._ewma_kbps = w * sample + (1.0 - w) * self._ewma_kbps
        self.last_request = (size_bytes, duration_s)
        return self._ewma_kbps


def estimate_real_bw(last_request: tuple[int, float]) -> float:
    """Kbps achieved by the last transfer."""
    size_bytes, duration_s = last_request
    if duration_s <= 0:
        raise ValueError("transfer duration must be positive")
    return size_bytes * 8.0 / (1000.0 * duration_s)


def hold_time(size_bytes: int, target_bw_kbps: float, real_bw_kbps: float) -> float:
    """Seconds to delay a request so it averages out to the target bandwidth.

    Clamped at zero: if the link is already slower than the target there is
    nothing to hold.
    """
    if target_bw_kbps <= 0 or real_bw_kbps <= 0:
        raise ValueError("bandwidths must be positive")
    bits = size_bytes * 8.0
    return max(0.0, bits / (1000.0 * target_bw_kbps) - bits / (1000.0 * real_bw_kbps))


@dataclass
class TokenBucket:
    """Bit budget refilling at a fixed rate; enforces a hard mean-rate cap."""

    rate_kbps: float
    tokens_bits: float = 0.0
    t: float = 0.0

    def wait_time(self, bits: float, now: float) -> float:
        """Seconds until `bits` tokens are available at time `now`."""
        self._refill(now)
        if self.tokens_bits >= bits:
            return 0.0
        return (bits - self.tokens_bits) / (self.rate_kbps * 1000.0)

    def consume(self, bits: float, now: float) -> None:
        self._refill(now)
        self.tokens_bits -= bits

    def _refill(self, now: float) -> None:
        if now > self.t:
            self.tokens_bits += self.rate_kbps * 1000.0 * (now - self.t)
            self.t = now


@dataclass
class TransferRecord:
    start_s: float
    end_s: float
    size_bytes: int
    segment: int
    target_kbps: float

    @property
    def achieved_kbps(self) -> float:
        return estimate_real_bw((self.size_bytes, self.end_s - self.start_s))


def apply_schedule(
    schedule: BandwidthSchedule,
    request_sizes_bytes: list[int],
    link_kbps: float,
    segment_duration_s: float,
    throttle: ThrottleState | None = None,
) -> list[TransferRecord]:
    """Replay a request stream through the throttler under a segment schedule.

    Each request transfers at the link rate and is then held so its overall
    rate matches the target of the segment active when it started.
    """
    if link_kbps <= 0:
        raise ValueError("link rate must be positive")
    records: list[TransferRecord] = []
    now = 0.0
    real_est = link_kbps  # no history before the first request
    n_seg = len(schedule.per_segment_kbps)
    for size in request_sizes_bytes:
        seg = min(int(now // segment_duration_s), n_seg - 1)
        target = schedule.per_segment_kbps[seg]
        transfer_s = size * 8.0 / (1000.0 * link_kbps)
        hold = hold_time(size, target, real_est)
        end = now + transfer_s + hold
        records.append(TransferRecord(now, end, size, seg, target))
        # Estimate from the raw transfer, not the held total, or the
        # estimator would chase its own throttling.
        if throttle is not None:
            real_est = throttle.observe(size, transfer_s)
        else:
            real_est = estimate_real_bw((size, transfer_s))
        now = end
    return records


def per_segment_throughput(records: list[TransferRecord]) -> dict[int, float]:
    """Mean achieved Kbps per schedule segment, weighted by transfer time."""
    bits: dict[int, float] = {}
    secs: dict[int, float] = {}
    for r in records:
        bits[r.segment] = bits.get(r.segment, 0.0) + r.size_bytes * 8.0
        secs[r.segment] = secs.get(r.segment, 0.0) + (r.end_s - r.start_s)
    return {seg: bits[seg] / (1000.0 * secs[seg]) for seg in bits}
