"""Simulated ABR player and its behavioral profile.

The player downloads chunks at an exogenous bandwidth, drains its buffer in
real time, and re-targets its bitrate with a throughput rule after a sampled
reaction delay.  An exhaustive sweep over bucketized start states under
constant bandwidth yields the empirical transition profile the scheduler
plans against, and a trace bank supports replaying recorded player behavior.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BANDWIDTH_BUCKET_KBPS,
    BITRATE_BUCKET_KBPS,
    BUFFER_BUCKET_S,
    PlayerState,
    StateBucket,
    VideoManifest,
    bandwidth_bucket,
    quantize_state,
)


class ProfileGapError(KeyError):
    """Lookup of a transition-profile cell that was never observed."""


class NoMatchError(LookupError):
    """No historical trace step within the matching thresholds."""


@dataclass(frozen=True)
class PlayerConfig:
    reaction_delay_range_s: tuple[float, float] = (5.0, 19.0)  # median 12 s
    trailing_window_s: float = 20.0
    safety_factor: float = 1.0
    upswitch_buffer_chunks: int = 1
    max_buffer_s: float = 20.0
    slow_start: bool = True  # first chunk at the lowest level


@dataclass
class StepResult:
    state: PlayerState
    stall_s: float
    chunks_completed: list[tuple[float, int]] = field(default_factory=list)
    switches: list[tuple[float, int, int]] = field(default_factory=list)
    played_s_per_level: dict[int, float] = field(default_factory=dict)
    bits_downloaded: float = 0.0

    def mean_played_bitrate(self, levels_kbps) -> float | None:
        total = sum(self.played_s_per_level.values())
        if total <= 0:
            return None
        return sum(levels_kbps[lvl] * s for lvl, s in self.played_s_per_level.items()) / total


class SimPlayer:
    """Chunk-level ABR player simulation; deterministic given its seed."""

    def __init__(self, manifest: VideoManifest, config: PlayerConfig = PlayerConfig(), seed: int = 0):
        self.manifest = manifest
        self.ladder = manifest.ladder
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.t = 0.0
        self.level: int | None = None  # set on first download
        self.buffer: deque[tuple[int, float]] = deque()  # (level, remaining play seconds)
        self.next_chunk = 0
        self.download: tuple[int, int, float] | None = None  # (level, chunk, bits remaining)
        self.bw_history: list[tuple[float, float]] = []  # (start time, kbps)
        self.last_bw: float | None = None
        self.retarget_time = 0.0
        self.mean_window_start = 0.0  # estimate resets at the last bandwidth change
        self.last_played_level = 0
        self.total_played_s = 0.0
        self.total_stall_s = 0.0

    # -- state helpers -----------------------------------------------------

    @property
    def buffer_s(self) -> float:
        return sum(r for _, r in self.buffer)

    def ended(self) -> bool:
        return self.next_chunk >= self.manifest.num_chunks and self.download is None and not self.buffer

    def trailing_mean_bw(self) -> float:
        if not self.bw_history:
            return 0.0
        lo = max(self.mean_window_start, self.t - self.config.trailing_window_s)
        hi = self.t
        if hi <= lo:
            return self.bw_history[-1][1]
        acc = 0.0
        for i, (start, bw) in enumerate(self.bw_history):
            end = self.bw_history[i + 1][0] if i + 1 < len(self.bw_history) else hi
            a, b = max(start, lo), min(end, hi)
            if b > a:
                acc += bw * (b - a)
        return acc / (hi - lo)

    def state(self, rebuf_window_s: float = 0.0) -> PlayerState:
        # Bitrate reflects the level currently being fetched: it is what the
        # ABR rule has decided, which is what bandwidth control can steer.
        current = self.level if self.level is not None else self.last_played_level
        return PlayerState(
            bitrate_kbps=self.ladder.levels[current] if self.level is not None else 0.0,
            buffer_s=self.buffer_s,
            bw_past_kbps=self.trailing_mean_bw(),
            bw_now_kbps=self.last_bw or 0.0,
            rebuf_window_s=rebuf_window_s,
        )

    # -- internal mechanics ------------------------------------------------

    def _pick_level(self, initial: bool) -> int:
        if initial and self.config.slow_start:
            return 0
        est = self.config.safety_factor * self.trailing_mean_bw()
        target = self.ladder.level_at_most(est)
        if target is None:
            target = 0
        if initial or self.level is None:
            return target
        if target > self.level:
            floor = self.config.upswitch_buffer_chunks * self.ladder.chunk_duration_s
            if self.buffer_s < floor:
                return self.level
        return target

    def _maybe_start_download(self, result: StepResult) -> float | None:
        """Start the next chunk if possible; returns idle seconds if buffer-capped."""
        if self.download is not None or self.next_chunk >= self.manifest.num_chunks:
            return None
        room = self.config.max_buffer_s - self.ladder.chunk_duration_s
        if self.buffer_s > room:
            if self.buffer:
                return self.buffer_s - room  # wait for playback to free space
            return None
        initial = self.level is None
        if initial or self.t >= self.retarget_time:
            new_level = self._pick_level(initial)
        else:
            new_level = self.level
        if not initial and new_level != self.level:
            result.switches.append((self.t, self.level, new_level))
        self.level = new_level
        bits = self.manifest.chunk_bytes[new_level][self.next_chunk] * 8.0
        self.download = (new_level, self.next_chunk, bits)
        return None

    # -- public API --------------------------------------------------------

    def step(self, bandwidth_kbps: float, dt_s: float) -> StepResult:
        if bandwidth_kbps <= 0 or dt_s <= 0:
            raise ValueError("bandwidth and dt must be positive")
        if self.last_bw is None:
            self.bw_history.append((self.t, bandwidth_kbps))
            self.last_bw = bandwidth_kbps
        elif bandwidth_kbps != self.last_bw:
            self.bw_history.append((self.t, bandwidth_kbps))
            self.last_bw = bandwidth_kbps
            self.mean_window_start = self.t
            lo, hi = self.config.reaction_delay_range_s
            self.retarget_time = self.t + self.rng.uniform(lo, hi)

        result = StepResult(state=self.state(), stall_s=0.0)
        remaining = dt_s
        bw_bits_per_s = bandwidth_kbps * 1000.0

        while remaining > 1e-12:
            idle = self._maybe_start_download(result)

            events = [remaining]
            if self.download is not None:
                events.append(self.download[2] / bw_bits_per_s)
            if self.buffer:
                events.append(self.buffer[0][1])
            if idle is not None:
                events.append(idle)
            delta = max(min(events), 0.0)

            if delta <= 1e-12 and self.ended():
                break

            # playback / stall
            if self.buffer:
                lvl, rem = self.buffer[0]
                played = min(delta, rem)
                result.played_s_per_level[lvl] = result.played_s_per_level.get(lvl, 0.0) + played
                self.total_played_s += played
                rem -= played
                if rem <= 1e-12:
                    self.buffer.popleft()
                    self.last_played_level = lvl
                else:
                    self.buffer[0] = (lvl, rem)
            elif not self.ended():
                result.stall_s += delta
                self.total_stall_s += delta

            # download progress
            if self.download is not None:
                lvl, chunk, bits = self.download
                got = bw_bits_per_s * delta
                result.bits_downloaded += min(got, bits)
                bits -= got
                if bits <= 1e-9:
                    self.buffer.append((lvl, self.ladder.chunk_duration_s))
                    self.next_chunk = chunk + 1
                    self.download = None
                    result.chunks_completed.append((self.t + delta, lvl))
                else:
                    self.download = (lvl, chunk, bits)

            self.t += delta
            remaining -= delta
            if self.ended():
                self.t += remaining
                break

        result.state = self.state(rebuf_window_s=result.stall_s)
        return result


# ---------------------------------------------------------------------------
# Transition profiling


def _cell_seed(base_seed: int, br_idx: int, buf_idx: int, bw_idx: int, trial: int) -> int:
    key = f"{base_seed}:{br_idx}:{buf_idx}:{bw_idx}:{trial}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "big")


@dataclass
class TransitionProfile:
    """Empirical D(s1, s2, b) over bucketized states under bucketized bandwidth.

    Cells are keyed by (s1 bitrate bucket, s1 buffer bucket, bandwidth
    bucket); the rebuffering dimension of s1 is not part of the key because
    stall time is a per-window outcome, not carried-over state.
    """

    table: dict[tuple[int, int, int], dict[tuple[int, int, int, int], float]]
    trials_per_cell: int
    window_s: float = 12.0

    def outcomes(self, s1: StateBucket, bandwidth_kbps: float) -> list[tuple[StateBucket, float]]:
        key = (s1.bitrate_idx, s1.buffer_idx, bandwidth_bucket(bandwidth_kbps))
        if key not in self.table:
            raise ProfileGapError(f"no profile cell for {key}")
        return [(StateBucket(*s2), p) for s2, p in sorted(self.table[key].items())]

    def branching(self) -> int:
        return max(len(v) for v in self.table.values())


def prime_player(
    manifest: VideoManifest,
    level_idx: int,
    buffer_s: float,
    bw_past_kbps: float,
    config: PlayerConfig = PlayerConfig(),
    seed: int = 0,
) -> SimPlayer:
    """A player mid-session at the given level / buffer with a settled bandwidth history."""
    p = SimPlayer(manifest, config, seed=seed)
    p.level = level_idx
    p.last_played_level = level_idx
    chunk_dur = manifest.ladder.chunk_duration_s
    full = int(buffer_s // chunk_dur)
    rem = buffer_s - full * chunk_dur
    if rem > 1e-9:
        p.buffer.append((level_idx, rem))
    for _ in range(full):
        p.buffer.append((level_idx, chunk_dur))
    p.next_chunk = min(full + 1, manifest.num_chunks)
    p.bw_history = [(-config.trailing_window_s, bw_past_kbps)]
    p.last_bw = bw_past_kbps
    p.mean_window_start = -config.trailing_window_s
    return p


def build_transition_profile(
    player_factory,
    start_cells,
    bandwidth_grid_kbps,
    window_s: float = 12.0,
    trials: int = 100,
    base_seed: int = 0,
) -> TransitionProfile:
    """Run `trials` constant-bandwidth simulations per (start bucket, bandwidth) cell.

    player_factory(bitrate_idx, buffer_idx, bw_kbps, seed) must return a
    player whose state falls in the requested bucket.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    table: dict = {}
    for br_idx, buf_idx in start_cells:
        for bw in bandwidth_grid_kbps:
            bw_idx = bandwidth_bucket(bw)
            counts: dict[tuple[int, int, int, int], int] = {}
            for trial in range(trials):
                seed = _cell_seed(base_seed, br_idx, buf_idx, bw_idx, trial)
                player = player_factory(br_idx, buf_idx, bw, seed)
                res = player.step(bw, window_s)
                s2 = quantize_state(res.state)
                counts[s2.key()] = counts.get(s2.key(), 0) + 1
            table[(br_idx, buf_idx, bw_idx)] = {k: c / trials for k, c in counts.items()}
    return TransitionProfile(table=table, trials_per_cell=trials, window_s=window_s)


def profile_to_dicts(profile: TransitionProfile):
    for (br, buf, bw), outcomes in sorted(profile.table.items()):
        yield {
            "s1": [br, buf],
            "b": bw,
            "trials": profile.trials_per_cell,
            "window_s": profile.window_s,
            "outcomes": [{"s2": list(k), "p": p} for k, p in sorted(outcomes.items())],
        }


def profile_from_dicts(dicts) -> TransitionProfile:
    table = {}
    trials = 0
    window_s = 12.0
    for d in dicts:
        key = (d["s1"][0], d["s1"][1], d["b"])
        table[key] = {tuple(o["s2"]): o["p"] for o in d["outcomes"]}
        trials = d["trials"]
        window_s = d.get("window_s", 12.0)
    return TransitionProfile(table=table, trials_per_cell=trials, window_s=window_s)


# ---------------------------------------------------------------------------
# Trace-driven simulation

TRACE_THRESHOLDS = (200.0, 5.0, 200.0, 200.0)  # bitrate, buffer, bw_past, bw_now


@dataclass
class TraceBank:
    """Recorded (state, next state) pairs from historical sessions."""

    steps: list[tuple[PlayerState, PlayerState]] = field(default_factory=list)

    def add_session(self, states: list[PlayerState]) -> None:
        for a, b in zip(states, states[1:]):
            self.steps.append((a, b))


def trace_step(bank: TraceBank, s: PlayerState, rng: np.random.Generator) -> PlayerState:
    """Next state sampled uniformly from in-threshold historical steps."""
    if not bank.steps:
        raise NoMatchError("trace bank is empty")
    t_br, t_buf, t_past, t_now = TRACE_THRESHOLDS
    matches = [
        nxt
        for cur, nxt in bank.steps
        if abs(cur.bitrate_kbps - s.bitrate_kbps) < t_br
        and abs(cur.buffer_s - s.buffer_s) < t_buf
        and abs(cur.bw_past_kbps - s.bw_past_kbps) < t_past
        and abs(cur.bw_now_kbps - s.bw_now_kbps) < t_now
    ]
    if not matches:
        raise NoMatchError("no historical step within thresholds")
    return matches[rng.integers(len(matches))]


def _state_to_list(s: PlayerState) -> list[float]:
    return [s.bitrate_kbps, s.buffer_s, s.bw_past_kbps, s.bw_now_kbps, s.rebuf_window_s]


def tracebank_to_dicts(bank: TraceBank):
    for cur, nxt in bank.steps:
        yield {"state": _state_to_list(cur), "next": _state_to_list(nxt)}


def tracebank_from_dicts(dicts) -> TraceBank:
    bank = TraceBank()
    for d in dicts:
        bank.steps.append((PlayerState(*d["state"]), PlayerState(*d["next"])))
    return bank
