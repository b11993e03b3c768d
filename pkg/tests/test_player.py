"""Simulated player mechanics, transition profiling, and trace replay."""
import numpy as np
import pytest

from qoesim.core import PlayerState, constant_bitrate_manifest, default_ladder, quantize_state
from qoesim.player import (
    NoMatchError,
    PlayerConfig,
    ProfileGapError,
    SimPlayer,
    TraceBank,
    build_transition_profile,
    prime_player,
    profile_from_dicts,
    profile_to_dicts,
    trace_step,
)


def run_session(player, bandwidth_kbps, total_s, dt=3.0):
    results = []
    t = 0.0
    while t < total_s and not player.ended():
        results.append(player.step(bandwidth_kbps, dt))
        t += dt
    return results


class TestSimPlayer:
    def test_slow_start_first_chunk_lowest_level(self, ladder):
        m = constant_bitrate_manifest("v", 10, ladder)
        p = SimPlayer(m, PlayerConfig(), seed=0)
        res = p.step(1000.0, 3.0)
        assert res.chunks_completed, "first chunk should finish quickly at full bandwidth"
        assert res.chunks_completed[0][1] == 0

    def test_no_stall_when_bandwidth_exceeds_top_level(self, ladder):
        m = constant_bitrate_manifest("v", 10, ladder)
        p = SimPlayer(m, PlayerConfig(), seed=0)
        results = run_session(p, 2000.0, 60.0)
        # Only the initial join delay (first chunk: 200 Kbps x 3 s at 2000 Kbps)
        # counts as stall; playback never starves afterwards.
        assert sum(r.stall_s for r in results) == pytest.approx(0.3, abs=1e-9)
        assert sum(r.stall_s for r in results[1:]) == pytest.approx(0.0, abs=1e-9)
        assert p.total_played_s == pytest.approx(m.duration_s)

    def test_stalls_when_bandwidth_below_minimum_level(self, ladder):
        m = constant_bitrate_manifest("v", 10, ladder)
        p = SimPlayer(m, PlayerConfig(), seed=0)
        results = run_session(p, 100.0, 120.0, dt=3.0)
        assert sum(r.stall_s for r in results) > 0.0

    def test_converges_to_affordable_level(self, ladder):
        m = constant_bitrate_manifest("v", 40, ladder)
        p = SimPlayer(m, PlayerConfig(), seed=0)
        run_session(p, 700.0, 60.0)
        # 700 Kbps affords the 600 level; late chunks should be fetched there.
        assert p.level == 2

    def test_buffer_respects_cap(self, ladder):
        cfg = PlayerConfig(max_buffer_s=12.0)
        m = constant_bitrate_manifest("v", 40, ladder)
        p = SimPlayer(m, cfg, seed=0)
        for _ in range(20):
            p.step(5000.0, 3.0)
            assert p.buffer_s <= cfg.max_buffer_s + 1e-6

    def test_rejects_nonpositive_inputs(self, ladder):
        p = SimPlayer(constant_bitrate_manifest("v", 5, ladder), seed=0)
        with pytest.raises(ValueError):
            p.step(0.0, 3.0)
        with pytest.raises(ValueError):
            p.step(500.0, 0.0)

    def test_mean_played_bitrate_weighted(self, ladder):
        from qoesim.player import StepResult

        res = StepResult(state=None, stall_s=0.0, played_s_per_level={0: 1.0, 4: 3.0})
        # (200*1 + 1000*3) / 4
        assert res.mean_played_bitrate(ladder.levels) == pytest.approx(800.0)
        empty = StepResult(state=None, stall_s=0.0)
        assert empty.mean_played_bitrate(ladder.levels) is None

    def test_trailing_mean_resets_on_bandwidth_change(self, ladder):
        m = constant_bitrate_manifest("v", 40, ladder)
        p = SimPlayer(m, PlayerConfig(), seed=0)
        p.step(1000.0, 12.0)
        p.step(400.0, 12.0)
        # The estimate window restarts at the change, so the old 1000 does not
        # linger in the mean.
        assert p.trailing_mean_bw() == pytest.approx(400.0)


class TestPrimeAndProfile:
    def test_primed_player_lands_in_requested_bucket(self, ladder):
        m = constant_bitrate_manifest("v", 100, ladder)
        p = prime_player(m, 2, 5.5, 600.0, PlayerConfig(), seed=3)
        b = quantize_state(p.state())
        assert b.bitrate_idx == int(600.0 // 200.0)
        assert b.buffer_idx == 5

    def test_profile_probabilities_sum_to_one(self, ladder):
        m = constant_bitrate_manifest("v", 100, ladder)

        def factory(br_idx, buf_idx, bw, seed):
            level = next(i for i, lvl in enumerate(ladder.levels) if int(lvl // 200.0) == br_idx)
            return prime_player(m, level, buf_idx + 0.5, ladder.levels[level], PlayerConfig(), seed)

        profile = build_transition_profile(
            factory, [(1, 2), (3, 4)], (400.0, 800.0), trials=20, base_seed=9
        )
        for cell in profile.table.values():
            assert sum(cell.values()) == pytest.approx(1.0, abs=1e-9)
        assert profile.branching() >= 1

    def test_profile_gap_raises(self, ladder):
        m = constant_bitrate_manifest("v", 100, ladder)

        def factory(br_idx, buf_idx, bw, seed):
            return prime_player(m, 1, buf_idx + 0.5, 400.0, PlayerConfig(), seed)

        profile = build_transition_profile(factory, [(2, 2)], (400.0,), trials=5, base_seed=1)
        from qoesim.core import StateBucket

        with pytest.raises(ProfileGapError):
            profile.outcomes(StateBucket(4, 9, 0, 0), 400.0)

    def test_profile_serialization_roundtrip(self, ladder):
        m = constant_bitrate_manifest("v", 100, ladder)

        def factory(br_idx, buf_idx, bw, seed):
            return prime_player(m, 1, buf_idx + 0.5, 400.0, PlayerConfig(), seed)

        profile = build_transition_profile(factory, [(2, 2)], (400.0, 600.0), trials=5, base_seed=1)
        back = profile_from_dicts(profile_to_dicts(profile))
        assert back.table == profile.table
        assert back.trials_per_cell == profile.trials_per_cell


class TestTraceBank:
    def test_replay_matches_thresholds(self):
        bank = TraceBank()
        states = [
            PlayerState(600.0, 5.0, 600.0, 600.0),
            PlayerState(800.0, 6.0, 700.0, 800.0),
            PlayerState(800.0, 7.0, 750.0, 800.0),
        ]
        bank.add_session(states)
        rng = np.random.default_rng(0)
        # Exactly states[0]: states[1] is outside the 200 Kbps bitrate threshold.
        nxt = trace_step(bank, PlayerState(600.0, 5.0, 600.0, 600.0), rng)
        assert nxt == states[1]

    def test_no_match_raises(self):
        bank = TraceBank()
        bank.add_session([PlayerState(600.0, 5.0, 600.0, 600.0), PlayerState(600.0, 5.0, 600.0, 600.0)])
        rng = np.random.default_rng(0)
        with pytest.raises(NoMatchError):
            trace_step(bank, PlayerState(2000.0, 0.0, 2000.0, 2000.0), rng)
