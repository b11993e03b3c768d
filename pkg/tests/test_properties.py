"""Property-based checks over the core math."""
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from qoesim.core import (
    PlayerState,
    coalesce,
    constant_bitrate_manifest,
    default_ladder,
    expand_to_chunks,
    pattern_from_bitrates,
    quantize_state,
    segment_chunk_counts,
)
from qoesim.qoe_model import bucket_median, bucketize_engagement, extract_features
from qoesim.ratelimit import TokenBucket, hold_time
from qoesim.scheduler import bandwidth_usage

LADDER = default_ladder()

level = st.sampled_from(LADDER.levels)
engagement = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@given(st.lists(level, min_size=1, max_size=12))
def test_pattern_switch_invariants(bitrates):
    p = pattern_from_bitrates(bitrates)
    assert p.segments[0].switch_kbps == 0.0
    for prev, seg in zip(p.segments, p.segments[1:]):
        assert seg.switch_kbps == abs(seg.bitrate_kbps - prev.bitrate_kbps)


@given(st.lists(level, min_size=1, max_size=12), engagement)
def test_usage_bounded_by_ladder_extremes(bitrates, qoe):
    m = constant_bitrate_manifest("v", len(bitrates), LADDER)
    p = pattern_from_bitrates(bitrates)
    usage = bandwidth_usage(p, qoe, m)
    assert usage >= 0.0
    if qoe > 0:
        n = m.num_chunks
        inflation = math.ceil(qoe * n) / (qoe * n)
        assert usage <= LADDER.max_kbps * inflation * (1 + 1e-9)


@given(engagement)
def test_bucketize_roundtrips_through_median(e):
    b = bucketize_engagement(e)
    assert 0 <= b <= 9
    assert bucketize_engagement(bucket_median(b)) == b


@given(
    st.integers(min_value=1, max_value=200),
    st.integers(min_value=1, max_value=10),
)
def test_coalesce_counts_consistent(num_chunks, g):
    n_seg = coalesce(num_chunks, 3.0, g)
    counts = segment_chunk_counts(num_chunks, g)
    assert len(counts) == n_seg
    assert sum(counts) == num_chunks
    assert all(1 <= c <= g for c in counts)
    expanded = expand_to_chunks(list(range(n_seg)), num_chunks, g)
    assert len(expanded) == num_chunks


@given(
    st.integers(min_value=1, max_value=10_000_000),
    st.floats(min_value=1.0, max_value=10_000.0, allow_nan=False),
    st.floats(min_value=1.0, max_value=10_000.0, allow_nan=False),
)
def test_hold_time_nonnegative_and_exact_rate(size, target, real):
    h = hold_time(size, target, real)
    assert h >= 0.0
    # Held transfers never exceed the target rate.
    total_s = size * 8.0 / (1000.0 * real) + h
    assert size * 8.0 / (1000.0 * total_s) <= max(target, real) + 1e-6


@given(
    st.floats(min_value=10.0, max_value=5000.0, allow_nan=False),
    st.lists(st.floats(min_value=1.0, max_value=1_000_000.0), min_size=1, max_size=30),
)
def test_token_bucket_never_exceeds_rate(rate, chunks):
    b = TokenBucket(rate_kbps=rate)
    now, sent = 0.0, 0.0
    for bits in chunks:
        now += b.wait_time(bits, now)
        b.consume(bits, now)
        sent += bits
        now += 0.01
    if now > 0:
        assert sent / (1000.0 * now) <= rate * 1.01 + 1.0


@given(
    st.floats(min_value=0.0, max_value=3000.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=60.0, allow_nan=False),
    st.floats(min_value=0.0, max_value=3000.0, allow_nan=False),
)
def test_quantize_state_brackets_the_value(br, buf, bw):
    s = PlayerState(br, buf, bw, bw)
    b = quantize_state(s)
    assert b.bitrate_idx * 200.0 <= br < (b.bitrate_idx + 1) * 200.0
    assert b.buffer_idx * 1.0 <= buf < (b.buffer_idx + 1) * 1.0


@given(st.lists(level, min_size=1, max_size=25))
@settings(max_examples=40)
def test_features_preserve_session_mean_bitrate(bitrates):
    p = pattern_from_bitrates(bitrates)
    x = extract_features(p, LADDER, num_parts=1)
    assert x[0] == np.mean(bitrates)
