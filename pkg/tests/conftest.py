"""Shared fixtures: small ladders, manifests, forests, and synthetic profiles."""
from __future__ import annotations

import numpy as np
import pytest

from qoesim.core import (
    BANDWIDTH_BUCKET_KBPS,
    BITRATE_BUCKET_KBPS,
    BitrateLadder,
    constant_bitrate_manifest,
    default_ladder,
)
from qoesim.player import TransitionProfile
from qoesim.qoe_model import ForestConfig, UserDataset, train


@pytest.fixture(scope="session")
def ladder():
    return default_ladder()


@pytest.fixture(scope="session")
def small_ladder():
    return BitrateLadder((200.0, 600.0, 1000.0), 3.0)


@pytest.fixture(scope="session")
def manifest20(ladder):
    return constant_bitrate_manifest("video_20c", 20, ladder)


def make_training_dataset(ladder, n_rows=60, seed=0, num_parts=20):
    """Random plausible rows so a forest can be trained for scheduler tests."""
    from qoesim.qoe_model import extract_features
    from qoesim.synthetic import random_pattern

    rng = np.random.default_rng(seed)
    ds = UserDataset()
    for _ in range(n_rows):
        pattern = random_pattern(ladder, int(rng.integers(3, 8)), rng)
        feats = extract_features(pattern, ladder, num_parts=num_parts)
        ds.add_row(feats, float(rng.uniform(0.0, 1.0)), provenance="initial")
    return ds


@pytest.fixture(scope="session")
def small_forest(ladder):
    ds = make_training_dataset(ladder, n_rows=60, seed=1)
    return train(ds, ForestConfig(num_trees=25, max_depth=6), seed=11)


def synthetic_profile(ladder, bandwidth_grid, max_buffer_idx=3, branching=2, seed=0):
    """A closed random transition table over the ladder's bitrate buckets.

    Every (bitrate bucket, buffer bucket, bandwidth bucket) cell exists and
    each cell has exactly `branching` outcomes whose probabilities sum to 1
    exactly (integer counts over 100 trials).
    """
    rng = np.random.default_rng(seed)
    br_buckets = [int(lvl // BITRATE_BUCKET_KBPS) for lvl in ladder.levels]
    table = {}
    for br in br_buckets:
        for buf in range(max_buffer_idx + 1):
            for bw in bandwidth_grid:
                bw_idx = int(bw // BANDWIDTH_BUCKET_KBPS)
                outcomes = {}
                while len(outcomes) < branching:
                    key = (
                        int(rng.choice(br_buckets)),
                        int(rng.integers(0, max_buffer_idx + 1)),
                        bw_idx,
                        int(rng.integers(0, 2)),
                    )
                    outcomes.setdefault(key, 0)
                counts = rng.multinomial(100, [1.0 / branching] * branching)
                # Guarantee every outcome keeps nonzero mass so the cell's
                # branching factor is exactly `branching`.
                counts = np.maximum(counts, 1)
                probs = counts / counts.sum()
                table[(br, buf, bw_idx)] = {
                    k: float(p) for k, p in zip(outcomes, probs)
                }
    return TransitionProfile(table=table, trials_per_cell=100, window_s=12.0)
