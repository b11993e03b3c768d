"""Incident classification, engagement-drop estimation, dispersion, CIs."""
import numpy as np
import pytest

from qoesim.analysis import (
    IncidentFilter,
    InsufficientDataError,
    UndefinedDispersionError,
    bootstrap_ci,
    classify_row,
    delta_q,
    heterogeneity_dispersion,
    heterogeneity_report,
    incident_positions,
    low_bitrate_filter,
    rebuffer_filter,
    switch_filter,
    time_sensitivity,
)
from qoesim.core import QualityPattern, SegmentQuality, default_ladder
from qoesim.synthetic import (
    geometric_weights,
    incident_pattern,
    planted_incident_sessions,
    uniform_weights,
    user_incident_sessions,
    SyntheticUser,
    stable_seed,
)


@pytest.fixture(scope="module")
def rb():
    return rebuffer_filter(0.3, 0.5)


class TestClassification:
    def test_clean_pattern_is_without(self, ladder, rb):
        p = QualityPattern(tuple(SegmentQuality(1000.0, 0.0, 0.0) for _ in range(5)))
        assert classify_row(p, rb, ladder) == "without"

    def test_single_incident_is_with(self, ladder, rb):
        p = incident_pattern(rb, ladder, 5, 2)
        assert classify_row(p, rb, ladder) == "with"
        assert incident_positions(p, rb, ladder) == [2]

    def test_two_incidents_excluded(self, ladder, rb):
        segs = [SegmentQuality(1000.0, 0.0, 0.0) for _ in range(5)]
        segs[1] = SegmentQuality(1000.0, 0.4, 0.0)
        segs[3] = SegmentQuality(1000.0, 0.4, 0.0)
        assert classify_row(QualityPattern(tuple(segs)), rb, ladder) is None

    def test_out_of_range_magnitude_dirties_the_row(self, ladder, rb):
        segs = [SegmentQuality(1000.0, 0.0, 0.0) for _ in range(5)]
        segs[1] = SegmentQuality(1000.0, 5.0, 0.0)  # stall outside [0.3, 0.5]
        assert classify_row(QualityPattern(tuple(segs)), rb, ladder) is None

    def test_filter_kinds_validated(self):
        with pytest.raises(ValueError):
            IncidentFilter("bad_kind", 0.0, 1.0)
        with pytest.raises(ValueError):
            IncidentFilter("rebuffering", 2.0, 1.0)


class TestDeltaQ:
    def test_recovers_planted_drop(self, ladder, rb):
        rows = planted_incident_sessions("u", -0.3, rb, ladder, seed=1)
        got = delta_q(rows, rb, ladder)
        assert got == pytest.approx(-0.3, abs=3 * 0.05 / np.sqrt(50))

    def test_insufficient_data_raises(self, ladder, rb):
        rows = planted_incident_sessions("u", -0.3, rb, ladder, n_with=2, n_without=2, seed=1)
        with pytest.raises(InsufficientDataError):
            delta_q(rows, rb, ladder)

    def test_noiseless_plant_is_exact(self, ladder, rb):
        rows = planted_incident_sessions("u", -0.2, rb, ladder, sigma=0.0, seed=1)
        assert delta_q(rows, rb, ladder) == pytest.approx(-0.2, abs=1e-12)


class TestDispersion:
    def test_constant_drops_have_zero_dispersion(self):
        assert heterogeneity_dispersion([-0.3, -0.3, -0.3]) == 0.0

    def test_spread_drops_positive(self):
        assert heterogeneity_dispersion([-0.1, -0.3, -0.5]) > 0.0

    def test_zero_mean_undefined(self):
        with pytest.raises(UndefinedDispersionError):
            heterogeneity_dispersion([-0.1, 0.1])

    def test_needs_two_groups(self):
        with pytest.raises(InsufficientDataError):
            heterogeneity_dispersion([-0.1])


class TestBootstrap:
    def test_deterministic_under_fixed_seed(self):
        rows = list(np.random.default_rng(0).normal(0, 1, 100))
        a = bootstrap_ci(lambda s: float(np.mean(s)), rows, seed=42)
        b = bootstrap_ci(lambda s: float(np.mean(s)), rows, seed=42)
        assert a == b

    def test_different_seeds_differ(self):
        rows = list(np.random.default_rng(0).normal(0, 1, 100))
        a = bootstrap_ci(lambda s: float(np.mean(s)), rows, seed=1)
        b = bootstrap_ci(lambda s: float(np.mean(s)), rows, seed=2)
        assert a != b

    def test_empty_rows_rejected(self):
        with pytest.raises(InsufficientDataError):
            bootstrap_ci(lambda s: 0.0, [])


class TestTimeSensitivity:
    def test_front_loaded_user_hurts_more_early(self, ladder, rb):
        user = SyntheticUser(
            user_id="front",
            beta_rebuffer=2.0,
            gamma_low_bitrate=0.3,
            delta_switch=0.3,
            time_weights=geometric_weights(0.7),
            noise_sigma=0.02,
            rng_seed=stable_seed(0, "front"),
        )
        rows = user_incident_sessions(
            user, rb, ladder, positions=[1, 2, 17, 18], n_per_position=25, seed=3
        )
        early, late = time_sensitivity(rows, rb, ladder)
        assert abs(early) > abs(late)

    def test_uniform_user_symmetric(self, ladder, rb):
        user = SyntheticUser(
            user_id="uniform",
            beta_rebuffer=2.0,
            gamma_low_bitrate=0.3,
            delta_switch=0.3,
            time_weights=uniform_weights(),
            noise_sigma=0.0,
            rng_seed=0,
        )
        rows = user_incident_sessions(
            user, rb, ladder, positions=[1, 2, 17, 18], n_per_position=10, seed=3
        )
        early, late = time_sensitivity(rows, rb, ladder)
        assert early == pytest.approx(late, abs=1e-9)


class TestReport:
    def test_report_covers_groupings(self, ladder):
        rb = rebuffer_filter(0.3, 0.5)
        rows = []
        for i, drop in enumerate((-0.1, -0.3, -0.5)):
            rows += planted_incident_sessions(
                f"user_{i}", drop, rb, ladder, seed=i, device=("desktop", "mobile", "tv")[i]
            )
        report = heterogeneity_report(rows, ladder, filters={"rebuffering": rb}, seed=0)
        by_group = {r["group_by"]: r for r in report}
        assert "user" in by_group and "device" in by_group
        assert by_group["user"]["dispersion"] > 0
        assert by_group["user"]["ci_low"] <= by_group["user"]["ci_high"]
