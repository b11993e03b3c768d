"""Simulation suite for online per-user QoE modeling and bandwidth-controlled
quality optimization in adaptive video streaming."""

from .core import (
    BandwidthSchedule,
    BitrateLadder,
    PlayerState,
    QualityPattern,
    SegmentQuality,
    SessionRecord,
    StateBucket,
    VideoManifest,
    chunk_bitrate,
    coalesce,
    default_ladder,
    quantize_state,
)
from .qoe_model import ForestConfig, QoeForest, UserDataset, predict_qoe, train, uncertainty
from .player import PlayerConfig, SimPlayer, TraceBank, TransitionProfile, trace_step
from .scheduler import (
    SchedulerConfig,
    bandwidth_usage,
    baseline_policy,
    expected_objective,
    objective_value,
    select_bandwidth_schedule,
    select_quality_pattern,
)
from .ratelimit import ThrottleState, estimate_real_bw, hold_time
from .analysis import IncidentFilter, bootstrap_ci, delta_q, heterogeneity_dispersion, time_sensitivity
from .synthetic import SyntheticUser, ground_truth_engagement, make_users
from .harness import ExperimentConfig, microbenchmarks, run_experiment

__version__ = "0.1.0"
