"""Per-user engagement prediction.

A quality pattern is summarized into 20 video parts x (mean bitrate, total
switch, total rebuffer) = 60 features.  A random-forest classifier maps the
features into one of 10 engagement buckets; the prediction is the median of
the winning bucket and the uncertainty is one minus the normalized minimal
margin between the top two vote counts.
"""
from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .core import BitrateLadder, QualityPattern, SessionRecord

NUM_PARTS = 20
NUM_BUCKETS = 10

FOREST_FORMAT = "qoesim-forest"
FOREST_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 100
    max_depth: int = 10
    min_leaf: int = 2
    features_per_split: int = 8
    num_parts: int = NUM_PARTS  # 1 collapses to 3 session-aggregate features
    initial_weight: float = 1.0  # relative weight of shared initial rows


def extract_features(
    pattern: QualityPattern, ladder: BitrateLadder, num_parts: int = NUM_PARTS
) -> np.ndarray:
    """Per-part (mean bitrate, total switch, total rebuffer) feature vector.

    Segment j of N maps to part floor(j*num_parts/N).  Parts with no
    segments inherit the previous part's bitrate and contribute zero switch
    and rebuffer.
    """
    n = len(pattern.segments)
    if n == 0:
        raise ValueError("pattern must be non-empty")
    sums = np.zeros(num_parts)
    counts = np.zeros(num_parts, dtype=int)
    switches = np.zeros(num_parts)
    rebufs = np.zeros(num_parts)
    for j, seg in enumerate(pattern.segments):
        p = j * num_parts // n
        sums[p] += seg.bitrate_kbps
        counts[p] += 1
        switches[p] += seg.switch_kbps
        rebufs[p] += seg.rebuffer_s
    feats = np.zeros(num_parts * 3)
    prev_bitrate = 0.0
    for p in range(num_parts):
        mean_br = sums[p] / counts[p] if counts[p] else prev_bitrate
        feats[3 * p] = mean_br
        feats[3 * p + 1] = switches[p]
        feats[3 * p + 2] = rebufs[p]
        prev_bitrate = mean_br
    return feats


def bucketize_engagement(e: float) -> int:
    """Map engagement in [0,1] to bucket 0..9; 1.0 clamps to bucket 9."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"engagement {e!r} out of [0, 1]")
    return min(int(e * NUM_BUCKETS), NUM_BUCKETS - 1)


def bucket_median(bucket: int) -> float:
    return (bucket + 0.5) / NUM_BUCKETS


@dataclass
class UserDataset:
    """Training rows for one user's model: shared initial rows + own sessions."""

    features: list[np.ndarray] = field(default_factory=list)
    engagements: list[float] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)  # "initial" | "user"

    def __len__(self) -> int:
        return len(self.features)

    def add_row(self, features: np.ndarray, engagement: float, provenance: str = "user") -> None:
        if not 0.0 <= engagement <= 1.0:
            raise ValueError("engagement out of [0, 1]")
        self.features.append(np.asarray(features, dtype=float))
        self.engagements.append(float(engagement))
        self.provenance.append(provenance)

    def copy(self) -> "UserDataset":
        return UserDataset(list(self.features), list(self.engagements), list(self.provenance))


def content_seed(dataset: UserDataset, user_id: str = "") -> int:
    """Deterministic seed from the dataset contents (row order agnostic)."""
    rows = sorted(
        (x.tobytes() + np.float64(e).tobytes(), prov.encode())
        for x, e, prov in zip(dataset.features, dataset.engagements, dataset.provenance)
    )
    h = hashlib.sha256(user_id.encode())
    for data, prov in rows:
        h.update(data)
        h.update(prov)
    return int.from_bytes(h.digest()[:4], "big")


class QoeForest:
    """Trained forest with vote-count access for the minimal-margin uncertainty."""

    def __init__(self, forest: RandomForestClassifier, config: ForestConfig, rng_seed: int):
        self.config = config
        self.rng_seed = rng_seed
        self.num_trees = config.num_trees
        self._forest = forest
        # Per-tree leaf-node -> predicted bucket, for fast vote counting via apply().
        classes = forest.classes_
        self._leaf_class = []
        for est in forest.estimators_:
            values = est.tree_.value[:, 0, :]
            self._leaf_class.append(classes[np.argmax(values, axis=1)])

    def votes(self, xs: np.ndarray) -> np.ndarray:
        """Vote counts per bucket, shape (n, 10)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float32))
        xs = np.ascontiguousarray(xs)
        counts = np.zeros((xs.shape[0], NUM_BUCKETS), dtype=int)
        rows = np.arange(xs.shape[0])
        # Apply each tree directly; the ensemble-level apply() re-validates
        # inputs per tree, which dominates runtime for many small batches.
        for est, leaf_class in zip(self._forest.estimators_, self._leaf_class):
            preds = leaf_class[est.tree_.apply(xs)]
            np.add.at(counts, (rows, preds), 1)
        return counts


def train(dataset: UserDataset, config: ForestConfig = ForestConfig(), seed: int | None = None) -> QoeForest:
    """Fit a forest on the dataset; deterministic given (dataset, config, seed)."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if seed is None:
        seed = content_seed(dataset)
    order = sorted(
        range(len(dataset)),
        key=lambda i: (dataset.features[i].tobytes(), dataset.engagements[i], dataset.provenance[i]),
    )
    X = np.stack([dataset.features[i] for i in order])
    y = np.array([bucketize_engagement(dataset.engagements[i]) for i in order])
    weights = np.array(
        [config.initial_weight if dataset.provenance[i] == "initial" else 1.0 for i in order]
    )
    forest = RandomForestClassifier(
        n_estimators=config.num_trees,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_leaf,
        max_features=min(config.features_per_split, X.shape[1]),
        bootstrap=True,
        random_state=seed,
        n_jobs=1,
    )
    forest.fit(X, y, sample_weight=weights)
    return QoeForest(forest, config, seed)


def predict_bucket(f: QoeForest, x: np.ndarray) -> int:
    counts = f.votes(x)[0]
    return int(np.argmax(counts))  # argmax ties break toward the lower bucket


def predict_qoe(f: QoeForest, x: np.ndarray) -> float:
    return bucket_median(predict_bucket(f, x))


def uncertainty(f: QoeForest, x: np.ndarray) -> float:
    counts = np.sort(f.votes(x)[0])[::-1]
    return 1.0 - (counts[0] - counts[1]) / f.num_trees


def predict_qoe_batch(f: QoeForest, xs: np.ndarray) -> np.ndarray:
    counts = f.votes(xs)
    return (np.argmax(counts, axis=1) + 0.5) / NUM_BUCKETS


def uncertainty_batch(f: QoeForest, xs: np.ndarray) -> np.ndarray:
    counts = np.sort(f.votes(xs), axis=1)[:, ::-1]
    return 1.0 - (counts[:, 0] - counts[:, 1]) / f.num_trees


def update_with_session(
    dataset: UserDataset,
    record: SessionRecord,
    ladder: BitrateLadder,
    config: ForestConfig = ForestConfig(),
) -> tuple[UserDataset, QoeForest]:
    """Append one observed session and retrain the user's forest."""
    updated = dataset.copy()
    feats = extract_features(record.pattern, ladder, num_parts=config.num_parts)
    updated.add_row(feats, record.engagement, provenance="user")
    forest = train(updated, config, seed=content_seed(updated, record.user_id))
    return updated, forest


def save_forest(path, f: QoeForest) -> None:
    payload = {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "config": f.config,
        "rng_seed": f.rng_seed,
        "forest": f._forest,
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_forest(path) -> QoeForest:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("format") != FOREST_FORMAT:
        raise ValueError("not a forest model file")
    if payload.get("version") != FOREST_VERSION:
        raise ValueError(f"unsupported forest version {payload.get('version')}")
    return QoeForest(payload["forest"], payload["config"], payload["rng_seed"])
