"""Dataset representation and file I/O.

A dataset on disk is a directory of per-video feature tensors plus text
label files:

    <root>/
      mapping.txt               "<index> <name>" per action
      activities.txt            "<index> <name>" per activity (optional)
      video_activities.txt      "<video_id> <activity_name>" (optional)
      features/<video_id>.feat  binary tensor, see FEATURE_MAGIC below
      groundTruth/<video_id>.txt  one action name per line
      splits/{labeled,unlabeled,test}.txt  one video id per line

The feature tensor format is an 8-byte magic, two little-endian uint64 dims
(T, F), then T*F little-endian float32 values in row-major order.
"""
from __future__ import annotations

import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    MalformedFile,
    NonFiniteData,
    TooFewVideos,
    UnknownAction,
)
from .rng import child_rng

FEATURE_MAGIC = b"FEATSEQ0"
_HEADER = struct.Struct("<8sQQ")


class LabelSource(str, Enum):
    GROUND_TRUTH = "ground_truth"
    CLUSTER = "cluster"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class ActionVocabulary:
    """Ordered action names, plus optional complex-activity names."""

    actions: tuple[str, ...]
    activities: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.actions) < 1:
            raise ValueError("vocabulary needs at least one action")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("action names must be unique")
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "activities", tuple(self.activities))

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def num_activities(self) -> int:
        return len(self.activities)

    def action_index(self, name: str) -> int:
        try:
            return self.actions.index(name)
        except ValueError:
            raise UnknownAction(f"action {name!r} not in vocabulary") from None


@dataclass
class FeatureSequence:
    """One video's frame-wise input features, shape (T, F)."""

    video_id: str
    data: np.ndarray
    activity: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(
                f"features for {self.video_id!r} must be (T>=1, F>=1), "
                f"got shape {self.data.shape}"
            )

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[1]


@dataclass
class LabelSequence:
    """Frame-wise integer labels with a declared provenance."""

    video_id: str
    labels: np.ndarray
    source: LabelSource

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError(f"labels for {self.video_id!r} must be 1-D")
        self.source = LabelSource(self.source)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint labeled/unlabeled partition of the training videos."""

    labeled_ids: tuple[str, ...]
    unlabeled_ids: tuple[str, ...]
    seed: int

    def __post_init__(self):
        overlap = set(self.labeled_ids) & set(self.unlabeled_ids)
        if overlap:
            raise ValueError(f"labeled/unlabeled overlap: {sorted(overlap)}")

    @property
    def train_ids(self) -> tuple[str, ...]:
        return tuple(self.labeled_ids) + tuple(self.unlabeled_ids)


@dataclass(frozen=True)
class DownsampleConfig:
    """Temporal max-pool window; w_min/w_max default to [ceil(w0/2), 2*w0]."""

    w0: int
    w_min: int | None = None
    w_max: int | None = None
    augment: bool = False

    def __post_init__(self):
        if self.w_min is None:
            object.__setattr__(self, "w_min", (self.w0 + 1) // 2)
        if self.w_max is None:
            object.__setattr__(self, "w_max", 2 * self.w0)
        if not (1 <= self.w_min <= self.w0 <= self.w_max):
            raise ValueError(
                f"need 1 <= w_min <= w0 <= w_max, got "
                f"({self.w_min}, {self.w0}, {self.w_max})"
            )


# ---------------------------------------------------------------------------
# feature tensor file I/O


def save_feature_sequence(path: str | Path, seq: FeatureSequence) -> None:
    data = np.ascontiguousarray(seq.data, dtype="<f4")
    header = _HEADER.pack(FEATURE_MAGIC, data.shape[0], data.shape[1])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_feature_sequence(
    path: str | Path, video_id: str, activity: int | None = None
) -> FeatureSequence:
    """Read a feature tensor file; header and payload size must agree."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedFile(f"{path}: shorter than header ({len(raw)} bytes)")
    magic, t, f = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if t < 1 or f < 1:
        raise MalformedFile(f"{path}: degenerate dims ({t}, {f})")
    expected = _HEADER.size + t * f * 4
    if len(raw) != expected:
        raise MalformedFile(
            f"{path}: payload is {len(raw) - _HEADER.size} bytes, "
            f"header promises {t * f * 4}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, f)
    if not np.isfinite(data).all():
        raise NonFiniteData(f"{path}: NaN/Inf in feature payload")
    return FeatureSequence(video_id=video_id, data=data.copy(), activity=activity)


# ---------------------------------------------------------------------------
# text file I/O


def load_labels(
    path: str | Path, vocab: ActionVocabulary, video_id: str | None = None
) -> LabelSequence:
    """Read a ground-truth label file (one action name per line)."""
    path = Path(path)
    names = [line for line in path.read_text().splitlines() if line.strip()]
    labels = np.array([vocab.action_index(n.strip()) for n in names], dtype=np.int64)
    return LabelSequence(
        video_id=video_id if video_id is not None else path.stem,
        labels=labels,
        source=LabelSource.GROUND_TRUTH,
    )


def save_labels(path: str | Path, seq: LabelSequence, vocab: ActionVocabulary) -> None:
    lines = [vocab.actions[i] for i in seq.labels]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_mapping(path: str | Path) -> tuple[str, ...]:
    """Read an "<index> <name>" mapping file, ordered by index."""
    entries: dict[int, str] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        idx, name = line.split(maxsplit=1)
        entries[int(idx)] = name.strip()
    return tuple(entries[i] for i in sorted(entries))


def save_mapping(path: str | Path, names: Sequence[str]) -> None:
    Path(path).write_text(
        "".join(f"{i} {name}\n" for i, name in enumerate(names))
    )


def load_split_file(path: str | Path) -> tuple[str, ...]:
    return tuple(
        line.strip() for line in Path(path).read_text().splitlines() if line.strip()
    )


def save_split_file(path: str | Path, video_ids: Iterable[str]) -> None:
    Path(path).write_text("".join(f"{vid}\n" for vid in video_ids))


# ---------------------------------------------------------------------------
# downsampling and augmentation


def downsample(
    features: FeatureSequence,
    labels: LabelSequence | None = None,
    w: int = 1,
) -> tuple[FeatureSequence, LabelSequence | None]:
    """Max-pool features (and majority-vote labels) over windows of size w.

    Output length is ceil(T / w); the final partial window is kept. Label
    ties go to the smallest label index.
    """
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    t_in = features.num_frames
    if labels is not None and len(labels) != t_in:
        raise LengthMismatch(
            f"{features.video_id!r}: {len(labels)} labels for {t_in} frames"
        )
    if w == 1:
        out_labels = None
        if labels is not None:
            out_labels = LabelSequence(labels.video_id, labels.labels.copy(), labels.source)
        return (
            FeatureSequence(features.video_id, features.data.copy(), features.activity),
            out_labels,
        )

    starts = np.arange(0, t_in, w)
    pooled = np.maximum.reduceat(features.data, starts, axis=0)
    out_feats = FeatureSequence(features.video_id, pooled, features.activity)

    out_labels = None
    if labels is not None:
        out = np.empty(len(starts), dtype=np.int64)
        for i, s in enumerate(starts):
            window = labels.labels[s : s + w]
            out[i] = np.bincount(window).argmax()
        out_labels = LabelSequence(labels.video_id, out, labels.source)
    return out_feats, out_labels


def sample_augment_window(config: DownsampleConfig, rng: np.random.Generator) -> int:
    """Draw the pooling window for one training pass."""
    if not config.augment:
        return config.w0
    return int(rng.integers(config.w_min, config.w_max + 1))


# ---------------------------------------------------------------------------
# labeled/unlabeled splitting


def make_split(
    video_ids: Sequence[str],
    labeled_fraction: float,
    seed: int,
    min_labeled: int = 1,
    labels: Mapping[str, LabelSequence] | None = None,
) -> DatasetSplit:
    """Pick a labeled subset of size max(min_labeled, round(fraction * N)).

    Purely a function of the arguments: ids are sorted before drawing, so
    caller-side ordering is irrelevant. When ``labels`` is provided, warns
    (without failing) if the labeled subset does not cover every action
    present in the full set.
    """
    if not video_ids:
        raise TooFewVideos("no videos to split")
    if not (0.0 < labeled_fraction <= 1.0):
        raise ValueError(f"labeled_fraction must be in (0, 1], got {labeled_fraction}")
    ids = sorted(video_ids)
    n = len(ids)
    if min_labeled > n:
        raise TooFewVideos(f"min_labeled={min_labeled} exceeds {n} videos")
    n_labeled = min(n, max(min_labeled, round(labeled_fraction * n)))
    rng = child_rng(seed, "split")
    chosen = rng.choice(n, size=n_labeled, replace=False)
    labeled = tuple(ids[i] for i in sorted(chosen))
    unlabeled = tuple(v for v in ids if v not in set(labeled))

    if labels is not None:
        missing = _missing_actions(ids, labeled, labels)
        if missing:
            warnings.warn(
                f"labeled split misses actions {sorted(missing)}; "
                "consider a different seed or larger fraction",
                stacklevel=2,
            )
    return DatasetSplit(labeled_ids=labeled, unlabeled_ids=unlabeled, seed=seed)


def _missing_actions(
    all_ids: Sequence[str],
    labeled_ids: Sequence[str],
    labels: Mapping[str, LabelSequence],
) -> set[int]:
    all_actions: set[int] = set()
    labeled_actions: set[int] = set()
    labeled = set(labeled_ids)
    for vid in all_ids:
        if vid in labels:
            present = set(np.unique(labels[vid].labels).tolist())
            all_actions |= present
            if vid in labeled:
                labeled_actions |= present
    return all_actions - labeled_actions


def make_covering_split(
    video_ids: Sequence[str],
    labeled_fraction: float,
    seed: int,
    min_labeled: int = 1,
    labels: Mapping[str, LabelSequence] | None = None,
    max_tries: int = 64,
) -> DatasetSplit:
    """make_split, retried on derived seeds until labeled videos cover all actions.

    Small labeled sets are normally chosen so that every action class is
    represented; this walks deterministic sub-seeds of ``seed`` and returns
    the first split whose labeled videos carry every action present in the
    full set (or the last attempt, with the usual warning, if none does).
    """
    if labels is None:
        return make_split(video_ids, labeled_fraction, seed, min_labeled)
    ids = sorted(video_ids)
    for attempt in range(max_tries):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            split = make_split(
                ids, labeled_fraction, seed + attempt, min_labeled, labels=labels
            )
        if not _missing_actions(ids, split.labeled_ids, labels):
            return split
    return make_split(ids, labeled_fraction, seed + max_tries - 1, min_labeled, labels=labels)


# ---------------------------------------------------------------------------
# whole-dataset container


@dataclass
class Dataset:
    """In-memory dataset: vocab plus per-video features and gt labels."""

    vocab: ActionVocabulary
    features: dict[str, FeatureSequence] = field(default_factory=dict)
    gt_labels: dict[str, LabelSequence] = field(default_factory=dict)
    test_ids: tuple[str, ...] = ()

    @property
    def video_ids(self) -> tuple[str, ...]:
        return tuple(self.features)

    @property
    def train_ids(self) -> tuple[str, ...]:
        test = set(self.test_ids)
        return tuple(v for v in self.features if v not in test)

    def check_paired(self) -> None:
        """Verify every label sequence matches its video's frame count."""
        for vid, feats in self.features.items():
            if vid in self.gt_labels and len(self.gt_labels[vid]) != feats.num_frames:
                raise LengthMismatch(
                    f"{vid!r}: {len(self.gt_labels[vid])} labels for "
                    f"{feats.num_frames} frames"
                )

    def activity_counts(self) -> Counter:
        return Counter(
            f.activity for f in self.features.values() if f.activity is not None
        )


def load_dataset(root: str | Path) -> Dataset:
    """Load a dataset directory laid out as in the module docstring."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    actions = load_mapping(root / "mapping.txt")
    activities: tuple[str, ...] = ()
    act_path = root / "activities.txt"
    if act_path.exists():
        activities = load_mapping(act_path)
    vocab = ActionVocabulary(actions=actions, activities=activities)

    video_activity: dict[str, int] = {}
    va_path = root / "video_activities.txt"
    if va_path.exists():
        for line in va_path.read_text().splitlines():
            if not line.strip():
                continue
            vid, name = line.split(maxsplit=1)
            video_activity[vid] = activities.index(name.strip())

    ds = Dataset(vocab=vocab)
    feat_dir = root / "features"
    for feat_path in sorted(feat_dir.glob("*.feat")):
        vid = feat_path.stem
        ds.features[vid] = load_feature_sequence(
            feat_path, video_id=vid, activity=video_activity.get(vid)
        )
        gt_path = root / "groundTruth" / f"{vid}.txt"
        if gt_path.exists():
            ds.gt_labels[vid] = load_labels(gt_path, vocab, video_id=vid)
    test_path = root / "splits" / "test.txt"
    if test_path.exists():
        ds.test_ids = load_split_file(test_path)
    ds.check_paired()
    return ds
