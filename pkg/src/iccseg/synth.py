"""Synthetic dataset generation.

Desk-scale stand-in for pre-extracted video features: each action has a
fixed prototype vector, frames are prototype + per-video offset + isotropic
noise, and videos are built from non-repeating action segments whose order
is governed by the video's complex activity.

The per-video offset is the interesting nuisance: frame features of one
video share a random shift (scaled relative to the noise level), so raw
frames separate partly by video rather than purely by action. A frame-wise
linear classifier on raw features suffers from it, while temporal models
trained across many videos can learn it away. Both the offset and the
noise vanish at noise_scale=0, where frames equal their prototypes exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ActionVocabulary, FeatureSequence, LabelSequence, LabelSource
from .errors import BadSpec
from .rng import child_rng


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic dataset generator."""

    num_activities: int = 4
    num_actions: int = 6
    videos_per_activity: int = 12
    mean_segments: int = 6
    frame_dim: int = 16
    noise_scale: float = 0.5
    seed: int = 7
    # Separation between action prototypes (pairwise Euclidean distance).
    prototype_distance: float = 1.5
    # Per-video offset magnitude, in units of noise_scale.
    video_offset_scale: float = 4.0
    # Mean frames per action segment (segments never fall below min_segment_len).
    mean_segment_len: int = 40
    min_segment_len: int = 8

    def __post_init__(self):
        if self.num_actions < 2:
            raise BadSpec(f"need >= 2 actions, got {self.num_actions}")
        if self.frame_dim < self.num_actions:
            raise BadSpec(
                f"frame_dim {self.frame_dim} < num_actions {self.num_actions}"
            )
        if self.num_activities < 1 or self.videos_per_activity < 1:
            raise BadSpec("need at least one activity and one video per activity")
        if self.mean_segments < 2:
            raise BadSpec("videos need at least two segments on average")
        if self.noise_scale < 0:
            raise BadSpec("noise_scale must be >= 0")
        if self.prototype_distance <= 0:
            raise BadSpec("prototype_distance must be > 0")
        if not (1 <= self.min_segment_len <= self.mean_segment_len):
            raise BadSpec("need 1 <= min_segment_len <= mean_segment_len")


def _prototypes(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Mutually orthogonal action prototypes at the requested separation."""
    gauss = rng.standard_normal((spec.frame_dim, spec.frame_dim))
    q, _ = np.linalg.qr(gauss)
    basis = q[:, : spec.num_actions].T
    # Orthonormal vectors scaled by s sit at pairwise distance s*sqrt(2).
    return basis * (spec.prototype_distance / np.sqrt(2.0))


def _activity_orders(spec: SynthSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-activity action pool (ordered): overlapping windows of the vocab."""
    pool_size = max(2, round(spec.num_actions / 2))
    orders = []
    for c in range(spec.num_activities):
        start = round(c * spec.num_actions / spec.num_activities)
        pool = [(start + i) % spec.num_actions for i in range(pool_size)]
        orders.append(rng.permutation(pool))
    return orders


def _video_segments(
    order: np.ndarray, spec: SynthSpec, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """(action, duration) segments; consecutive actions never repeat."""
    n_seg = max(2, int(rng.poisson(spec.mean_segments)))
    pos = int(rng.integers(len(order)))
    segs = []
    mean_extra = max(1, spec.mean_segment_len - spec.min_segment_len)
    for _ in range(n_seg):
        duration = spec.min_segment_len + int(rng.geometric(1.0 / mean_extra))
        segs.append((int(order[pos]), duration))
        # Walk the activity's ordering, sometimes skipping one action ahead.
        step = 1 if len(order) == 2 else (1 if rng.random() < 0.75 else 2)
        pos = (pos + step) % len(order)
    return segs


def synth_generate(
    spec: SynthSpec,
) -> tuple[list[FeatureSequence], list[LabelSequence], ActionVocabulary]:
    """Generate the dataset; bit-identical for a fixed spec."""
    rng = child_rng(spec.seed, "synth")
    protos = _prototypes(spec, rng)
    orders = _activity_orders(spec, rng)
    vocab = ActionVocabulary(
        actions=tuple(f"action_{a:02d}" for a in range(spec.num_actions)),
        activities=tuple(f"activity_{c}" for c in range(spec.num_activities)),
    )

    features: list[FeatureSequence] = []
    labels: list[LabelSequence] = []
    for c in range(spec.num_activities):
        for v in range(spec.videos_per_activity):
            video_id = f"act{c}_vid{v:02d}"
            segs = _video_segments(orders[c], spec, rng)
            lab = np.concatenate(
                [np.full(dur, act, dtype=np.int64) for act, dur in segs]
            )
            t = len(lab)
            direction = rng.standard_normal(spec.frame_dim)
            direction /= np.linalg.norm(direction)
            offset = direction * (spec.video_offset_scale * spec.noise_scale)
            noise = spec.noise_scale * rng.standard_normal((t, spec.frame_dim))
            data = protos[lab] + offset[None, :] + noise
            features.append(
                FeatureSequence(
                    video_id=video_id,
                    data=data.astype(np.float32),
                    activity=c,
                )
            )
            labels.append(
                LabelSequence(
                    video_id=video_id, labels=lab, source=LabelSource.GROUND_TRUTH
                )
            )
    return features, labels, vocab
