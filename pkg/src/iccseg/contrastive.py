"""Temporal-proximity sampling, batch clustering, and contrastive losses.

Anchors are sampled frames. Two sampled frames are positives when they come
from same-activity videos, carry the same (cluster / ground-truth / pseudo)
label, and sit within the temporal proximity delta of each other in
normalized time. Frames from different activities are always negatives;
same-activity frames with mismatched labels are negatives; same-label pairs
beyond delta belong to neither set. Without activity labels every video
counts as the same activity, which removes the cross-activity negatives and
the video-level loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import torch

from .data import FeatureSequence, LabelSequence, LabelSource
from .errors import NoValidAnchors, TooFewFrames

DEFAULT_TAU = 0.1


@dataclass(frozen=True)
class ContrastConfig:
    """Sampling and loss hyperparameters.

    epsilon defaults to 1/(3K); num_clusters defaults to twice the number
    of actions (resolved where the vocabulary is known).
    """

    partitions_per_video: int = 8  # K; 2K frames are sampled per video
    epsilon: float | None = None
    delta: float = 0.5
    tau: float = DEFAULT_TAU
    num_clusters: int | None = None
    use_video_level: bool = True
    use_activity_negatives: bool = True

    def __post_init__(self):
        if self.partitions_per_video < 1:
            raise ValueError("need at least one partition per video")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 1.0 / (3 * self.partitions_per_video))
        if not (0 < self.epsilon < 1.0 / self.partitions_per_video):
            raise ValueError(
                f"epsilon must lie in (0, 1/K), got {self.epsilon} with "
                f"K={self.partitions_per_video}"
            )
        if not (0 < self.delta <= 1):
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    def resolve_num_clusters(self, num_actions: int) -> int:
        return self.num_clusters if self.num_clusters is not None else 2 * num_actions


@dataclass(frozen=True)
class SampleIndex:
    """One sampled frame: normalized time plus its nearest integer frame."""

    video: str
    sample: int
    time: float
    frame: int


def _nearest_frame(time: float, video_len: int) -> int:
    if video_len == 1:
        return 0
    return int(np.floor(time * (video_len - 1) + 0.5))


def sample_frames(
    video_id: str,
    video_len: int,
    config: ContrastConfig,
    rng: np.random.Generator,
) -> list[SampleIndex]:
    """Draw 2K sampled frames from one video.

    The first K land one in each equal partition of [0, 1]; the second K sit
    a random offset in (0, epsilon] (random sign) from their partners,
    clamped back into [0, 1].
    """
    k = config.partitions_per_video
    base_times = (np.arange(k) + rng.random(k)) / k
    signs = rng.choice((-1.0, 1.0), size=k)
    magnitudes = config.epsilon * (1.0 - rng.random(k))  # in (0, epsilon]
    partner_times = np.clip(base_times + signs * magnitudes, 0.0, 1.0)
    times = np.concatenate([base_times, partner_times])
    return [
        SampleIndex(
            video=video_id,
            sample=i,
            time=float(t),
            frame=_nearest_frame(float(t), video_len),
        )
        for i, t in enumerate(times)
    ]


# ---------------------------------------------------------------------------
# mini-batch k-means on input features


def _kmeans_pp_init(
    x: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(len(x))]
    closest = np.full(len(x), np.inf)
    for c in range(1, k):
        dist = np.sum((x - centers[c - 1]) ** 2, axis=1)
        closest = np.minimum(closest, dist)
        total = closest.sum()
        if total <= 0:
            centers[c] = x[rng.integers(len(x))]
            continue
        centers[c] = x[rng.choice(len(x), p=closest / total)]
    return centers


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    return labels, np.maximum(d2[np.arange(len(x)), labels], 0.0)


def kmeans(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    rel_tol: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd k-means with k-means++ seeding.

    Stops after max_iter rounds or when the relative inertia improvement
    drops below rel_tol. Empty clusters are reseeded to the point farthest
    from its assigned center. Returns (labels, centers, inertia).
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < k:
        raise TooFewFrames(f"{len(x)} samples for {k} clusters")
    centers = _kmeans_pp_init(x, k, rng)
    prev_inertia = np.inf
    labels, point_d2 = _assign(x, centers)
    for _ in range(max_iter):
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = x[mask].mean(axis=0)
            else:
                centers[c] = x[np.argmax(point_d2)]
                labels, point_d2 = _assign(x, centers)
        labels, point_d2 = _assign(x, centers)
        inertia = float(point_d2.sum())
        if prev_inertia - inertia < rel_tol * max(prev_inertia, 1e-12):
            break
        prev_inertia = inertia
    labels, point_d2 = _assign(x, centers)
    return labels, centers, float(point_d2.sum())


def cluster_batch(
    inputs: Sequence[FeatureSequence],
    k: int,
    rng: np.random.Generator,
) -> dict[str, LabelSequence]:
    """k-means over the pooled frames of a whole mini-batch.

    Clustering is dataset-level within the batch: frames of every video are
    pooled before fitting, then the cluster ids are mapped back per video.
    """
    pooled = np.concatenate([seq.data for seq in inputs], axis=0)
    labels, _, _ = kmeans(pooled, k, rng)
    out: dict[str, LabelSequence] = {}
    offset = 0
    for seq in inputs:
        t = seq.num_frames
        out[seq.video_id] = LabelSequence(
            video_id=seq.video_id,
            labels=labels[offset : offset + t].astype(np.int64),
            source=LabelSource.CLUSTER,
        )
        offset += t
    return out


# ---------------------------------------------------------------------------
# positive / negative set construction


@dataclass
class ContrastSets:
    """Sampled anchors plus pairwise positive/negative membership masks."""

    anchors: list[SampleIndex]
    pos_mask: np.ndarray  # (S, S) bool; pos_mask[a, j] => j in P(a)
    neg_mask: np.ndarray
    anchor_labels: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    anchor_activities: np.ndarray = field(
        default_factory=lambda: np.empty(0, np.int64)
    )

    def positives(self, a: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.pos_mask[a]).tolist())

    def negatives(self, a: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.neg_mask[a]).tolist())

    def valid_anchor_mask(self) -> np.ndarray:
        """Anchors that carry at least one positive and one negative."""
        return self.pos_mask.any(axis=1) & self.neg_mask.any(axis=1)

    def num_skipped(self) -> int:
        return len(self.anchors) - int(self.valid_anchor_mask().sum())

    def check_invariants(self) -> None:
        assert not (self.pos_mask & self.neg_mask).any(), "P and N overlap"
        diag = np.arange(len(self.anchors))
        assert not self.pos_mask[diag, diag].any(), "anchor in own P"
        assert not self.neg_mask[diag, diag].any(), "anchor in own N"


def build_sets(
    samples: Mapping[str, Sequence[SampleIndex]],
    labels: Mapping[str, LabelSequence],
    activities: Mapping[str, int | None],
    config: ContrastConfig,
) -> ContrastSets:
    """Construct positive/negative sets over every sampled frame.

    Every sample acts as an anchor. With activities missing (or activity
    negatives disabled) all videos count as one activity.
    """
    anchors: list[SampleIndex] = []
    lab: list[int] = []
    act: list[int] = []
    for vid, samp in samples.items():
        seq = labels[vid]
        for s in samp:
            anchors.append(s)
            lab.append(int(seq.labels[s.frame]))
            a = activities.get(vid)
            act.append(-1 if (a is None or not config.use_activity_negatives) else a)
    lab_arr = np.asarray(lab, dtype=np.int64)
    act_arr = np.asarray(act, dtype=np.int64)
    times = np.asarray([s.time for s in anchors])

    same_act = act_arr[:, None] == act_arr[None, :]
    # -1 marks "no activity": those videos compare equal to everything.
    no_act = (act_arr[:, None] == -1) | (act_arr[None, :] == -1)
    same_act |= no_act
    same_lab = lab_arr[:, None] == lab_arr[None, :]
    close = np.abs(times[:, None] - times[None, :]) <= config.delta
    not_self = ~np.eye(len(anchors), dtype=bool)

    pos = same_act & same_lab & close & not_self
    neg = (~same_act | (same_act & ~same_lab)) & not_self
    return ContrastSets(
        anchors=anchors,
        pos_mask=pos,
        neg_mask=neg,
        anchor_labels=lab_arr,
        anchor_activities=act_arr,
    )


# ---------------------------------------------------------------------------
# losses


def _cosine_matrix(x: torch.Tensor) -> torch.Tensor:
    xn = x / x.norm(dim=1, keepdim=True).clamp_min(1e-12)
    return xn @ xn.T


def frame_contrast_loss(
    features: Mapping[str, torch.Tensor],
    sets: ContrastSets,
    tau: float = DEFAULT_TAU,
) -> torch.Tensor:
    """Frame-level contrastive loss.

    For each anchor a and positive j, the positive's probability is
    exp(cos(f_a, f_j)/tau) over itself plus the sum over a's negatives; the
    loss is the mean negative log over all (anchor, positive) pairs. Anchors
    without positives or without negatives contribute nothing.
    """
    valid = sets.valid_anchor_mask()
    n_pairs = int(sets.pos_mask[valid].sum())
    if n_pairs == 0:
        raise NoValidAnchors(
            f"all {len(sets.anchors)} anchors skipped (no positive+negative pairs)"
        )
    x = torch.stack([features[s.video][s.frame] for s in sets.anchors])
    scores = _cosine_matrix(x)[torch.from_numpy(valid)] / tau
    # log p(a, j) = s_aj - log(exp(s_aj) + sum over negatives of a), computed
    # in log space so extreme temperatures cannot overflow. Valid anchors all
    # have at least one negative, keeping the logsumexp finite.
    neg_scores = scores.masked_fill(
        torch.from_numpy(~sets.neg_mask[valid]), float("-inf")
    )
    log_neg_denom = torch.logsumexp(neg_scores, dim=1, keepdim=True)
    log_p = scores - torch.logaddexp(scores, log_neg_denom.expand_as(scores))
    return -log_p[torch.from_numpy(sets.pos_mask[valid])].sum() / n_pairs


def video_contrast_loss(
    summaries: Sequence[torch.Tensor],
    activities: Sequence[int],
    tau: float = DEFAULT_TAU,
) -> tuple[torch.Tensor, bool]:
    """Video-level contrastive loss over max-pooled summary vectors.

    Same-activity videos are mutual positives; everything else is negative.
    Returns (loss, skipped): with fewer than two distinct activities or no
    positive pair at all there is nothing to contrast and the loss is zero.
    """
    acts = np.asarray(activities, dtype=np.int64)
    n = len(acts)
    dtype = summaries[0].dtype if n else torch.float32
    if n < 2 or len(set(acts.tolist())) < 2:
        return torch.zeros((), dtype=dtype), True
    same = (acts[:, None] == acts[None, :]) & ~np.eye(n, dtype=bool)
    diff = acts[:, None] != acts[None, :]
    if not same.any():
        return torch.zeros((), dtype=dtype), True
    x = torch.stack(list(summaries))
    scores = _cosine_matrix(x) / tau
    neg_scores = scores.masked_fill(torch.from_numpy(~diff), float("-inf"))
    log_neg_denom = torch.logsumexp(neg_scores, dim=1, keepdim=True)
    log_p = scores - torch.logaddexp(scores, log_neg_denom.expand_as(scores))
    pos = torch.from_numpy(same)
    return -log_p[pos].sum() / int(pos.sum()), False


def total_contrast_loss(
    frame_loss: torch.Tensor, video_loss: torch.Tensor
) -> torch.Tensor:
    """Combined loss: unweighted sum of the frame- and video-level terms."""
    return frame_loss + video_loss
