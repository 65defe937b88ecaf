"""Frame-wise and segmental segmentation metrics.

MoF is plain frame accuracy. Edit is the Levenshtein distance between the
run-length-encoded label strings, normalized by the longer one and rescaled
to [0, 100]. F1@k matches predicted segments to same-label ground-truth
segments greedily in temporal order: a prediction becomes a true positive
when some not-yet-matched ground-truth segment of the same label reaches
frame IoU >= k/100 (picking the highest-IoU candidate, earliest on ties).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import EmptySequence, LengthMismatch


class Segment(NamedTuple):
    label: int
    start: int  # inclusive
    end: int  # exclusive


def segments(labels: Sequence[int] | np.ndarray) -> list[Segment]:
    """Run-length encode a label sequence into maximal constant segments."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise EmptySequence("cannot segment an empty sequence")
    boundaries = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [labels.size]))
    return [Segment(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def mof(pred: Sequence[int] | np.ndarray, gt: Sequence[int] | np.ndarray) -> float:
    """Percentage of frames whose predicted label matches ground truth."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"pred has {pred.shape}, gt has {gt.shape}")
    if pred.size == 0:
        raise EmptySequence("cannot score empty sequences")
    return 100.0 * float(np.mean(pred == gt))


def _levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cost = 0 if x == y else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def edit_score(
    pred: Sequence[int] | np.ndarray, gt: Sequence[int] | np.ndarray
) -> float:
    """Segmental edit score in [0, 100]."""
    pred_labels = [s.label for s in segments(pred)]
    gt_labels = [s.label for s in segments(gt)]
    dist = _levenshtein(pred_labels, gt_labels)
    score = 100.0 * (1.0 - dist / max(len(pred_labels), len(gt_labels)))
    return max(0.0, score)


def _iou(a: Segment, b: Segment) -> float:
    inter = max(0, min(a.end, b.end) - max(a.start, b.start))
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union


def f1_at(
    pred: Sequence[int] | np.ndarray,
    gt: Sequence[int] | np.ndarray,
    iou_threshold: float,
) -> tuple[float, float, float]:
    """Segmental (precision, recall, F1), all in [0, 100], at an IoU cut."""
    if not (0.0 < iou_threshold <= 100.0):
        raise ValueError(f"IoU threshold must be in (0, 100], got {iou_threshold}")
    pred_segs = segments(pred)
    gt_segs = segments(gt)
    matched = [False] * len(gt_segs)
    tp = 0
    for p in pred_segs:
        best_iou = -1.0
        best_j = -1
        for j, g in enumerate(gt_segs):
            if matched[j] or g.label != p.label:
                continue
            iou = _iou(p, g)
            if iou >= iou_threshold / 100.0 and iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            tp += 1
    fp = len(pred_segs) - tp
    fn = len(gt_segs) - tp
    precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


F1_THRESHOLDS = (10, 25, 50)


@dataclass
class MetricReport:
    """Dataset-level scores plus the per-video breakdown they came from.

    aggregation="frame_pooled" pools MoF over all frames (total correct /
    total frames) while Edit/F1 are per-video means; "video_mean" averages
    every metric per video.
    """

    mof: float
    edit: float
    f1: dict[int, float]
    per_video: dict[str, dict[str, float]] = field(default_factory=dict)
    aggregation: str = "frame_pooled"

    CSV_COLUMNS = ("mof", "edit", "f1_10", "f1_25", "f1_50")

    def csv_row(self) -> dict[str, float]:
        row = {"mof": self.mof, "edit": self.edit}
        for k in F1_THRESHOLDS:
            row[f"f1_{k}"] = self.f1[k]
        return row

    def to_csv(self) -> str:
        row = self.csv_row()
        header = ",".join(self.CSV_COLUMNS)
        values = ",".join(f"{row[c]:.4f}" for c in self.CSV_COLUMNS)
        return f"{header}\n{values}\n"

    def per_video_csv(self) -> str:
        cols = ("video_id",) + self.CSV_COLUMNS
        lines = [",".join(cols)]
        for vid in sorted(self.per_video):
            scores = self.per_video[vid]
            lines.append(
                ",".join([vid] + [f"{scores[c]:.4f}" for c in self.CSV_COLUMNS])
            )
        return "\n".join(lines) + "\n"

    def __str__(self) -> str:
        f1s = " ".join(f"F1@{k}={self.f1[k]:.1f}" for k in F1_THRESHOLDS)
        return f"MoF={self.mof:.1f} Edit={self.edit:.1f} {f1s}"


def evaluate_videos(
    predictions: Mapping[str, np.ndarray],
    ground_truth: Mapping[str, np.ndarray],
    aggregation: str = "frame_pooled",
) -> MetricReport:
    """Score per-video predictions against ground truth and aggregate."""
    if aggregation not in ("frame_pooled", "video_mean"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    if not predictions:
        raise EmptySequence("no videos to evaluate")
    per_video: dict[str, dict[str, float]] = {}
    correct = 0
    total = 0
    for vid, pred in predictions.items():
        gt = ground_truth[vid]
        scores = {"mof": mof(pred, gt), "edit": edit_score(pred, gt)}
        for k in F1_THRESHOLDS:
            scores[f"f1_{k}"] = f1_at(pred, gt, k)[2]
        per_video[vid] = scores
        correct += int(np.sum(np.asarray(pred) == np.asarray(gt)))
        total += len(gt)

    def video_mean(key: str) -> float:
        return float(np.mean([per_video[v][key] for v in per_video]))

    pooled_mof = 100.0 * correct / total
    return MetricReport(
        mof=pooled_mof if aggregation == "frame_pooled" else video_mean("mof"),
        edit=video_mean("edit"),
        f1={k: video_mean(f"f1_{k}") for k in F1_THRESHOLDS},
        per_video=per_video,
        aggregation=aggregation,
    )


def summarize_reports(reports: Sequence[MetricReport]) -> dict[str, str]:
    """Mean +/- std of each score across runs (e.g. across seeds)."""
    out = {}
    for col in MetricReport.CSV_COLUMNS:
        values = [r.csv_row()[col] for r in reports]
        out[col] = f"{np.mean(values):.1f} +/- {np.std(values):.1f}"
    return out
