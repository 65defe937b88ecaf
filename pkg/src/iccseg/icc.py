"""The iterative contrast-classify training loop.

One iteration is a contrast phase (representation update on all training
videos) followed by a classify phase (heads + light backbone fine-tune on
the labeled videos only). Iteration 1's contrast phase clusters raw inputs
per mini-batch; later contrast phases reuse the label store, which holds
ground truth for labeled videos and the latest pseudo-labels for the rest.
Test metrics are recorded after every classify phase.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch

from . import checkpoint as ckpt
from .contrastive import (
    ContrastConfig,
    build_sets,
    cluster_batch,
    frame_contrast_loss,
    sample_frames,
    total_contrast_loss,
    video_contrast_loss,
)
from .data import (
    Dataset,
    DatasetSplit,
    DownsampleConfig,
    FeatureSequence,
    LabelSequence,
    LabelSource,
    downsample,
    sample_augment_window,
)
from .errors import EmptyLabeledSet, MissingLabels, NoValidAnchors
from .metrics import F1_THRESHOLDS, MetricReport, evaluate_videos
from .network import (
    Backbone,
    BackboneConfig,
    ClassifierHeads,
    ProbeConfig,
    build_backbone,
    build_heads,
    ensemble_probabilities,
    forward_features,
    multires_feature,
    predict_ensemble,
    probe_probabilities,
    probe_train,
    upsample_linear,
    video_summary,
)
from .rng import child_rng

LogFn = Callable[[dict], None]


@dataclass(frozen=True)
class OptimConfig:
    lr: float
    weight_decay: float
    epochs: int
    batch_size: int

    def __post_init__(self):
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("rates must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class TrainConfig:
    contrast: OptimConfig = OptimConfig(
        lr=1e-3, weight_decay=1e-3, epochs=30, batch_size=16
    )
    classify_heads: OptimConfig = OptimConfig(
        lr=1e-2, weight_decay=1e-3, epochs=60, batch_size=8
    )
    classify_backbone_lr: float = 1e-5
    icc_iterations: int = 4
    contrast_lr_decay_after_first: float = 0.1
    # Length of the pseudo-label contrast phases (iterations >= 2); None
    # reuses contrast.epochs. Stored pseudo-labels repeat their errors every
    # epoch, so these phases want to be shorter than the initial one.
    contrast_epochs_after_first: int | None = 10
    seed: int = 0
    run_probe: bool = False
    probe: ProbeConfig = ProbeConfig()
    upsample_mode: str = "nearest"

    def __post_init__(self):
        if self.icc_iterations < 1:
            raise ValueError("need at least one iteration")
        if self.classify_backbone_lr >= self.classify_heads.lr:
            raise ValueError(
                "backbone fine-tune lr must be well below the heads lr "
                f"({self.classify_backbone_lr} vs {self.classify_heads.lr})"
            )


class LabelStore:
    """Per-video labels; ground-truth entries can never be overwritten."""

    def __init__(self, ground_truth: Mapping[str, LabelSequence]):
        self._labels: dict[str, LabelSequence] = {}
        self.labeled_ids = frozenset(ground_truth)
        for vid, seq in ground_truth.items():
            if seq.source != LabelSource.GROUND_TRUTH:
                raise ValueError(f"{vid!r}: labeled store entries must be ground truth")
            self._labels[vid] = seq

    def assign(self, seq: LabelSequence) -> None:
        if seq.video_id in self.labeled_ids:
            raise ValueError(
                f"{seq.video_id!r} carries ground truth; refusing to overwrite"
            )
        self._labels[seq.video_id] = seq

    def get(self, video_id: str) -> LabelSequence:
        if video_id not in self._labels:
            raise MissingLabels(f"no labels stored for {video_id!r}")
        return self._labels[video_id]

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._labels

    def source_of(self, video_id: str) -> LabelSource:
        return self.get(video_id).source

    def cluster_csv(self) -> str:
        """Diagnostic dump of cluster assignments (video_id, frame, cluster)."""
        lines = ["video_id,frame,cluster"]
        for vid in sorted(self._labels):
            seq = self._labels[vid]
            if seq.source != LabelSource.CLUSTER:
                continue
            lines.extend(
                f"{vid},{t},{int(c)}" for t, c in enumerate(seq.labels)
            )
        return "\n".join(lines) + "\n"


@dataclass
class IterationRecord:
    iteration: int
    contrast_losses: list[float]
    classify_losses: list[float]
    mof: float
    edit: float
    f1: dict[int, float]
    probe_mof: float | None
    checkpoint_path: str | None
    wall_seconds: float


@dataclass
class IccHistory:
    records: list[IterationRecord] = field(default_factory=list)

    CSV_COLUMNS = (
        "iteration",
        "mof",
        "edit",
        "f1_10",
        "f1_25",
        "f1_50",
        "probe_mof",
        "wall_seconds",
    )

    def to_csv(self) -> str:
        lines = [",".join(self.CSV_COLUMNS)]
        for r in self.records:
            probe = "" if r.probe_mof is None else f"{r.probe_mof:.4f}"
            lines.append(
                f"{r.iteration},{r.mof:.4f},{r.edit:.4f},"
                f"{r.f1[10]:.4f},{r.f1[25]:.4f},{r.f1[50]:.4f},"
                f"{probe},{r.wall_seconds:.3f}"
            )
        return "\n".join(lines) + "\n"


def _log(log_fn: LogFn | None, payload: dict) -> None:
    if log_fn is not None:
        log_fn(payload)


def jsonl_logger(path: str | Path | None, echo: bool = False) -> LogFn:
    def log(payload: dict) -> None:
        line = json.dumps(payload, sort_keys=True)
        if path is not None:
            with open(path, "a") as fh:
                fh.write(line + "\n")
        if echo:
            print(line)

    return log


def _batches(
    video_ids: Sequence[str], batch_size: int, rng: np.random.Generator
) -> Iterable[list[str]]:
    order = list(rng.permutation(np.asarray(video_ids, dtype=object)))
    for i in range(0, len(order), batch_size):
        yield [str(v) for v in order[i : i + batch_size]]


def _contrast_batch_loss(
    model: Backbone,
    inputs: list[FeatureSequence],
    labels: Mapping[str, LabelSequence],
    contrast_config: ContrastConfig,
    sample_rng: np.random.Generator,
    upsample_mode: str,
) -> tuple[torch.Tensor, int]:
    """Combined contrastive loss of one prepared (downsampled) batch."""
    samples = {}
    features = {}
    summaries = []
    activities = []
    has_activities = all(seq.activity is not None for seq in inputs)
    for seq in inputs:
        dec = forward_features(model, seq)
        mrf = multires_feature(dec, mode=upsample_mode)
        features[seq.video_id] = mrf.valid
        samples[seq.video_id] = sample_frames(
            seq.video_id, seq.num_frames, contrast_config, sample_rng
        )
        if has_activities:
            summaries.append(video_summary(mrf))
            activities.append(seq.activity)
    activity_map = {seq.video_id: seq.activity for seq in inputs}
    sets = build_sets(samples, labels, activity_map, contrast_config)
    skipped = sets.num_skipped()
    try:
        loss = frame_contrast_loss(features, sets, contrast_config.tau)
    except NoValidAnchors:
        loss = torch.zeros(())
        skipped = len(sets.anchors)
    if contrast_config.use_video_level and has_activities and len(inputs) > 1:
        vloss, _ = video_contrast_loss(summaries, activities, contrast_config.tau)
        loss = total_contrast_loss(loss, vloss)
    return loss, skipped


def _run_contrast_epochs(
    model: Backbone,
    dataset: Dataset,
    video_ids: Sequence[str],
    label_fn: Callable[..., Mapping[str, LabelSequence]],
    contrast_config: ContrastConfig,
    optim_config: OptimConfig,
    ds_config: DownsampleConfig,
    seed: int,
    phase: str,
    upsample_mode: str,
    lr: float | None = None,
    log_fn: LogFn | None = None,
) -> list[float]:
    """Shared epoch loop for the cluster-label and stored-label contrast phases.

    ``label_fn(batch_inputs, windows, epoch, batch_index)`` must return frame
    labels aligned with the downsampled inputs it receives; ``windows`` maps
    each video id to the pooling window that produced its input.
    """
    opt = torch.optim.AdamW(
        model.parameters(),
        lr=optim_config.lr if lr is None else lr,
        weight_decay=optim_config.weight_decay,
    )
    model.train()
    epoch_losses: list[float] = []
    for epoch in range(optim_config.epochs):
        batch_rng = child_rng(seed, f"{phase}:batch:{epoch}")
        losses = []
        for b, batch_ids in enumerate(_batches(video_ids, optim_config.batch_size, batch_rng)):
            aug_rng = child_rng(seed, f"{phase}:aug:{epoch}:{b}")
            sample_rng = child_rng(seed, f"{phase}:sample:{epoch}:{b}")
            inputs = []
            windows = {}
            for vid in batch_ids:
                w = sample_augment_window(ds_config, aug_rng)
                feats, _ = downsample(dataset.features[vid], None, w)
                inputs.append(feats)
                windows[vid] = w
            labels = label_fn(inputs, windows, epoch, b)
            loss, _ = _contrast_batch_loss(
                model, inputs, labels, contrast_config, sample_rng, upsample_mode
            )
            if loss.requires_grad:
                opt.zero_grad()
                loss.backward()
                opt.step()
            losses.append(float(loss.detach()))
        mean = float(np.mean(losses)) if losses else 0.0
        epoch_losses.append(mean)
        _log(log_fn, {"phase": phase, "epoch": epoch, "loss": round(mean, 6)})
    return epoch_losses


def pretrain_unsupervised(
    dataset: Dataset,
    model: Backbone,
    contrast_config: ContrastConfig,
    train_config: TrainConfig,
    ds_config: DownsampleConfig,
    store: LabelStore | None = None,
    log_fn: LogFn | None = None,
    phase: str = "contrast:1",
) -> list[float]:
    """Representation learning from per-batch cluster labels (no gt used)."""
    video_ids = sorted(dataset.train_ids)
    k = contrast_config.resolve_num_clusters(dataset.vocab.num_actions)
    seed = train_config.seed

    def cluster_labels(inputs, windows, epoch, b):
        rng = child_rng(seed, f"{phase}:cluster:{epoch}:{b}")
        assignments = cluster_batch(inputs, k, rng)
        if store is not None:
            for seq in inputs:
                if seq.video_id in store.labeled_ids:
                    continue
                full_len = dataset.features[seq.video_id].num_frames
                # Nearest-repeat back to the original temporal resolution so
                # the store stays length-aligned with each video.
                idx = np.minimum(
                    np.arange(full_len) * seq.num_frames // full_len,
                    seq.num_frames - 1,
                )
                store.assign(
                    LabelSequence(
                        video_id=seq.video_id,
                        labels=assignments[seq.video_id].labels[idx],
                        source=LabelSource.CLUSTER,
                    )
                )
        return assignments

    return _run_contrast_epochs(
        model,
        dataset,
        video_ids,
        cluster_labels,
        contrast_config,
        train_config.contrast,
        ds_config,
        seed,
        phase,
        train_config.upsample_mode,
        log_fn=log_fn,
    )


def contrast_step(
    model: Backbone,
    dataset: Dataset,
    store: LabelStore,
    contrast_config: ContrastConfig,
    train_config: TrainConfig,
    ds_config: DownsampleConfig,
    iteration: int,
    log_fn: LogFn | None = None,
) -> list[float]:
    """Representation update driven by stored (pseudo + ground-truth) labels.

    From the second iteration on, the learning rate drops by the configured
    factor relative to the first contrast phase.
    """
    video_ids = sorted(dataset.train_ids)
    lr = train_config.contrast.lr
    optim_config = train_config.contrast
    if iteration >= 2:
        lr *= train_config.contrast_lr_decay_after_first
        if train_config.contrast_epochs_after_first is not None:
            optim_config = dataclasses.replace(
                optim_config, epochs=train_config.contrast_epochs_after_first
            )

    def stored_labels(inputs, windows, epoch, b):
        out = {}
        for seq in inputs:
            full = store.get(seq.video_id)
            _, ds_labels = downsample(
                dataset.features[seq.video_id], full, windows[seq.video_id]
            )
            out[seq.video_id] = ds_labels
        return out

    return _run_contrast_epochs(
        model,
        dataset,
        video_ids,
        stored_labels,
        contrast_config,
        optim_config,
        ds_config,
        train_config.seed,
        f"contrast:{iteration}",
        train_config.upsample_mode,
        lr=lr,
        log_fn=log_fn,
    )


def classify_step(
    model: Backbone,
    heads: ClassifierHeads,
    dataset: Dataset,
    labeled_ids: Sequence[str],
    contrast_config: ContrastConfig,
    train_config: TrainConfig,
    ds_config: DownsampleConfig,
    iteration: int = 1,
    log_fn: LogFn | None = None,
) -> list[float]:
    """Train ensemble heads (and lightly fine-tune the backbone) on labels.

    Loss per batch: frame-wise cross-entropy of the ensemble prediction plus
    the contrastive loss with ground-truth labels standing in for clusters.
    """
    if not labeled_ids:
        raise EmptyLabeledSet("classify step needs at least one labeled video")
    video_ids = sorted(labeled_ids)
    cfg = train_config.classify_heads
    opt = torch.optim.AdamW(
        [
            {"params": heads.parameters(), "lr": cfg.lr},
            {"params": model.parameters(), "lr": train_config.classify_backbone_lr},
        ],
        weight_decay=cfg.weight_decay,
    )
    model.train()
    heads.train()
    seed = train_config.seed
    phase = f"classify:{iteration}"
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        batch_rng = child_rng(seed, f"{phase}:batch:{epoch}")
        losses = []
        for b, batch_ids in enumerate(_batches(video_ids, cfg.batch_size, batch_rng)):
            aug_rng = child_rng(seed, f"{phase}:aug:{epoch}:{b}")
            sample_rng = child_rng(seed, f"{phase}:sample:{epoch}:{b}")
            inputs = []
            label_map = {}
            for vid in batch_ids:
                w = sample_augment_window(ds_config, aug_rng)
                feats, labels = downsample(
                    dataset.features[vid], dataset.gt_labels[vid], w
                )
                inputs.append(feats)
                label_map[vid] = labels

            ce_terms = []
            samples = {}
            features = {}
            summaries = []
            activities = []
            has_activities = all(seq.activity is not None for seq in inputs)
            for seq in inputs:
                dec = forward_features(model, seq)
                probs = ensemble_probabilities(dec, heads, seq.num_frames)
                target = torch.from_numpy(label_map[seq.video_id].labels)
                ce_terms.append(
                    -torch.log(probs[torch.arange(len(target)), target]).sum()
                )
                mrf = multires_feature(dec, mode=train_config.upsample_mode)
                features[seq.video_id] = mrf.valid
                samples[seq.video_id] = sample_frames(
                    seq.video_id, seq.num_frames, contrast_config, sample_rng
                )
                if has_activities:
                    summaries.append(video_summary(mrf))
                    activities.append(seq.activity)
            total_frames = sum(len(label_map[s.video_id].labels) for s in inputs)
            ce = torch.stack(ce_terms).sum() / total_frames

            activity_map = {seq.video_id: seq.activity for seq in inputs}
            sets = build_sets(samples, label_map, activity_map, contrast_config)
            try:
                con = frame_contrast_loss(features, sets, contrast_config.tau)
            except NoValidAnchors:
                con = torch.zeros(())
            if contrast_config.use_video_level and has_activities and len(inputs) > 1:
                vloss, _ = video_contrast_loss(
                    summaries, activities, contrast_config.tau
                )
                con = total_contrast_loss(con, vloss)

            loss = ce + con
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        mean = float(np.mean(losses)) if losses else 0.0
        epoch_losses.append(mean)
        _log(log_fn, {"phase": phase, "epoch": epoch, "loss": round(mean, 6)})
    return epoch_losses


def generate_pseudo_labels(
    model: Backbone,
    heads: ClassifierHeads,
    dataset: Dataset,
    video_ids: Sequence[str],
    store: LabelStore,
    ds_config: DownsampleConfig,
) -> list[str]:
    """Predict hard frame labels for unlabeled videos and store them.

    Videos whose store entry is ground truth are skipped untouched. Returns
    the ids actually updated.
    """
    model.eval()
    heads.eval()
    updated = []
    for vid in sorted(video_ids):
        if vid in store.labeled_ids:
            continue
        feats, _ = downsample(dataset.features[vid], None, ds_config.w0)
        with torch.no_grad():
            dec = forward_features(model, feats)
            _, pseudo = predict_ensemble(
                dec, heads, dataset.features[vid].num_frames, video_id=vid
            )
        store.assign(pseudo)
        updated.append(vid)
    return updated


def predict_videos(
    model: Backbone,
    heads: ClassifierHeads,
    dataset: Dataset,
    video_ids: Sequence[str],
    ds_config: DownsampleConfig,
) -> dict[str, np.ndarray]:
    """Frame predictions at each video's original temporal resolution."""
    model.eval()
    heads.eval()
    preds = {}
    for vid in video_ids:
        feats, _ = downsample(dataset.features[vid], None, ds_config.w0)
        with torch.no_grad():
            dec = forward_features(model, feats)
            _, seq = predict_ensemble(
                dec, heads, dataset.features[vid].num_frames, video_id=vid
            )
        preds[vid] = seq.labels
    return preds


def evaluate_model(
    model: Backbone,
    heads: ClassifierHeads,
    dataset: Dataset,
    video_ids: Sequence[str],
    ds_config: DownsampleConfig,
    aggregation: str = "frame_pooled",
) -> MetricReport:
    preds = predict_videos(model, heads, dataset, video_ids, ds_config)
    gts = {vid: dataset.gt_labels[vid].labels for vid in video_ids}
    return evaluate_videos(preds, gts, aggregation)


def representation_probe_mof(
    model: Backbone,
    dataset: Dataset,
    train_ids: Sequence[str],
    test_ids: Sequence[str],
    ds_config: DownsampleConfig,
    probe_config: ProbeConfig,
    upsample_mode: str = "nearest",
) -> float:
    """Linear-probe MoF of the current representation on the test split."""
    from .evaluation import linear_evaluation  # local import; avoids cycle

    report = linear_evaluation(
        model,
        dataset,
        train_ids,
        test_ids,
        ds_config,
        probe_config,
        upsample_mode=upsample_mode,
    )
    return report.mof


def run_icc(
    dataset: Dataset,
    split: DatasetSplit,
    backbone_config: BackboneConfig,
    contrast_config: ContrastConfig,
    train_config: TrainConfig,
    ds_config: DownsampleConfig,
    test_ids: Sequence[str] | None = None,
    output_dir: str | Path | None = None,
    skip_pretrain: bool = False,
    resume: bool = False,
    log_fn: LogFn | None = None,
    aggregation: str = "frame_pooled",
) -> IccHistory:
    """Full training loop; metrics are recorded after every classify phase.

    ``skip_pretrain`` drops the initial cluster-label representation
    learning (the first iteration then starts from random weights). With
    ``resume`` and an ``output_dir`` holding earlier per-iteration
    checkpoints, training continues after the last completed iteration.
    """
    test_ids = tuple(test_ids if test_ids is not None else dataset.test_ids)
    train_ids = set(split.train_ids)
    if set(test_ids) & train_ids:
        raise ValueError("test videos overlap the training split")

    seed = train_config.seed
    model = build_backbone(backbone_config, seed)
    store = LabelStore(
        {vid: dataset.gt_labels[vid] for vid in split.labeled_ids}
    )
    history = IccHistory()
    heads: ClassifierHeads | None = None

    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        (out / "ckpt").mkdir(parents=True, exist_ok=True)

    start_iteration = 1
    if resume and out is not None:
        done = sorted(
            int(p.stem.split("_")[1]) for p in (out / "ckpt").glob("icc_*.bin")
        )
        if done:
            payload = ckpt.load_checkpoint(out / "ckpt" / f"icc_{done[-1]}.bin")
            model = ckpt.restore_backbone(payload)
            heads = ckpt.restore_heads(payload)
            for row in payload["extra"]["history"]:
                history.records.append(
                    IterationRecord(
                        iteration=row["iteration"],
                        contrast_losses=row["contrast_losses"],
                        classify_losses=row["classify_losses"],
                        mof=row["mof"],
                        edit=row["edit"],
                        f1={k: row[f"f1_{k}"] for k in F1_THRESHOLDS},
                        probe_mof=row["probe_mof"],
                        checkpoint_path=row["checkpoint_path"],
                        wall_seconds=row["wall_seconds"],
                    )
                )
            start_iteration = done[-1] + 1
            if start_iteration <= train_config.icc_iterations and heads is not None:
                generate_pseudo_labels(
                    model, heads, dataset, split.unlabeled_ids, store, ds_config
                )

    for iteration in range(start_iteration, train_config.icc_iterations + 1):
        t0 = time.perf_counter()
        if iteration == 1:
            contrast_losses = []
            if not skip_pretrain:
                contrast_losses = pretrain_unsupervised(
                    dataset, model, contrast_config, train_config, ds_config,
                    store=store, log_fn=log_fn,
                )
        else:
            contrast_losses = contrast_step(
                model, dataset, store, contrast_config, train_config, ds_config,
                iteration, log_fn=log_fn,
            )

        heads = build_heads(
            backbone_config,
            dataset.vocab.num_actions,
            seed,
            stream=f"heads_init:{iteration}",
        )
        classify_losses = classify_step(
            model, heads, dataset, split.labeled_ids, contrast_config,
            train_config, ds_config, iteration, log_fn=log_fn,
        )

        report = evaluate_model(model, heads, dataset, test_ids, ds_config, aggregation)
        probe_mof = None
        if train_config.run_probe:
            probe_mof = representation_probe_mof(
                model, dataset, sorted(train_ids), test_ids, ds_config,
                train_config.probe, train_config.upsample_mode,
            )
        wall = time.perf_counter() - t0

        path = out / "ckpt" / f"icc_{iteration}.bin" if out is not None else None
        record = IterationRecord(
            iteration=iteration,
            contrast_losses=contrast_losses,
            classify_losses=classify_losses,
            mof=report.mof,
            edit=report.edit,
            f1=dict(report.f1),
            probe_mof=probe_mof,
            checkpoint_path=str(path) if path is not None else None,
            wall_seconds=wall,
        )
        history.records.append(record)

        if out is not None and path is not None:
            rows = [
                {
                    "iteration": r.iteration,
                    "contrast_losses": r.contrast_losses,
                    "classify_losses": r.classify_losses,
                    "mof": r.mof,
                    "edit": r.edit,
                    **{f"f1_{k}": r.f1[k] for k in F1_THRESHOLDS},
                    "probe_mof": r.probe_mof,
                    "checkpoint_path": r.checkpoint_path,
                    "wall_seconds": r.wall_seconds,
                }
                for r in history.records
            ]
            ckpt.save_checkpoint(
                path,
                model,
                heads=heads,
                seed=seed,
                extra={
                    "iteration": iteration,
                    "history": rows,
                    "labeled_ids": list(split.labeled_ids),
                    "unlabeled_ids": list(split.unlabeled_ids),
                    "test_ids": list(test_ids),
                    "downsample_w0": ds_config.w0,
                },
            )
            (out / "history.csv").write_text(history.to_csv())

        _log(
            log_fn,
            {
                "phase": f"evaluate:{iteration}",
                "epoch": 0,
                "loss": 0.0,
                "mof": round(report.mof, 4),
                "edit": round(report.edit, 4),
            },
        )

        if iteration < train_config.icc_iterations:
            generate_pseudo_labels(
                model, heads, dataset, split.unlabeled_ids, store, ds_config
            )

    return history


def train_supervised(
    dataset: Dataset,
    labeled_ids: Sequence[str],
    backbone_config: BackboneConfig,
    train_config: TrainConfig,
    ds_config: DownsampleConfig,
    log_fn: LogFn | None = None,
) -> tuple[Backbone, ClassifierHeads]:
    """Plain supervised baseline: cross-entropy only, labeled videos only.

    Uses the contrast-phase learning rate for the backbone so the comparison
    against the semi-supervised loop is a fair from-scratch baseline.
    """
    if not labeled_ids:
        raise EmptyLabeledSet("supervised baseline needs labeled videos")
    seed = train_config.seed
    model = build_backbone(backbone_config, seed)
    heads = build_heads(
        backbone_config, dataset.vocab.num_actions, seed, stream="heads_init:supervised"
    )
    cfg = train_config.classify_heads
    opt = torch.optim.AdamW(
        [
            {"params": heads.parameters(), "lr": cfg.lr},
            {"params": model.parameters(), "lr": train_config.contrast.lr},
        ],
        weight_decay=cfg.weight_decay,
    )
    model.train()
    heads.train()
    video_ids = sorted(labeled_ids)
    epoch_losses = []
    for epoch in range(cfg.epochs):
        batch_rng = child_rng(seed, f"supervised:batch:{epoch}")
        losses = []
        for b, batch_ids in enumerate(_batches(video_ids, cfg.batch_size, batch_rng)):
            aug_rng = child_rng(seed, f"supervised:aug:{epoch}:{b}")
            ce_terms = []
            n_frames = 0
            for vid in batch_ids:
                w = sample_augment_window(ds_config, aug_rng)
                feats, labels = downsample(
                    dataset.features[vid], dataset.gt_labels[vid], w
                )
                dec = forward_features(model, feats)
                probs = ensemble_probabilities(dec, heads, feats.num_frames)
                target = torch.from_numpy(labels.labels)
                ce_terms.append(
                    -torch.log(probs[torch.arange(len(target)), target]).sum()
                )
                n_frames += len(target)
            loss = torch.stack(ce_terms).sum() / n_frames
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        mean = float(np.mean(losses)) if losses else 0.0
        epoch_losses.append(mean)
        _log(log_fn, {"phase": "supervised", "epoch": epoch, "loss": round(mean, 6)})
    return model, heads
