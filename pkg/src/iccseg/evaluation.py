"""Linear-evaluation protocol for frozen representations.

A single linear classifier is fit with cross-entropy on the frame-wise
representation of the training videos (backbone untouched), then scored on
the test videos at their original temporal resolution. Probing the raw
input features instead of the learned representation gives the input
baseline the learned features are compared against.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .data import Dataset, DownsampleConfig, downsample
from .metrics import MetricReport, evaluate_videos
from .network import (
    Backbone,
    LinearProbe,
    ProbeConfig,
    forward_features,
    multires_feature,
    probe_probabilities,
    probe_train,
    upsample_linear,
)


def _video_representation(
    model: Backbone | None,
    dataset: Dataset,
    vid: str,
    ds_config: DownsampleConfig,
    representation: str,
    upsample_mode: str,
    normalize_blocks: bool,
) -> tuple[torch.Tensor, np.ndarray]:
    """Frozen per-frame features plus aligned gt labels for one video."""
    feats, labels = downsample(
        dataset.features[vid], dataset.gt_labels[vid], ds_config.w0
    )
    if representation == "raw":
        return torch.from_numpy(feats.data), labels.labels
    if representation != "multires":
        raise ValueError(f"unknown representation {representation!r}")
    assert model is not None
    with torch.no_grad():
        dec = forward_features(model, feats)
        mrf = multires_feature(
            dec, mode=upsample_mode, normalize_blocks=normalize_blocks
        )
    return mrf.valid, labels.labels


def linear_evaluation(
    model: Backbone | None,
    dataset: Dataset,
    train_ids: Sequence[str],
    test_ids: Sequence[str],
    ds_config: DownsampleConfig,
    probe_config: ProbeConfig = ProbeConfig(),
    representation: str = "multires",
    upsample_mode: str = "nearest",
    normalize_blocks: bool = True,
    aggregation: str = "frame_pooled",
) -> MetricReport:
    """Probe a frozen representation and report segmentation metrics.

    representation="multires" probes the concatenated decoder feature;
    "raw" probes the (downsampled) input features directly and needs no
    model. Probe training always uses ground-truth labels.
    """
    from .data import LabelSequence, LabelSource  # narrow import for typing

    if model is not None:
        model.eval()
    feats = []
    labels = []
    for vid in sorted(train_ids):
        x, y = _video_representation(
            model, dataset, vid, ds_config, representation, upsample_mode,
            normalize_blocks,
        )
        feats.append(x)
        labels.append(
            LabelSequence(video_id=vid, labels=y, source=LabelSource.GROUND_TRUTH)
        )
    probe = probe_train(feats, labels, dataset.vocab.num_actions, probe_config)

    preds = {}
    gts = {}
    for vid in sorted(test_ids):
        x, _ = _video_representation(
            model, dataset, vid, ds_config, representation, upsample_mode,
            normalize_blocks,
        )
        probs = probe_probabilities(probe, x)
        full_len = dataset.features[vid].num_frames
        if probs.shape[0] != full_len:
            probs = upsample_linear(probs, full_len)
        preds[vid] = np.argmax(probs.double().numpy(), axis=1)
        gts[vid] = dataset.gt_labels[vid].labels
    return evaluate_videos(preds, gts, aggregation)


def probe_for_dataset(
    model: Backbone,
    dataset: Dataset,
    train_ids: Sequence[str],
    ds_config: DownsampleConfig,
    probe_config: ProbeConfig = ProbeConfig(),
    upsample_mode: str = "nearest",
) -> LinearProbe:
    """Fit and return the probe itself (for checkpointing)."""
    from .data import LabelSequence, LabelSource

    model.eval()
    feats = []
    labels = []
    for vid in sorted(train_ids):
        x, y = _video_representation(
            model, dataset, vid, ds_config, "multires", upsample_mode, True
        )
        feats.append(x)
        labels.append(
            LabelSequence(video_id=vid, labels=y, source=LabelSource.GROUND_TRUTH)
        )
    return probe_train(feats, labels, dataset.vocab.num_actions, probe_config)
