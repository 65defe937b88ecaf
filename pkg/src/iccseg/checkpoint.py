"""Versioned checkpoint container with atomic writes."""
from __future__ import annotations

import os
from dataclasses import asdict
from pathlib import Path
from typing import Any

import torch

from .errors import CheckpointVersionMismatch
from .network import (
    Backbone,
    BackboneConfig,
    ClassifierHeads,
    LinearProbe,
)

FORMAT_TAG = "iccseg-checkpoint-v1"


def save_checkpoint(
    path: str | Path,
    backbone: Backbone,
    heads: ClassifierHeads | None = None,
    probe: LinearProbe | None = None,
    seed: int | None = None,
    extra: dict[str, Any] | None = None,
) -> None:
    """Write a self-describing checkpoint via a temp file + atomic rename."""
    path = Path(path)
    payload: dict[str, Any] = {
        "format": FORMAT_TAG,
        "backbone_config": asdict(backbone.config),
        "backbone_state": backbone.state_dict(),
        "seed": seed,
        "extra": extra or {},
    }
    if heads is not None:
        payload["heads_state"] = heads.state_dict()
        payload["num_actions"] = heads.num_actions
    if probe is not None:
        payload["probe_state"] = probe.state_dict()
    tmp = path.with_name(path.name + ".tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> dict[str, Any]:
    """Read a checkpoint payload, rejecting unknown format tags."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    tag = payload.get("format")
    if tag != FORMAT_TAG:
        raise CheckpointVersionMismatch(
            f"{path}: format {tag!r}, expected {FORMAT_TAG!r}"
        )
    return payload


def restore_backbone(payload: dict[str, Any]) -> Backbone:
    config = BackboneConfig(**payload["backbone_config"])
    model = Backbone(config)
    model.load_state_dict(payload["backbone_state"])
    return model


def restore_heads(payload: dict[str, Any]) -> ClassifierHeads | None:
    if "heads_state" not in payload:
        return None
    config = BackboneConfig(**payload["backbone_config"])
    heads = ClassifierHeads(config.latent_dim_per_layer, payload["num_actions"])
    heads.load_state_dict(payload["heads_state"])
    return heads


def restore_probe(payload: dict[str, Any]) -> LinearProbe | None:
    if "probe_state" not in payload:
        return None
    weight = payload["probe_state"]["linear.weight"]
    probe = LinearProbe(weight.shape[1], weight.shape[0])
    probe.load_state_dict(payload["probe_state"])
    return probe
