"""Encoder-decoder temporal convolutional backbone and heads.

The encoder halves the temporal resolution five times (max-pool with the
partial last window kept), so decoder layer u emits features of length
ceil(T/2^(6-u)) for u = 1..6. Inputs shorter than 32 frames are right-padded
by edge replication; the original length is carried along so padded frames
can be excluded from losses, metrics, and pooling.

The contrastive representation concatenates all six decoder outputs after
temporal upsampling and per-frame, per-block unit normalization. That
ordering is what makes the cosine similarity of the concatenated feature
the plain average of the six per-block cosines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .data import FeatureSequence, LabelSequence, LabelSource
from .errors import ShapeError
from .rng import torch_generator

MIN_INPUT_FRAMES = 32  # five halvings need 2^5 frames
NUM_DECODER_LAYERS = 6


@dataclass(frozen=True)
class BackboneConfig:
    input_dim: int
    base_channels: int = 32
    latent_dim_per_layer: tuple[int, ...] = (32, 32, 64, 64, 128, 128)
    conv_kernel: int = 3
    num_decoder_layers: int = NUM_DECODER_LAYERS

    def __post_init__(self):
        if self.num_decoder_layers != NUM_DECODER_LAYERS:
            raise ValueError(
                f"decoder depth is fixed at {NUM_DECODER_LAYERS}; "
                f"got {self.num_decoder_layers}"
            )
        if len(self.latent_dim_per_layer) != NUM_DECODER_LAYERS:
            raise ValueError("latent_dim_per_layer needs one entry per decoder layer")
        if self.input_dim < 1 or self.base_channels < 1:
            raise ValueError("input_dim and base_channels must be positive")
        object.__setattr__(
            self, "latent_dim_per_layer", tuple(self.latent_dim_per_layer)
        )

    @property
    def encoder_channels(self) -> tuple[int, ...]:
        """Widths of the five pooled encoder stages."""
        b = self.base_channels
        return (b, 2 * b, 2 * b, 4 * b, 4 * b)

    @property
    def feature_dim(self) -> int:
        """Dimension of the concatenated multi-resolution feature."""
        return sum(self.latent_dim_per_layer)

    @classmethod
    def paper_scale(cls, input_dim: int = 2048) -> "BackboneConfig":
        """Full-scale preset (~4.07M backbone parameters at input_dim=2048)."""
        return cls(
            input_dim=input_dim,
            base_channels=120,
            latent_dim_per_layer=(112, 112, 192, 192, 240, 240),
        )


def _norm(channels: int) -> nn.Module:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels)


def _conv_block(in_ch: int, out_ch: int, kernel: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv1d(in_ch, out_ch, kernel, padding=kernel // 2),
        _norm(out_ch),
        nn.ReLU(),
    )


class Backbone(nn.Module):
    """U-Net style 1-D TCN exposing all six decoder layer outputs."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        enc = config.encoder_channels
        dims = config.latent_dim_per_layer
        k = config.conv_kernel

        self.stem = _conv_block(config.input_dim, b, k)
        self.encoder = nn.ModuleList()
        prev = b
        for ch in enc:
            self.encoder.append(_conv_block(prev, ch, k))
            prev = ch
        self.pool = nn.MaxPool1d(2, stride=2, ceil_mode=True)
        self.bottleneck = _conv_block(enc[-1], enc[-1], k)

        # Decoder layer 1 reads the bottleneck; layers 2..6 read the previous
        # decoder output upsampled to the matching encoder stage, concatenated
        # with that stage's skip features (enc[3], enc[2], enc[1], enc[0], stem).
        skip_channels = (enc[3], enc[2], enc[1], enc[0], b)
        self.decoder = nn.ModuleList([_conv_block(enc[-1], dims[0], k)])
        for u in range(1, NUM_DECODER_LAYERS):
            in_ch = dims[u - 1] + skip_channels[u - 1]
            self.decoder.append(_conv_block(in_ch, dims[u], k))

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """x: (1, F, T) -> list of six (1, d_u, ceil(T/2^(6-u))) tensors."""
        skips = []
        h = self.stem(x)
        skips.append(h)
        for block in self.encoder:
            h = self.pool(h)
            h = block(h)
            skips.append(h)
        h = self.bottleneck(h)

        zs = []
        h = self.decoder[0](h)
        zs.append(h)
        # skips[5-u] is the encoder stage whose length matches decoder layer u+1.
        for u in range(1, NUM_DECODER_LAYERS):
            skip = skips[NUM_DECODER_LAYERS - 1 - u]
            h = nn.functional.interpolate(
                h, size=skip.shape[-1], mode="linear", align_corners=False
            )
            h = self.decoder[u](torch.cat([h, skip], dim=1))
            zs.append(h)
        return zs


@dataclass
class DecoderFeatures:
    """Six time-major decoder outputs plus the pre-padding length."""

    z: list[torch.Tensor]  # z[u-1]: (ceil(total_len / 2^(6-u)), d_u)
    valid_len: int
    total_len: int

    @property
    def layer_lengths(self) -> tuple[int, ...]:
        return tuple(t.shape[0] for t in self.z)


def forward_features(model: Backbone, features: FeatureSequence) -> DecoderFeatures:
    """Run the backbone on one video, padding short inputs by edge replication."""
    if features.feature_dim != model.config.input_dim:
        raise ShapeError(
            f"{features.video_id!r}: feature dim {features.feature_dim} != "
            f"model input dim {model.config.input_dim}"
        )
    t_in = features.num_frames
    x = torch.from_numpy(np.ascontiguousarray(features.data.T)).unsqueeze(0)
    x = x.to(next(model.parameters()).dtype)
    pad = max(0, MIN_INPUT_FRAMES - t_in)
    if pad:
        x = nn.functional.pad(x, (0, pad), mode="replicate")
    zs = model(x)
    return DecoderFeatures(
        z=[z.squeeze(0).transpose(0, 1) for z in zs],
        valid_len=t_in,
        total_len=t_in + pad,
    )


# ---------------------------------------------------------------------------
# temporal upsampling


def upsample_nearest(x: torch.Tensor, target_len: int) -> torch.Tensor:
    """(T, d) -> (target_len, d); output frame t copies floor(t*T/target)."""
    src = torch.arange(target_len, device=x.device) * x.shape[0] // target_len
    return x[src]


def upsample_linear(x: torch.Tensor, target_len: int) -> torch.Tensor:
    """(T, d) -> (target_len, d) two-point interpolation, endpoints aligned."""
    t = x.shape[0]
    if t == 1:
        return x.expand(target_len, x.shape[1])
    if target_len == 1:
        return x[:1]
    pos = torch.linspace(0, t - 1, target_len, dtype=x.dtype, device=x.device)
    lo = pos.floor().long().clamp(max=t - 2)
    w = (pos - lo).unsqueeze(1)
    return x[lo] * (1 - w) + x[lo + 1] * w


_UPSAMPLE = {"nearest": upsample_nearest, "linear": upsample_linear}
NORM_FLOOR = 1e-8


@dataclass
class MultiResFeature:
    """Concatenation of the six upsampled, block-normalized decoder features."""

    f: torch.Tensor  # (total_len, sum of block dims)
    block_dims: tuple[int, ...]
    upsample_mode: str
    valid_len: int

    @property
    def valid(self) -> torch.Tensor:
        return self.f[: self.valid_len]

    def block(self, u: int) -> torch.Tensor:
        """Slice of f coming from decoder layer u (1-based)."""
        start = sum(self.block_dims[: u - 1])
        return self.f[:, start : start + self.block_dims[u - 1]]


def multires_feature(
    dec: DecoderFeatures,
    target_len: int | None = None,
    mode: str = "nearest",
    normalize_blocks: bool = True,
) -> MultiResFeature:
    """Build the frame-wise contrastive representation.

    Each decoder output is upsampled to target_len, unit-normalized per
    frame within its block (norm floored additively at 1e-8), and the six
    blocks are concatenated. ``normalize_blocks=False`` keeps the raw
    upsampled blocks — the alternative construction whose cosine weights
    blocks by their magnitudes instead of equally.
    """
    if mode not in _UPSAMPLE:
        raise ValueError(f"unknown upsample mode {mode!r}")
    if target_len is None:
        target_len = dec.total_len
    up = _UPSAMPLE[mode]
    blocks = []
    for z in dec.z:
        zu = up(z, target_len)
        if normalize_blocks:
            zu = zu / (zu.norm(dim=1, keepdim=True) + NORM_FLOOR)
        blocks.append(zu)
    return MultiResFeature(
        f=torch.cat(blocks, dim=1),
        block_dims=tuple(z.shape[1] for z in dec.z),
        upsample_mode=mode,
        valid_len=min(dec.valid_len, target_len),
    )


def video_summary(feature: MultiResFeature) -> torch.Tensor:
    """Per-dimension max over the valid (unpadded) frames."""
    return feature.valid.max(dim=0).values


# ---------------------------------------------------------------------------
# classifier heads and ensemble prediction


class ClassifierHeads(nn.Module):
    """One linear map per decoder layer plus convex ensemble weights."""

    def __init__(
        self,
        latent_dims: Sequence[int],
        num_actions: int,
        alpha: Sequence[float] | None = None,
    ):
        super().__init__()
        if alpha is None:
            alpha = [1.0 / len(latent_dims)] * len(latent_dims)
        alpha_t = torch.as_tensor(alpha, dtype=torch.float32)
        if alpha_t.numel() != len(latent_dims) or (alpha_t < 0).any():
            raise ValueError("alpha needs one non-negative weight per layer")
        if abs(float(alpha_t.sum()) - 1.0) > 1e-6:
            raise ValueError(f"alpha must sum to 1, got {float(alpha_t.sum())}")
        self.linears = nn.ModuleList(
            nn.Linear(d, num_actions) for d in latent_dims
        )
        self.register_buffer("alpha", alpha_t)
        self.num_actions = num_actions


def ensemble_probabilities(
    dec: DecoderFeatures, heads: ClassifierHeads, target_len: int
) -> torch.Tensor:
    """Frame-wise class probabilities (target_len, A); rows sum to one.

    Per-layer softmax outputs are linearly upsampled in time and averaged
    with the ensemble weights. Padded frames are dropped before resampling
    to the requested length.
    """
    padded = dec.total_len != dec.valid_len
    acc: torch.Tensor | None = None
    for z, linear, weight in zip(dec.z, heads.linears, heads.alpha):
        p = torch.softmax(linear(z), dim=-1)
        if padded:
            p = upsample_linear(p, dec.total_len)[: dec.valid_len]
            if dec.valid_len != target_len:
                p = upsample_linear(p, target_len)
        else:
            p = upsample_linear(p, target_len)
        acc = weight * p if acc is None else acc + weight * p
    assert acc is not None
    return acc


def predict_ensemble(
    dec: DecoderFeatures,
    heads: ClassifierHeads,
    target_len: int,
    video_id: str = "",
) -> tuple[np.ndarray, LabelSequence]:
    """Hard frame predictions; argmax ties resolve to the smallest index."""
    with torch.no_grad():
        probs = ensemble_probabilities(dec, heads, target_len)
    probs_np = probs.cpu().double().numpy()
    labels = np.argmax(probs_np, axis=1).astype(np.int64)
    return probs_np, LabelSequence(
        video_id=video_id, labels=labels, source=LabelSource.PSEUDO
    )


# ---------------------------------------------------------------------------
# linear probe


class LinearProbe(nn.Module):
    """Single affine map from representation space to action logits."""

    def __init__(self, feature_dim: int, num_actions: int):
        super().__init__()
        self.linear = nn.Linear(feature_dim, num_actions)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(x)


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 0.05
    weight_decay: float = 0.0
    epochs: int = 200
    seed: int = 0


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Reinitialize conv/linear weights from the given generator.

    Matches the usual fan-in uniform scheme but draws from an explicit
    generator so that model init is a pure function of its seed stream.
    """
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv1d, nn.Linear)):
                fan_in = m.weight.shape[1] * (
                    m.weight.shape[2] if m.weight.dim() == 3 else 1
                )
                bound = 1.0 / math.sqrt(fan_in)
                m.weight.uniform_(-bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=generator)
            elif isinstance(m, nn.GroupNorm):
                m.weight.fill_(1.0)
                m.bias.fill_(0.0)


def build_backbone(config: BackboneConfig, seed: int) -> Backbone:
    model = Backbone(config)
    init_parameters(model, torch_generator(seed, "backbone_init"))
    return model


def build_heads(
    config: BackboneConfig,
    num_actions: int,
    seed: int,
    alpha: Sequence[float] | None = None,
    stream: str = "heads_init",
) -> ClassifierHeads:
    heads = ClassifierHeads(config.latent_dim_per_layer, num_actions, alpha)
    init_parameters(heads, torch_generator(seed, stream))
    return heads


def probe_train(
    features: Sequence[torch.Tensor | np.ndarray],
    labels: Sequence[LabelSequence],
    num_actions: int,
    config: ProbeConfig = ProbeConfig(),
) -> LinearProbe:
    """Fit the linear probe by full-batch cross-entropy descent.

    ``features`` are frozen per-video representations (T_i, d); gradients
    never reach whatever produced them.
    """
    xs = []
    ys = []
    for feat, lab in zip(features, labels):
        if torch.is_tensor(feat):
            x = feat.detach().clone()
        else:
            x = torch.from_numpy(np.asarray(feat))
        if x.shape[0] != len(lab):
            raise ValueError(
                f"{lab.video_id!r}: {x.shape[0]} feature frames vs {len(lab)} labels"
            )
        xs.append(x.float())
        ys.append(torch.from_numpy(lab.labels))
    x_all = torch.cat(xs)
    y_all = torch.cat(ys)
    probe = LinearProbe(x_all.shape[1], num_actions)
    init_parameters(probe, torch_generator(config.seed, "probe_init"))
    opt = torch.optim.AdamW(
        probe.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(config.epochs):
        opt.zero_grad()
        loss = loss_fn(probe(x_all), y_all)
        loss.backward()
        opt.step()
    return probe


def probe_probabilities(probe: LinearProbe, feature: torch.Tensor) -> torch.Tensor:
    with torch.no_grad():
        return torch.softmax(probe(feature.float()), dim=-1)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
