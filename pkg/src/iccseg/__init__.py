"""Semi-supervised temporal action segmentation.

Unsupervised multi-resolution contrastive representation learning on top of
an encoder-decoder TCN, plus the iterative contrast-classify loop that
bootstraps frame-wise classifiers from a handful of labeled videos.
"""

__version__ = "0.1.0"

from .contrastive import ContrastConfig
from .data import (
    ActionVocabulary,
    Dataset,
    DatasetSplit,
    DownsampleConfig,
    FeatureSequence,
    LabelSequence,
    LabelSource,
)
from .icc import IccHistory, LabelStore, OptimConfig, TrainConfig, run_icc
from .metrics import MetricReport, edit_score, f1_at, mof, segments
from .network import BackboneConfig, ProbeConfig
from .synth import SynthSpec, synth_generate

__all__ = [
    "ActionVocabulary",
    "BackboneConfig",
    "ContrastConfig",
    "Dataset",
    "DatasetSplit",
    "DownsampleConfig",
    "FeatureSequence",
    "IccHistory",
    "LabelSequence",
    "LabelSource",
    "LabelStore",
    "MetricReport",
    "OptimConfig",
    "ProbeConfig",
    "SynthSpec",
    "TrainConfig",
    "edit_score",
    "f1_at",
    "mof",
    "run_icc",
    "segments",
    "synth_generate",
]
