"""Command-line entry points.

Commands: synth-gen, pretrain, icc, eval. Configuration comes from an
optional YAML file plus flag overrides (flags > file > defaults). Every run
writes its resolved config snapshot into the output directory before doing
any work. Exit codes: 0 success, 2 usage, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import checkpoint as ckpt
from .contrastive import ContrastConfig
from .data import (
    Dataset,
    DatasetSplit,
    DownsampleConfig,
    load_dataset,
    load_split_file,
    make_split,
    save_feature_sequence,
    save_labels,
    save_mapping,
    save_split_file,
)
from .errors import DataError, IccsegError
from .evaluation import linear_evaluation
from .icc import (
    OptimConfig,
    TrainConfig,
    evaluate_model,
    jsonl_logger,
    pretrain_unsupervised,
    run_icc,
)
from .network import BackboneConfig, ProbeConfig, build_backbone, count_parameters
from .rng import child_rng
from .synth import SynthSpec, synth_generate

OUTPUT_ROOT_ENV = "ICCSEG_OUTPUT_ROOT"


@dataclass(frozen=True)
class BackboneParams:
    """Backbone widths; input_dim comes from the dataset at run time."""

    base_channels: int = 32
    latent_dim_per_layer: tuple[int, ...] = (32, 32, 64, 64, 128, 128)
    conv_kernel: int = 3
    paper_scale: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "latent_dim_per_layer", tuple(self.latent_dim_per_layer)
        )

    def to_config(self, input_dim: int) -> BackboneConfig:
        if self.paper_scale:
            return BackboneConfig.paper_scale(input_dim)
        return BackboneConfig(
            input_dim=input_dim,
            base_channels=self.base_channels,
            latent_dim_per_layer=self.latent_dim_per_layer,
            conv_kernel=self.conv_kernel,
        )


@dataclass(frozen=True)
class SplitParams:
    labeled_fraction: float = 0.1
    min_labeled: int = 1
    test_fraction: float = 0.25


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, serializable to one YAML document."""

    seed: int = 7
    dataset: str | None = None
    output_dir: str | None = None
    synth: SynthSpec = SynthSpec()
    split: SplitParams = SplitParams()
    backbone: BackboneParams = BackboneParams()
    contrast: ContrastConfig = ContrastConfig(delta=0.3)
    downsample: DownsampleConfig = DownsampleConfig(w0=2, augment=True)
    train: TrainConfig = TrainConfig()
    probe: ProbeConfig = ProbeConfig()

    def to_dict(self) -> dict[str, Any]:
        def plain(value):
            if dataclasses.is_dataclass(value):
                return {
                    f.name: plain(getattr(value, f.name))
                    for f in dataclasses.fields(value)
                }
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            return value

        return plain(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        def build(klass, data):
            kwargs = {}
            for f in dataclasses.fields(klass):
                if f.name not in data:
                    continue
                value = data[f.name]
                if dataclasses.is_dataclass(f.type) or f.name in _NESTED:
                    value = build(_NESTED[f.name], value)
                elif isinstance(value, list):
                    value = tuple(value)
                kwargs[f.name] = value
            return klass(**kwargs)

        _NESTED = {
            "synth": SynthSpec,
            "split": SplitParams,
            "backbone": BackboneParams,
            "contrast": ContrastConfig,
            "downsample": DownsampleConfig,
            "train": TrainConfig,
            "probe": ProbeConfig,
            "contrast_opt": OptimConfig,
            "classify_heads": OptimConfig,
        }
        # TrainConfig nests OptimConfig under two field names.
        raw = dict(raw)
        if "train" in raw:
            train = dict(raw["train"])
            for key in ("contrast", "classify_heads"):
                if key in train:
                    train[key] = OptimConfig(**train[key])
            if "probe" in train:
                train["probe"] = ProbeConfig(**train["probe"])
            raw["train"] = TrainConfig(**train)
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in raw:
                continue
            value = raw[f.name]
            if f.name in _NESTED and isinstance(value, dict):
                value = build(_NESTED[f.name], value)
            elif isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(text) or {})


def load_config(path: str | None, overrides: dict[str, Any]) -> RunConfig:
    """File values override defaults; explicit flags override the file."""
    raw: dict[str, Any] = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return RunConfig.from_dict(raw)


def _resolve_out(out: str | None, command: str) -> Path:
    if out is not None:
        return Path(out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    return root / command


def _snapshot(config: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config.to_yaml())


def _require_dataset(parser: argparse.ArgumentParser, path: str | None) -> Dataset:
    if path is None:
        parser.error("a dataset path is required (--data or config 'dataset')")
    if not Path(path).is_dir():
        parser.error(f"dataset path does not exist: {path}")
    return load_dataset(path)


def _train_config(config: RunConfig) -> TrainConfig:
    return dataclasses.replace(
        config.train, seed=config.seed, probe=config.probe
    )


# ---------------------------------------------------------------------------
# commands


def cmd_synth_gen(args, parser) -> int:
    config = load_config(
        args.config,
        {
            "seed": args.seed,
            "synth.seed": args.seed,
            "synth.noise_scale": args.noise_scale,
            "split.labeled_fraction": args.labeled_fraction,
            "split.test_fraction": args.test_fraction,
        },
    )
    out = _resolve_out(args.out, "synth")
    out.mkdir(parents=True, exist_ok=True)
    _snapshot(config, out)

    features, labels, vocab = synth_generate(config.synth)
    (out / "features").mkdir(exist_ok=True)
    (out / "groundTruth").mkdir(exist_ok=True)
    (out / "splits").mkdir(exist_ok=True)
    save_mapping(out / "mapping.txt", vocab.actions)
    save_mapping(out / "activities.txt", vocab.activities)
    with open(out / "video_activities.txt", "w") as fh:
        for seq in features:
            fh.write(f"{seq.video_id} {vocab.activities[seq.activity]}\n")
    for seq, lab in zip(features, labels):
        save_feature_sequence(out / "features" / f"{seq.video_id}.feat", seq)
        save_labels(out / "groundTruth" / f"{seq.video_id}.txt", lab, vocab)

    # Stratified test hold-out: the same number of videos from each activity.
    rng = child_rng(config.seed, "test_split")
    test_ids: list[str] = []
    per_act = round(config.split.test_fraction * config.synth.videos_per_activity)
    for c in range(config.synth.num_activities):
        ids = sorted(s.video_id for s in features if s.activity == c)
        chosen = rng.choice(len(ids), size=min(per_act, len(ids)), replace=False)
        test_ids.extend(ids[i] for i in sorted(chosen))
    train_ids = [s.video_id for s in features if s.video_id not in set(test_ids)]
    label_map = {lab.video_id: lab for lab in labels}
    split = make_split(
        train_ids,
        config.split.labeled_fraction,
        config.seed,
        config.split.min_labeled,
        labels=label_map,
    )
    save_split_file(out / "splits" / "labeled.txt", split.labeled_ids)
    save_split_file(out / "splits" / "unlabeled.txt", split.unlabeled_ids)
    save_split_file(out / "splits" / "test.txt", sorted(test_ids))
    print(
        f"wrote {len(features)} videos ({len(split.labeled_ids)} labeled, "
        f"{len(split.unlabeled_ids)} unlabeled, {len(test_ids)} test) to {out}"
    )
    return 0


def _load_split(
    dataset_dir: Path,
    dataset: Dataset,
    config: RunConfig,
    fraction_override: float | None,
) -> DatasetSplit:
    """Use the dataset's split files unless a fraction was asked for."""
    labeled_path = dataset_dir / "splits" / "labeled.txt"
    unlabeled_path = dataset_dir / "splits" / "unlabeled.txt"
    if labeled_path.exists() and unlabeled_path.exists() and fraction_override is None:
        labeled = load_split_file(labeled_path)
        unlabeled = load_split_file(unlabeled_path)
        return DatasetSplit(labeled, unlabeled, seed=config.seed)
    return make_split(
        dataset.train_ids,
        config.split.labeled_fraction,
        config.seed,
        config.split.min_labeled,
        labels=dataset.gt_labels,
    )


def cmd_pretrain(args, parser) -> int:
    config = load_config(
        args.config,
        {
            "seed": args.seed,
            "dataset": args.data,
            "train.contrast.epochs": args.epochs,
        },
    )
    dataset = _require_dataset(parser, config.dataset)
    out = _resolve_out(args.out, "pretrain")
    out.mkdir(parents=True, exist_ok=True)
    _snapshot(config, out)
    log = jsonl_logger(out / "train_log.jsonl", echo=not args.quiet)

    input_dim = next(iter(dataset.features.values())).feature_dim
    backbone_config = config.backbone.to_config(input_dim)
    model = build_backbone(backbone_config, config.seed)
    train_config = _train_config(config)
    losses = pretrain_unsupervised(
        dataset, model, config.contrast, train_config, config.downsample, log_fn=log
    )
    ckpt.save_checkpoint(
        out / "pretrain.bin",
        model,
        seed=config.seed,
        extra={"phase": "pretrain", "train_ids": list(dataset.train_ids)},
    )
    with open(out / "pretrain_loss.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for e, loss in enumerate(losses):
            fh.write(f"{e},{loss:.6f}\n")
    print(f"pretrained {count_parameters(model)} parameters; checkpoint in {out}")
    return 0


def cmd_icc(args, parser) -> int:
    config = load_config(
        args.config,
        {
            "seed": args.seed,
            "dataset": args.data,
            "split.labeled_fraction": args.labeled_fraction,
            "train.icc_iterations": args.iterations,
        },
    )
    dataset = _require_dataset(parser, config.dataset)
    out = _resolve_out(args.out, "icc")
    out.mkdir(parents=True, exist_ok=True)
    _snapshot(config, out)
    log = jsonl_logger(out / "train_log.jsonl", echo=not args.quiet)

    dataset_dir = Path(config.dataset)
    split = _load_split(dataset_dir, dataset, config, args.labeled_fraction)
    input_dim = next(iter(dataset.features.values())).feature_dim
    backbone_config = config.backbone.to_config(input_dim)
    train_config = _train_config(config)
    history = run_icc(
        dataset,
        split,
        backbone_config,
        config.contrast,
        train_config,
        config.downsample,
        output_dir=out,
        skip_pretrain=args.skip_pretrain,
        resume=args.resume,
        log_fn=log,
    )
    print(f"finished {len(history.records)} iterations; history in {out/'history.csv'}")
    for record in history.records:
        print(
            f"  iteration {record.iteration}: MoF={record.mof:.1f} "
            f"Edit={record.edit:.1f} F1@10={record.f1[10]:.1f}"
        )
    return 0


def cmd_eval(args, parser) -> int:
    if not Path(args.checkpoint).is_file():
        parser.error(f"checkpoint does not exist: {args.checkpoint}")
    config = load_config(args.config, {"dataset": args.data, "seed": args.seed})
    dataset = _require_dataset(parser, config.dataset)
    payload = ckpt.load_checkpoint(args.checkpoint)
    model = ckpt.restore_backbone(payload)
    heads = ckpt.restore_heads(payload)

    if args.split_file:
        eval_ids: Sequence[str] = load_split_file(args.split_file)
    elif dataset.test_ids:
        eval_ids = dataset.test_ids
    else:
        eval_ids = dataset.video_ids
    train_ids = set(payload["extra"].get("labeled_ids", [])) | set(
        payload["extra"].get("unlabeled_ids", [])
    ) | set(payload["extra"].get("train_ids", []))
    overlap = train_ids & set(eval_ids)
    if overlap and not args.allow_train_eval:
        parser.error(
            f"{len(overlap)} eval videos were in the checkpoint's training set "
            "(pass --allow-train-eval to override)"
        )

    w0 = payload["extra"].get("downsample_w0", config.downsample.w0)
    ds_config = dataclasses.replace(config.downsample, w0=w0, augment=False)
    if args.probe:
        report = linear_evaluation(
            model,
            dataset,
            sorted(train_ids) if train_ids else dataset.train_ids,
            eval_ids,
            ds_config,
            config.probe,
        )
    else:
        if heads is None:
            parser.error("checkpoint has no classifier heads; use --probe")
        report = evaluate_model(model, heads, dataset, eval_ids, ds_config)

    csv_text = report.to_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(csv_text)
        (out / "per_video.csv").write_text(report.per_video_csv())
    print(csv_text, end="")
    print(report, file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iccseg",
        description="Semi-supervised temporal action segmentation "
        "(contrastive representation learning + iterative contrast-classify).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="root seed")
        p.add_argument("--quiet", action="store_true", help="suppress log echo")

    p = sub.add_parser("synth-gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--noise-scale", type=float, dest="noise_scale")
    p.add_argument("--labeled-fraction", type=float, dest="labeled_fraction")
    p.add_argument("--test-fraction", type=float, dest="test_fraction")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("pretrain", help="unsupervised representation learning")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--epochs", type=int, help="override contrast epochs")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("icc", help="full iterative contrast-classify run")
    common(p)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--iterations", type=int, help="number of iterations")
    p.add_argument("--labeled-fraction", type=float, dest="labeled_fraction")
    p.add_argument("--skip-pretrain", action="store_true",
                   help="skip the initial cluster-label representation learning")
    p.add_argument("--resume", action="store_true",
                   help="continue from the latest checkpoint in --out")
    p.set_defaults(func=cmd_icc)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--split-file", help="file listing video ids to evaluate")
    p.add_argument("--probe", action="store_true",
                   help="linear-probe the representation instead of the heads")
    p.add_argument("--allow-train-eval", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (OSError, IccsegError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
