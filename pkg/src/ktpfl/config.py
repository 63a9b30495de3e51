"""Experiment configuration: dataclasses plus a strict YAML loader.

Grammar: a YAML mapping whose top-level keys and nested sections mirror the
dataclasses below field for field. Unknown keys are rejected; every error
names the dotted key path and, when the key is present in the file, its line.
See ``configs/`` for complete examples.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .errors import ConfigError
from .fedsim import ALGORITHMS


@dataclass
class SyntheticSpec:
    num_classes: int = 10
    samples_per_class: int = 200
    d_in: int = 20
    cluster_spread: float = 1.0
    seed: Optional[int] = None  # None: derived from the run seed


@dataclass
class DatasetConfig:
    kind: str = "synthetic"  # synthetic | idx
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    images: Optional[str] = None
    labels: Optional[str] = None
    num_classes: Optional[int] = None  # idx only; inferred from labels when unset


@dataclass
class PublicConfig:
    source: str = "reuse"  # reuse | synthetic | idx
    size: int = 3000  # |D_r| used per round
    pool_size: Optional[int] = None  # samples set aside for public use; defaults to size
    labeled: bool = True
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    images: Optional[str] = None
    labels: Optional[str] = None


@dataclass
class PartitionConfig:
    kind: str = "label_skew"  # label_skew | dirichlet
    labels_per_client: int = 2
    alpha: float = 0.5


@dataclass
class ModelGroup:
    count: int
    hidden: list[int] = field(default_factory=list)


@dataclass
class TrainConfig:
    local_epochs: int = 20
    distill_steps: int = 1
    temperature: float = 1.0
    lam: float = 1.0
    rho: float = 0.5
    lr_local: float = 0.01
    lr_distill: float = 0.01
    lr_coeff: float = 0.01
    top_k: int = 5
    batch_size: int = 128
    public_batch_size: int = 256
    sample_rate: float = 1.0
    finetune_epochs: Optional[int] = None
    kl_eps: float = 1e-12


@dataclass
class Flags:
    normalize_coefficients: bool = True
    public_resample_each_round: bool = False
    snapshot_coefficients: bool = False


@dataclass
class ExperimentConfig:
    algorithm: str
    model_groups: list[ModelGroup]
    num_clients: int = 20
    rounds: int = 30
    seed: int = 0
    workers: int = 1
    output_dir: str = "runs/default"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    public: PublicConfig = field(default_factory=PublicConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    flags: Flags = field(default_factory=Flags)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def task_fingerprint(self) -> str:
        """Identifies the learning task (data, public set, partition), independent of algorithm and seed."""
        d = self.to_dict()
        task = {k: d[k] for k in ("dataset", "public", "partition", "num_clients")}
        for section in (task["dataset"]["synthetic"], task["public"]["synthetic"]):
            section.pop("seed")
        return hashlib.sha256(json.dumps(task, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------- loading

def _line_index(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line of the key in the YAML source."""
    lines: dict[str, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                sub = f"{path}.{key_node.value}" if path else str(key_node.value)
                lines[sub] = key_node.start_mark.line + 1
                walk(value_node, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                sub = f"{path}[{i}]"
                lines[sub] = item.start_mark.line + 1
                walk(item, sub)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {exc}", line=None if mark is None else mark.line + 1) from None
    if root is not None:
        walk(root, "")
    return lines


class _Builder:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def error(self, message: str, path: str) -> ConfigError:
        line = self.lines.get(path)
        if line is None and "." in path:
            line = self.lines.get(path.rsplit(".", 1)[0])
        return ConfigError(message, key=path, line=line)

    def build(self, tp, value, path: str):
        origin = typing.get_origin(tp)
        if origin is Union:
            args = [a for a in typing.get_args(tp) if a is not type(None)]
            if value is None:
                return None
            return self.build(args[0], value, path)
        if dataclasses.is_dataclass(tp):
            return self.build_dataclass(tp, value, path)
        if origin is list:
            (item_tp,) = typing.get_args(tp)
            if not isinstance(value, list):
                raise self.error(f"expected a list, got {type(value).__name__}", path)
            return [self.build(item_tp, v, f"{path}[{i}]") for i, v in enumerate(value)]
        if tp is bool:
            if not isinstance(value, bool):
                raise self.error(f"expected true/false, got {value!r}", path)
            return value
        if tp is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise self.error(f"expected an integer, got {value!r}", path)
            return value
        if tp is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise self.error(f"expected a number, got {value!r}", path)
            return float(value)
        if tp is str:
            if not isinstance(value, str):
                raise self.error(f"expected a string, got {value!r}", path)
            return value
        raise TypeError(f"unsupported config type {tp}")

    def build_dataclass(self, cls, value, path: str):
        if not isinstance(value, dict):
            raise self.error(f"expected a section (mapping), got {type(value).__name__}", path or "<root>")
        hints = typing.get_type_hints(cls)
        names = {f.name for f in dataclasses.fields(cls)}
        for key in value:
            if key not in names:
                sub = f"{path}.{key}" if path else str(key)
                raise self.error(f"unknown key {key!r}", sub)
        kwargs = {}
        for f in dataclasses.fields(cls):
            sub = f"{path}.{f.name}" if path else f.name
            if f.name in value:
                kwargs[f.name] = self.build(hints[f.name], value[f.name], sub)
            elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise self.error(f"missing required key {f.name!r}", path if path else f.name)
        return cls(**kwargs)


def _check(cond: bool, builder: _Builder, path: str, message: str) -> None:
    if not cond:
        raise builder.error(message, path)


def validate(cfg: ExperimentConfig, lines: Optional[dict[str, int]] = None) -> ExperimentConfig:
    b = _Builder(lines or {})
    t = cfg.train
    _check(cfg.algorithm in ALGORITHMS, b, "algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    _check(cfg.num_clients >= 1, b, "num_clients", "must be >= 1")
    _check(cfg.rounds >= 1, b, "rounds", "must be >= 1")
    _check(cfg.workers >= 1, b, "workers", "must be >= 1")
    _check(len(cfg.model_groups) >= 1, b, "model_groups", "needs at least one group")
    for i, g in enumerate(cfg.model_groups):
        _check(g.count >= 1, b, f"model_groups[{i}].count", "must be >= 1")
        _check(all(w >= 1 for w in g.hidden), b, f"model_groups[{i}].hidden", "widths must be >= 1")
    total = sum(g.count for g in cfg.model_groups)
    _check(total == cfg.num_clients, b, "model_groups",
           f"group counts sum to {total} but num_clients is {cfg.num_clients}")
    if cfg.algorithm in ("fedavg", "ktpfl_homogeneous"):
        _check(len(cfg.model_groups) == 1, b, "model_groups", f"{cfg.algorithm} needs exactly one model group")

    d = cfg.dataset
    _check(d.kind in ("synthetic", "idx"), b, "dataset.kind", "must be 'synthetic' or 'idx'")
    if d.kind == "idx":
        _check(bool(d.images) and bool(d.labels), b, "dataset", "idx datasets need 'images' and 'labels' paths")
    _check_synthetic(d.synthetic, b, "dataset.synthetic")

    p = cfg.public
    _check(p.source in ("reuse", "synthetic", "idx"), b, "public.source", "must be 'reuse', 'synthetic' or 'idx'")
    _check(p.size >= 0, b, "public.size", "must be >= 0")
    if p.pool_size is not None:
        _check(p.pool_size >= p.size, b, "public.pool_size", "must be >= public.size")
    if p.source == "idx":
        _check(bool(p.images) and bool(p.labels), b, "public", "idx public sources need 'images' and 'labels' paths")
    _check_synthetic(p.synthetic, b, "public.synthetic")

    q = cfg.partition
    _check(q.kind in ("label_skew", "dirichlet"), b, "partition.kind", "must be 'label_skew' or 'dirichlet'")
    _check(q.labels_per_client >= 1, b, "partition.labels_per_client", "must be >= 1")
    _check(q.alpha > 0, b, "partition.alpha", "must be > 0")

    _check(t.local_epochs >= 1, b, "train.local_epochs", "must be >= 1")
    _check(t.distill_steps >= 0, b, "train.distill_steps", "must be >= 0")
    _check(t.temperature > 0, b, "train.temperature", "must be > 0")
    _check(t.lam >= 0, b, "train.lam", "must be >= 0")
    _check(t.rho >= 0, b, "train.rho", "regularization parameter must be >= 0 (larger than 0 in the method)")
    _check(t.lr_local > 0, b, "train.lr_local", "must be > 0")
    _check(t.lr_distill > 0, b, "train.lr_distill", "must be > 0")
    _check(t.lr_coeff >= 0, b, "train.lr_coeff", "must be >= 0")
    _check(t.top_k >= 1, b, "train.top_k", "must be >= 1")
    if cfg.algorithm == "topkpfl":
        _check(t.top_k <= cfg.num_clients, b, "train.top_k", f"must lie in [1, {cfg.num_clients}]")
    _check(t.batch_size >= 1, b, "train.batch_size", "must be >= 1")
    _check(t.public_batch_size >= 1, b, "train.public_batch_size", "must be >= 1")
    _check(0 < t.sample_rate <= 1, b, "train.sample_rate", "must lie in (0, 1]")
    if t.finetune_epochs is not None:
        _check(t.finetune_epochs >= 0, b, "train.finetune_epochs", "must be >= 0")
    _check(t.kl_eps > 0, b, "train.kl_eps", "must be > 0")
    return cfg


def _check_synthetic(s: SyntheticSpec, b: _Builder, path: str) -> None:
    _check(s.num_classes >= 1, b, f"{path}.num_classes", "must be >= 1")
    _check(s.samples_per_class >= 1, b, f"{path}.samples_per_class", "must be >= 1")
    _check(s.d_in >= 1, b, f"{path}.d_in", "must be >= 1")
    _check(s.cluster_spread >= 0, b, f"{path}.cluster_spread", "must be >= 0")


def parse_config_text(text: str) -> ExperimentConfig:
    lines = _line_index(text)
    raw = yaml.safe_load(text)
    if raw is None:
        raise ConfigError("empty config")
    b = _Builder(lines)
    cfg = b.build_dataclass(ExperimentConfig, raw, "")
    return validate(cfg, lines)


def parse_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config_text(text)


def emit_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, allow_unicode=True)


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Build and validate from a plain dict (e.g. the config echo of a summary)."""
    return validate(_Builder({}).build_dataclass(ExperimentConfig, data, ""))
