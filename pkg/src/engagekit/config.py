"""Declarative pipeline configuration.

One JSON document covers every stage; unknown keys are rejected.
Precedence is command-line override > config file > built-in default.
Each run writes its resolved configuration next to its outputs (output
paths themselves are not part of the document, so reruns into different
directories stay byte-identical).
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dataset import PAPER_CLASS_WEIGHTS
from .model import NetConfig, TrainConfig
from .pipeline import FusionSettings


@dataclass
class FeatureSettings:
    frames_per_segment: int = 5
    absolute_angles: bool = False


@dataclass
class DataSettings:
    val_fraction: float = 0.1
    noise_sigma: float = 0.05
    # optional stronger noise on the 54 keypoint means only; fights
    # memorisation of session-specific positions (None = uniform sigma)
    noise_sigma_positional: object = None
    offset_range: int = 12  # segments, = 2 s at 30 fps
    class_weights: object = "paper"  # "paper" | "auto" | [w1, w2, w3]

    def noise_scale(self):
        if self.noise_sigma_positional is None:
            return self.noise_sigma
        import numpy as np

        return np.concatenate(
            [np.full(54, float(self.noise_sigma_positional)), np.full(4, self.noise_sigma)]
        )


@dataclass
class ModelSettings:
    hidden: int = 560
    n_fc: int = 3
    n_lstm: int = 1
    dropout_p: float = 0.5
    batch: int = 16
    seq_len: int = 30

    def __post_init__(self):
        if self.n_fc not in (2, 3):
            raise ValueError("model.n_fc must be 2 or 3")
        if self.n_lstm not in (1, 2):
            raise ValueError("model.n_lstm must be 1 or 2")
        if min(self.hidden, self.batch, self.seq_len) <= 0:
            raise ValueError("model dimensions must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("model.dropout_p must be in [0, 1)")


@dataclass
class TrainSettings:
    lr0: float = 0.1
    momentum: float = 0.5
    weight_decay: float = 1e-6
    patience: int = 10
    lr_drop_factor: float = 10.0
    grad_clip: float = 0.1
    max_lr_drops: int = 2
    max_epochs: int = 500


@dataclass
class ForestSettings:
    n_trees: int = 10
    max_depth: int = 10


@dataclass
class SynthGenSettings:
    sessions: int = 8
    seconds: float = 60.0
    cameras: int = 3
    fps: float = 30.0
    noise_sigma: float = 0.008
    dropout_p: float = 0.10
    outlier_p: float = 0.05
    outlier_scale: float = 1.0
    room_yaw: float = 0.12


@dataclass
class PipelineConfig:
    seed: int = 0
    jobs: int = 1
    fusion: FusionSettings = field(default_factory=FusionSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    forest: ForestSettings = field(default_factory=ForestSettings)
    synth: SynthGenSettings = field(default_factory=SynthGenSettings)

    def net_config(self) -> NetConfig:
        m = self.model
        return NetConfig(
            input_dim=116,
            hidden=m.hidden,
            classes=3,
            n_fc=m.n_fc,
            n_lstm=m.n_lstm,
            dropout_p=m.dropout_p,
            batch=m.batch,
            seq_len=m.seq_len,
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        weights = self.data.class_weights
        if weights == "paper" or weights == "auto":
            weights = PAPER_CLASS_WEIGHTS  # "auto" is resolved per fold
        return TrainConfig(
            lr0=t.lr0,
            momentum=t.momentum,
            weight_decay=t.weight_decay,
            patience=t.patience,
            lr_drop_factor=t.lr_drop_factor,
            grad_clip=t.grad_clip,
            class_weights=tuple(weights),
            val_fraction=self.data.val_fraction,
            max_lr_drops=t.max_lr_drops,
            max_epochs=t.max_epochs,
            seed=self.seed,
        )


class ConfigError(ValueError):
    pass


def _from_dict(cls, doc: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown config key(s) at {path or 'top level'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        f = known[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            section_cls = _SECTION_TYPES[f.type] if isinstance(f.type, str) else f.type
            if not isinstance(value, dict):
                raise ConfigError(f"config section {path}{name} must be an object")
            kwargs[name] = _from_dict(section_cls, value, f"{path}{name}.")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config at {path or 'top level'}: {exc}") from exc


_SECTION_TYPES = {
    "FusionSettings": FusionSettings,
    "FeatureSettings": FeatureSettings,
    "DataSettings": DataSettings,
    "ModelSettings": ModelSettings,
    "TrainSettings": TrainSettings,
    "ForestSettings": ForestSettings,
    "SynthGenSettings": SynthGenSettings,
}


def config_from_dict(doc: dict) -> PipelineConfig:
    return _from_dict(PipelineConfig, doc, "")


def config_to_dict(config: PipelineConfig) -> dict:
    return dataclasses.asdict(config)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def apply_overrides(config: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply ``section.key=value`` overrides (values parsed as JSON, falling
    back to a bare string)."""
    doc = config_to_dict(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return config_from_dict(doc)


def save_config_snapshot(path, config: PipelineConfig) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
