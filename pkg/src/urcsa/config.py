"""Plain-text key=value run configuration.

One key per line, ``#`` starts a comment, unknown keys are rejected.
The file covers the model architecture, the training schedule, the loss
weights and the dataset paths; every key has a documented default, so an
empty file is a valid configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError
from .losses import LossWeights
from .network import ModelConfig
from .trainer import TrainConfig


@dataclass
class RunConfig:
    # model
    base_channels: int = 32
    n_blocks: int = 3
    use_rcsa: bool = True
    rcsa_branch: str = "both"
    ordering: str = "u-rcsa"
    improved_unet: bool = True
    model_seed: int = 0
    # training
    initial_lr: float = 5e-4
    decay_factor: float = 1.2
    decay_every: int = 50
    total_epochs: int = 100
    stage1_fraction: float = 2.0 / 3.0
    crop_h: int = 128
    crop_w: int = 128
    batch_size: int = 1
    train_seed: int = 0
    # loss
    tv_weight: float = 0.001
    alpha: float = 2.0
    beta: float = 2.0
    extractor_seed: int = 0
    extractor_weights: str = ""
    # paths and mode
    train_dir: str = ""
    val_dir: str = ""
    out_dir: str = "runs"
    video: bool = False


_BOOL = {"true": True, "false": False}


def parse_config(text: str) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        f = known[key]
        try:
            if isinstance(f.default, bool):
                if value not in _BOOL:
                    raise ValueError(value)
                values[key] = _BOOL[value]
            elif isinstance(f.default, int):
                values[key] = int(value)
            elif isinstance(f.default, float):
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return RunConfig(**values)


def parse_config_file(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            lines.append(f"{f.name}={str(v).lower()}")
        elif isinstance(v, float):
            lines.append(f"{f.name}={v!r}")
        else:
            lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def model_config(cfg: RunConfig) -> ModelConfig:
    return ModelConfig(base_channels=cfg.base_channels, n_blocks=cfg.n_blocks,
                       use_rcsa=cfg.use_rcsa, rcsa_branch=cfg.rcsa_branch,
                       ordering=cfg.ordering, improved_unet=cfg.improved_unet,
                       seed=cfg.model_seed)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(initial_lr=cfg.initial_lr, decay_factor=cfg.decay_factor,
                       decay_every=cfg.decay_every, total_epochs=cfg.total_epochs,
                       stage1_fraction=cfg.stage1_fraction, crop_h=cfg.crop_h,
                       crop_w=cfg.crop_w, batch_size=cfg.batch_size,
                       seed=cfg.train_seed)


def loss_weights(cfg: RunConfig) -> LossWeights:
    return LossWeights(tv_weight=cfg.tv_weight, alpha=cfg.alpha, beta=cfg.beta,
                       stage="video" if cfg.video else "1")
