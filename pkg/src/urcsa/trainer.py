"""Adam training with the staged image objective and the video objective.

The learning rate starts at 5e-4 and is divided by 1.2 every
``decay_every`` epochs. Image training runs the stage-1 composite for the
first ``stage1_fraction`` of epochs and the stage-2 composite afterwards.
Video training feeds both adjacent frames through the same parameters and
optimizes the temporal composite. Everything is deterministic under a
fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from . import tensor as T
from .errors import ConfigError, DimensionError, UsageError
from .losses import LossWeights, composite_loss, video_loss
from .network import save_model
from .tensor import Tensor


@dataclass
class TrainConfig:
    initial_lr: float = 5e-4
    decay_factor: float = 1.2
    decay_every: int = 50
    total_epochs: int = 100
    stage1_fraction: float = 2.0 / 3.0
    crop_h: int = 128
    crop_w: int = 128
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.stage1_fraction < 1.0:
            raise ConfigError("stage1_fraction must be in (0, 1)")
        if self.crop_h % 4 or self.crop_w % 4:
            raise ConfigError("crop dimensions must be divisible by 4")
        if self.decay_every < 1 or self.total_epochs < 1 or self.batch_size < 1:
            raise ConfigError("decay_every, total_epochs and batch_size must be >= 1")


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {p: np.zeros_like(p.data) for p in params}
        self.v = {p: np.zeros_like(p.data) for p in params}


def adam_step(params, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update; gradients are consumed and cleared."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p in params:
        if p.grad is None:
            raise UsageError(f"adam_step: parameter {p.name} has no gradient")
        g = p.grad
        m = state.m[p]
        v = state.v[p]
        m[:] = state.beta1 * m + (1.0 - state.beta1) * g
        v[:] = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad = None


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.initial_lr / cfg.decay_factor ** (epoch // cfg.decay_every)


def random_crop_pair(low: np.ndarray, high: np.ndarray, crop_h: int, crop_w: int, rng):
    """The same randomly chosen window cut from both images."""
    if low.shape[-2:] != high.shape[-2:]:
        raise DimensionError("paired images must share spatial size")
    h, w = low.shape[-2:]
    if h < crop_h or w < crop_w:
        raise DimensionError(f"image {h}x{w} smaller than crop {crop_h}x{crop_w}")
    i = int(rng.integers(0, h - crop_h + 1))
    j = int(rng.integers(0, w - crop_w + 1))
    return (np.ascontiguousarray(low[..., i : i + crop_h, j : j + crop_w]),
            np.ascontiguousarray(high[..., i : i + crop_h, j : j + crop_w]))


@dataclass
class TrainLog:
    entries: list = field(default_factory=list)
    lines: list = field(default_factory=list)

    def append(self, entry: dict, log_path=None) -> None:
        self.entries.append(entry)
        parts = []
        for key, value in entry.items():
            if isinstance(value, float):
                parts.append(f"{key}={value:.8g}")
            else:
                parts.append(f"{key}={value}")
        line = " ".join(parts)
        self.lines.append(line)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    @property
    def best_psnr(self) -> float:
        return max(e["psnr"] for e in self.entries)


def _maybe_crop(low, high, cfg: TrainConfig, rng):
    h, w = low.shape[-2:]
    if h >= cfg.crop_h and w >= cfg.crop_w and (h, w) != (cfg.crop_h, cfg.crop_w):
        return random_crop_pair(low, high, cfg.crop_h, cfg.crop_w, rng)
    return low, high


def _mean_loss(losses):
    total = losses[0]
    for extra in losses[1:]:
        total = T.add(total, extra)
    if len(losses) > 1:
        total = T.mul(total, 1.0 / len(losses))
    return total


def _validate(model, pairs):
    psnrs, ssims = [], []
    for low, high in pairs:
        out = model.enhance(low)
        psnrs.append(metrics.psnr(out, high))
        ssims.append(metrics.ssim_index(out, high))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def _epoch_stage(cfg: TrainConfig, epoch: int) -> str:
    return "1" if epoch < cfg.stage1_fraction * cfg.total_epochs else "2"


def train_images(pairs, model, cfg: TrainConfig, extractor,
                 weights: LossWeights | None = None, val_pairs=None,
                 checkpoint_path=None, log_path=None) -> TrainLog:
    """Staged training over (low, high) image pairs; returns the epoch log.

    Validation runs a full-size padded forward on ``val_pairs`` (the
    training pairs when not given); the checkpoint, when requested, tracks
    the best validation PSNR.
    """
    pairs = [(low.astype(model.dtype), high.astype(model.dtype)) for low, high in pairs]
    if not pairs:
        raise ConfigError("training requires a nonempty dataset")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(model.parameters())
    log = TrainLog()
    best = -np.inf

    for epoch in range(cfg.total_epochs):
        stage = _epoch_stage(cfg, epoch)
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(len(pairs))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch_losses = []
            for idx in order[start : start + cfg.batch_size]:
                low, high = _maybe_crop(*pairs[idx], cfg, rng)
                pred = model.forward(Tensor(low))
                loss, _ = composite_loss(stage, pred, Tensor(high), extractor, weights)
                batch_losses.append(loss)
            total = _mean_loss(batch_losses)
            total.backward()
            adam_step(model.parameters(), state, lr)
            epoch_losses.append(total.item())

        val_psnr, val_ssim = _validate(model, val_pairs or pairs)
        log.append({"epoch": epoch, "stage": stage, "lr": lr,
                    "loss": float(np.mean(epoch_losses)),
                    "psnr": val_psnr, "ssim": val_ssim}, log_path)
        if checkpoint_path is not None and val_psnr > best:
            best = val_psnr
            save_model(model, checkpoint_path)
    return log


def train_video(frame_pairs, model, cfg: TrainConfig, extractor,
                weights: LossWeights | None = None, val_pairs=None,
                checkpoint_path=None, log_path=None) -> TrainLog:
    """Temporal training over (low_k, low_k1, high_k, high_k1) samples.

    Both frames of a sample pass through the same parameters; the video
    composite adds the pooled-brightness and self-similarity terms.
    """
    frame_pairs = [tuple(a.astype(model.dtype) for a in sample) for sample in frame_pairs]
    if not frame_pairs:
        raise ConfigError("training requires a nonempty dataset")
    for sample in frame_pairs:
        if len(sample) != 4:
            raise ConfigError("video samples must be (low_k, low_k1, high_k, high_k1)")
    w = weights or LossWeights(stage="video")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(model.parameters())
    log = TrainLog()
    best = -np.inf

    for epoch in range(cfg.total_epochs):
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(len(frame_pairs))
        epoch_losses, difs, selfs = [], [], []
        for idx in order:
            low_k, low_k1, high_k, high_k1 = frame_pairs[idx]
            if low_k.shape[-2:] != low_k1.shape[-2:]:
                raise DimensionError("adjacent frames must share spatial size")
            pred_k = model.forward(Tensor(low_k))
            pred_k1 = model.forward(Tensor(low_k1))
            loss, parts = video_loss(pred_k, pred_k1, Tensor(high_k), Tensor(high_k1),
                                     extractor, w)
            loss.backward()
            adam_step(model.parameters(), state, lr)
            epoch_losses.append(loss.item())
            difs.append(parts["l_dif"])
            selfs.append(parts["l_self"])

        vals = val_pairs or [(s[0], s[2]) for s in frame_pairs]
        val_psnr, val_ssim = _validate(model, vals)
        log.append({"epoch": epoch, "lr": lr, "loss": float(np.mean(epoch_losses)),
                    "ldif": float(np.mean(difs)), "lself": float(np.mean(selfs)),
                    "psnr": val_psnr, "ssim": val_ssim}, log_path)
        if checkpoint_path is not None and val_psnr > best:
            best = val_psnr
            save_model(model, checkpoint_path)
    return log
