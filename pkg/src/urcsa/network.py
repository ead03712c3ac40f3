"""The full enhancement network: head conv, stacked shared blocks, tail conv.

One block runs the improved U-Net, concatenates its input and output,
feeds the 2C-channel result through row-column attention with a 1x1
reduction back to C, and adds the block input as a residual. The same
block parameters are applied ``n_blocks`` times, so the trainable
parameter count is independent of the stack depth. The reversed ordering
variant runs attention first and the U-Net on the concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointShapeError, ConfigError
from .init import conv_pair
from .rcsa import BRANCH_MODES, Rcsa
from .tensor import Tensor
from .unet import ImprovedUNet, param_count

ORDERINGS = ("u-rcsa", "rcsa-u")


@dataclass(frozen=True)
class ModelConfig:
    """Everything that determines the parameter set, including the init seed."""

    base_channels: int = 32
    n_blocks: int = 3
    use_rcsa: bool = True
    rcsa_branch: str = "both"
    ordering: str = "u-rcsa"
    improved_unet: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_blocks <= 4:
            raise ConfigError(f"n_blocks must be in [1, 4], got {self.n_blocks}")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be positive")
        if self.rcsa_branch not in BRANCH_MODES:
            raise ConfigError(f"rcsa_branch must be one of {BRANCH_MODES}")
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"ordering must be one of {ORDERINGS}")


_BOOL = {"true": True, "false": False}


def config_to_text(cfg: ModelConfig) -> str:
    lines = ["kind=urcsa-model"]
    for f in fields(ModelConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ModelConfig:
    values = {}
    for line in text.strip().splitlines():
        key, _, raw = line.partition("=")
        values[key.strip()] = raw.strip()
    if values.pop("kind", None) != "urcsa-model":
        raise ConfigError("checkpoint does not describe a model")
    kwargs = {}
    for f in fields(ModelConfig):
        raw = values.pop(f.name)
        if f.type == "bool" or isinstance(f.default, bool):
            kwargs[f.name] = _BOOL[raw]
        elif isinstance(f.default, int):
            kwargs[f.name] = int(raw)
        else:
            kwargs[f.name] = raw
    if values:
        raise ConfigError(f"unknown model config keys: {sorted(values)}")
    return ModelConfig(**kwargs)


class URCSANet:
    """Head 3x3 conv, n parameter-shared blocks with residuals, tail 3x3 conv."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(config.seed)
        c = config.base_channels

        self.head_w, self.head_b = conv_pair(rng, "head", c, 3, 3, dtype)
        self.unet = ImprovedUNet(rng, "block.unet", c,
                                 improved=config.improved_unet, dtype=dtype)
        self.rcsa = None
        self.merge_w = self.merge_b = None
        if config.use_rcsa:
            if config.ordering == "u-rcsa":
                self.rcsa = Rcsa(2 * c, c, rng, name="block.rcsa",
                                 branch_mode=config.rcsa_branch, dtype=dtype)
            else:
                # Attention first; a 1x1 conv recovers C channels from the
                # concatenation before the U-Net.
                self.rcsa = Rcsa(c, c, rng, name="block.rcsa",
                                 branch_mode=config.rcsa_branch, dtype=dtype)
                self.merge_w, self.merge_b = conv_pair(rng, "block.merge", c, 2 * c, 1, dtype)
        self.tail_w, self.tail_b = conv_pair(rng, "tail", 3, c, 3, dtype)

    def parameters(self):
        params = [self.head_w, self.head_b]
        params.extend(self.unet.parameters())
        if self.rcsa is not None:
            params.extend(self.rcsa.parameters())
        if self.merge_w is not None:
            params.extend([self.merge_w, self.merge_b])
        params.extend([self.tail_w, self.tail_b])
        return params

    def param_count(self) -> int:
        return param_count(self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def block_forward(self, x: Tensor) -> Tensor:
        if self.rcsa is None:
            return T.add(self.unet.forward(x), x)
        if self.config.ordering == "u-rcsa":
            # The attention guides the U-Net features: its residual is u, so
            # pixel detail is not bottlenecked through the row/column stats.
            u = self.unet.forward(x)
            r = self.rcsa.forward(T.concat_channels(x, u), residual=u)
            return T.add(r, x)
        r = self.rcsa.forward(x, residual=x)
        merged = T.conv2d(T.concat_channels(x, r), self.merge_w, self.merge_b)
        return T.add(self.unet.forward(merged), x)

    def forward(self, img: Tensor, block_outputs=None) -> Tensor:
        """Unclamped enhancement of a 3xHxW image; H and W divisible by 4."""
        h = T.conv2d(img, self.head_w, self.head_b, padding=1)
        for _ in range(self.config.n_blocks):
            h = self.block_forward(h)
            if block_outputs is not None:
                block_outputs.append(h)
        return T.conv2d(h, self.tail_w, self.tail_b, padding=1)

    def enhance(self, img: np.ndarray) -> np.ndarray:
        """Enhance an arbitrary-size 3xHxW array; output clamped to [0, 1]."""
        from .png_io import pad_to_multiple

        padded, (h, w) = pad_to_multiple(img.astype(self.dtype, copy=False), 4)
        out = self.forward(Tensor(padded)).data[:, :h, :w]
        return np.clip(out, 0.0, 1.0)


def save_model(model: URCSANet, path) -> None:
    save_checkpoint(path, config_to_text(model.config), model.parameters())


def load_model(path, dtype=np.float32) -> URCSANet:
    """Rebuild a model from a checkpoint: stored config, then stored values."""
    cfg_text, arrays = load_checkpoint(path)
    model = URCSANet(config_from_text(cfg_text), dtype=dtype)
    _assign(model, arrays)
    return model


def load_into_model(model: URCSANet, path) -> None:
    """Load values into an existing model; the architecture must match.

    The init seed is ignored: it only determines starting values, which the
    load replaces.
    """
    cfg_text, arrays = load_checkpoint(path)
    stored = replace(config_from_text(cfg_text), seed=model.config.seed)
    if stored != model.config:
        raise CheckpointShapeError("checkpoint architecture does not match the model")
    _assign(model, arrays)


def _assign(model: URCSANet, arrays) -> None:
    params = {p.name: p for p in model.parameters()}
    if set(params) != set(arrays):
        missing = sorted(set(params) ^ set(arrays))
        raise CheckpointShapeError(f"parameter set mismatch: {missing}")
    for name, p in params.items():
        stored = arrays[name]
        if stored.shape != p.shape:
            raise CheckpointShapeError(
                f"{name}: stored shape {stored.shape} != model shape {p.shape}")
        p.data = stored.astype(model.dtype)
