"""Two-level encoder-decoder with residual skips and feature re-extraction.

Both downsamplings are stride-2 3x3 convolutions; upsampling is nearest
2x followed by a 3x3 convolution. Before each skip concatenation the
encoder output is re-extracted by an extra 3x3 convolution, and the
upsampled path gets an additive residual from the matching encoder level.
Channels are recovered after concatenation by a 1x1 convolution. Widths
double per level (C, 2C, 4C). No normalization layers.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .init import conv_pair
from .tensor import Tensor

LEAKY_SLOPE = 0.2


class ConvBlock:
    """Two 3x3 same-padded convolutions, each followed by leaky-ReLU."""

    def __init__(self, rng, name, c_in, c_out, dtype):
        self.w1, self.b1 = conv_pair(rng, name + ".c1", c_out, c_in, 3, dtype)
        self.w2, self.b2 = conv_pair(rng, name + ".c2", c_out, c_out, 3, dtype)

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: Tensor) -> Tensor:
        h = T.leaky_relu(T.conv2d(x, self.w1, self.b1, padding=1), LEAKY_SLOPE)
        return T.leaky_relu(T.conv2d(h, self.w2, self.b2, padding=1), LEAKY_SLOPE)


class ImprovedUNet:
    """Encoder-decoder over widths (C, 2C, 4C) preserving the input shape.

    ``improved=False`` drops the residual adds and re-extraction convs,
    leaving a plain skip-concatenation U-Net of the same depth.
    """

    def __init__(self, rng, name, channels, improved=True, dtype=np.float64):
        self.channels = channels
        self.improved = improved
        c1, c2, c4 = channels, 2 * channels, 4 * channels

        self.enc0 = ConvBlock(rng, name + ".enc0", c1, c1, dtype)
        self.down0_w, self.down0_b = conv_pair(rng, name + ".down0", c2, c1, 3, dtype)
        self.enc1 = ConvBlock(rng, name + ".enc1", c2, c2, dtype)
        self.down1_w, self.down1_b = conv_pair(rng, name + ".down1", c4, c2, 3, dtype)
        self.enc2 = ConvBlock(rng, name + ".enc2", c4, c4, dtype)

        self.up1_w, self.up1_b = conv_pair(rng, name + ".up1", c2, c4, 3, dtype)
        self.reext1 = None
        if improved:
            self.reext1_w, self.reext1_b = conv_pair(rng, name + ".reext1", c2, c2, 3, dtype)
            self.reext1 = (self.reext1_w, self.reext1_b)
        self.dec1 = ConvBlock(rng, name + ".dec1", c4, c4, dtype)
        self.rec1_w, self.rec1_b = conv_pair(rng, name + ".rec1", c2, c4, 1, dtype)

        self.up0_w, self.up0_b = conv_pair(rng, name + ".up0", c1, c2, 3, dtype)
        self.reext0 = None
        if improved:
            self.reext0_w, self.reext0_b = conv_pair(rng, name + ".reext0", c1, c1, 3, dtype)
            self.reext0 = (self.reext0_w, self.reext0_b)
        self.dec0 = ConvBlock(rng, name + ".dec0", c2, c2, dtype)
        self.rec0_w, self.rec0_b = conv_pair(rng, name + ".rec0", c1, c2, 1, dtype)

    def parameters(self):
        params = []
        params.extend(self.enc0.parameters())
        params.extend([self.down0_w, self.down0_b])
        params.extend(self.enc1.parameters())
        params.extend([self.down1_w, self.down1_b])
        params.extend(self.enc2.parameters())
        params.extend([self.up1_w, self.up1_b])
        if self.reext1 is not None:
            params.extend(self.reext1)
        params.extend(self.dec1.parameters())
        params.extend([self.rec1_w, self.rec1_b])
        params.extend([self.up0_w, self.up0_b])
        if self.reext0 is not None:
            params.extend(self.reext0)
        params.extend(self.dec0.parameters())
        params.extend([self.rec0_w, self.rec0_b])
        return params

    def _up(self, x, w, b):
        return T.leaky_relu(T.conv2d(T.upsample2x(x), w, b, padding=1), LEAKY_SLOPE)

    def _down(self, x, w, b):
        return T.leaky_relu(T.conv2d(x, w, b, stride=2, padding=1), LEAKY_SLOPE)

    def _decode(self, up, enc, reext, block, rec_w, rec_b):
        if self.improved:
            up = T.add(up, enc)
            skip = T.leaky_relu(T.conv2d(enc, reext[0], reext[1], padding=1), LEAKY_SLOPE)
        else:
            skip = enc
        merged = block.forward(T.concat_channels(up, skip))
        return T.conv2d(merged, rec_w, rec_b)  # 1x1 channel recovery

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[0] != self.channels:
            raise DimensionError(f"unet expected {self.channels}xHxW, got {x.shape}")
        _, h, w = x.shape
        if h % 4 or w % 4:
            raise DimensionError(f"unet needs H,W divisible by 4, got {h}x{w}")

        e0 = self.enc0.forward(x)
        e1 = self.enc1.forward(self._down(e0, self.down0_w, self.down0_b))
        e2 = self.enc2.forward(self._down(e1, self.down1_w, self.down1_b))

        d1 = self._decode(self._up(e2, self.up1_w, self.up1_b), e1, self.reext1,
                          self.dec1, self.rec1_w, self.rec1_b)
        d0 = self._decode(self._up(d1, self.up0_w, self.up0_b), e0, self.reext0,
                          self.dec0, self.rec0_w, self.rec0_b)
        return d0


def param_count(params) -> int:
    """Exact number of trainable scalars in an iterable of parameters."""
    return sum(p.size for p in params)
