"""Row-column separated attention.

A feature map is summarized into four compact statistics: the per-row mean
and max (C x H) and the per-column mean and max (C x W). Each statistic is
run through its own single-head attention over positions; the row and
column results are fused back to full resolution by per-channel outer
products, and the mean/max maps are mixed by a learned per-channel sigmoid
gate. The attention input holds 2C(H+W) scalars versus C*H*W for dense
pixel attention, a fraction of 2/H + 2/W.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .init import conv_pair, square_matrix
from .tensor import Parameter, Tensor

BRANCH_MODES = ("both", "avg_only", "max_only")


@dataclass
class RowColStats:
    """Row/column mean-max summaries of a CxHxW map."""

    fh_avg: Tensor  # C x H x 1
    fh_max: Tensor  # C x H x 1
    fw_avg: Tensor  # C x 1 x W
    fw_max: Tensor  # C x 1 x W

    @property
    def scalar_count(self) -> int:
        return (self.fh_avg.size + self.fh_max.size
                + self.fw_avg.size + self.fw_max.size)


def row_col_stats(f: Tensor) -> RowColStats:
    """Mean and max over the width axis (rows) and the height axis (columns)."""
    return RowColStats(
        fh_avg=T.reduce_mean(f, axis=2),
        fh_max=T.reduce_max(f, axis=2),
        fw_avg=T.reduce_mean(f, axis=1),
        fw_max=T.reduce_max(f, axis=1),
    )


def attention_input_ratio(h: int, w: int) -> float:
    """Fraction of scalars entering attention relative to dense pixel attention."""
    return 2.0 / h + 2.0 / w


class AttentionBranch:
    """Single-head attention over the positions of one C x L statistic."""

    def __init__(self, rng, name, channels, dtype):
        self.channels = channels
        self.w_q = square_matrix(rng, name + ".wq", channels, dtype)
        self.w_k = square_matrix(rng, name + ".wk", channels, dtype)
        self.w_v = square_matrix(rng, name + ".wv", channels, dtype)

    def parameters(self):
        return [self.w_q, self.w_k, self.w_v]

    def forward(self, x: Tensor, return_weights: bool = False):
        """x is C x L; the L positions are the tokens, scaled by 1/sqrt(C)."""
        tokens = T.transpose2d(x)  # L x C
        q = T.matmul(tokens, self.w_q)
        k = T.matmul(tokens, self.w_k)
        v = T.matmul(tokens, self.w_v)
        scores = T.matmul(q, T.transpose2d(k)) * (1.0 / np.sqrt(self.channels))
        weights = T.softmax_last(scores)  # L x L, rows sum to 1
        out = T.transpose2d(T.matmul(weights, v))  # back to C x L
        if return_weights:
            return out, weights
        return out


class Rcsa:
    """The full row-column attention module with a 1x1 output projection.

    ``in_channels`` is the width of the incoming (possibly concatenated)
    feature map; ``out_channels`` is the width after the 1x1 reduction.
    The caller adds any residual.
    """

    def __init__(self, in_channels, out_channels, rng, name="rcsa",
                 branch_mode="both", dtype=np.float64):
        if branch_mode not in BRANCH_MODES:
            raise ConfigError(f"unknown branch mode {branch_mode!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.branch_mode = branch_mode

        self.branches = {}
        use_avg = branch_mode in ("both", "avg_only")
        use_max = branch_mode in ("both", "max_only")
        for key, used in [("row_avg", use_avg), ("row_max", use_max),
                          ("col_avg", use_avg), ("col_max", use_max)]:
            if used:
                self.branches[key] = AttentionBranch(rng, f"{name}.{key}", in_channels, dtype)
        self.lam = None
        if branch_mode == "both":
            # Balanced 0.5/0.5 start: sigmoid(0) = 0.5.
            self.lam = Parameter(np.zeros(in_channels, dtype=dtype), name + ".lam")
        # Damped init for the output projection: the module starts close to a
        # pass-through of its residual instead of injecting full-strength
        # random attention maps at step 0.
        self.out_w, self.out_b = conv_pair(rng, name + ".out", out_channels, in_channels,
                                           1, dtype, scale=0.1)

    def parameters(self):
        params = []
        for key in ("row_avg", "row_max", "col_avg", "col_max"):
            if key in self.branches:
                params.extend(self.branches[key].parameters())
        if self.lam is not None:
            params.append(self.lam)
        params.extend([self.out_w, self.out_b])
        return params

    def _fused_map(self, row_key, row_stat, col_key, col_stat, shape) -> Tensor:
        c, h, w = shape
        row_att = self.branches[row_key].forward(T.reshape(row_stat, (c, h)))
        col_att = self.branches[col_key].forward(T.reshape(col_stat, (c, w)))
        # Per-channel outer product recovers an H x W map from H- and W-vectors.
        return T.bmm(T.reshape(row_att, (c, h, 1)), T.reshape(col_att, (c, 1, w)))

    def forward(self, f: Tensor, residual: Tensor | None = None) -> Tensor:
        """Attention map projected to ``out_channels``, plus an optional residual.

        The attention output is an outer-product map, so the residual is what
        carries pixel-level detail past the module; the caller supplies it
        (the features being guided).
        """
        if f.ndim != 3 or f.shape[0] != self.in_channels:
            raise DimensionError(f"rcsa expected {self.in_channels}xHxW, got {f.shape}")
        stats = row_col_stats(f)
        avg_map = max_map = None
        if "row_avg" in self.branches:
            avg_map = self._fused_map("row_avg", stats.fh_avg, "col_avg", stats.fw_avg, f.shape)
        if "row_max" in self.branches:
            max_map = self._fused_map("row_max", stats.fh_max, "col_max", stats.fw_max, f.shape)

        if self.branch_mode == "both":
            a = T.sigmoid(self.lam)
            b = T.sub(1.0, a)
            fused = T.add(T.scale_channels(avg_map, a), T.scale_channels(max_map, b))
        elif self.branch_mode == "avg_only":
            fused = avg_map
        else:
            fused = max_map
        out = T.conv2d(fused, self.out_w, self.out_b)
        if residual is not None:
            out = T.add(out, residual)
        return out
