"""Training objectives: structural, perceptual, robust-regression, smoothness
and temporal-consistency terms, plus the staged composites.

Stage 1 favors enhancement quality (perceptual + structural + smooth-L1 +
weighted total variation); stage 2 swaps the TV term for MSE
regularization. The video composite adds two temporal terms on adjacent
enhanced frames: a pooled-brightness difference and a frame-difference
self-similarity mismatch, both weighted 2 by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointShapeError, ConfigError, DimensionError
from .init import conv_pair
from .tensor import Tensor
from .unet import LEAKY_SLOPE

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
TV_EPS = 1e-8

BRIGHTNESS_WEIGHTS = (0.299, 0.587, 0.114)

STAGES = ("1", "2", "video")


@dataclass
class LossWeights:
    tv_weight: float = 0.001
    alpha: float = 2.0
    beta: float = 2.0
    stage: str = "1"

    def __post_init__(self):
        if self.tv_weight < 0 or self.alpha < 0 or self.beta < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}")


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _gaussian_kernel() -> np.ndarray:
    x = np.arange(SSIM_WINDOW, dtype=np.float64) - (SSIM_WINDOW - 1) / 2
    k = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _banded_filter(n: int, dtype) -> np.ndarray:
    """Valid-mode 1-D windowed-mean operator as an (n-10) x n matrix."""
    k = _gaussian_kernel().astype(dtype)
    out = np.zeros((n - SSIM_WINDOW + 1, n), dtype=dtype)
    for i in range(out.shape[0]):
        out[i, i : i + SSIM_WINDOW] = k
    return out


def _window_means(x: Tensor) -> Tensor:
    """Gaussian-weighted means over all valid 11x11 windows, per channel."""
    c, h, w = x.shape
    gh = np.ascontiguousarray(np.broadcast_to(_banded_filter(h, x.dtype), (c, h - 10, h)))
    gw = np.ascontiguousarray(np.broadcast_to(_banded_filter(w, x.dtype).T, (c, w, w - 10)))
    return T.bmm(T.bmm(Tensor(gh), x), Tensor(gw))


def ssim_mean(pred: Tensor, gt: Tensor) -> Tensor:
    """Mean structural-similarity index over windows and channels."""
    _require_same_shape(pred, gt, "ssim")
    _, h, w = pred.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DimensionError(f"ssim needs H,W >= {SSIM_WINDOW}, got {h}x{w}")
    mu_x = _window_means(pred)
    mu_y = _window_means(gt)
    # Window variances/covariance by E[uv] - E[u]E[v].
    sig_x = T.sub(_window_means(T.mul(pred, pred)), T.mul(mu_x, mu_x))
    sig_y = T.sub(_window_means(T.mul(gt, gt)), T.mul(mu_y, mu_y))
    sig_xy = T.sub(_window_means(T.mul(pred, gt)), T.mul(mu_x, mu_y))
    num = T.mul(T.add(T.mul(T.mul(mu_x, mu_y), 2.0), SSIM_C1),
                T.add(T.mul(sig_xy, 2.0), SSIM_C2))
    den = T.mul(T.add(T.add(T.mul(mu_x, mu_x), T.mul(mu_y, mu_y)), SSIM_C1),
                T.add(T.add(sig_x, sig_y), SSIM_C2))
    return T.mean_all(T.div(num, den))


def ssim_loss(pred: Tensor, gt: Tensor) -> Tensor:
    return T.sub(1.0, ssim_mean(pred, gt))


class FeatureExtractor:
    """Fixed convolutional feature pyramid standing in for pretrained features.

    Three blocks of {3x3 conv, leaky-ReLU, 2x max pooling} with
    seed-deterministic weights that never receive gradients. External
    weights in the package checkpoint format can be swapped in.
    """

    WIDTHS = (16, 32, 64)

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.convs = []
        c_in = 3
        for i, width in enumerate(self.WIDTHS):
            w, b = conv_pair(rng, f"feat{i}", width, c_in, 3, dtype)
            w.requires_grad = False
            b.requires_grad = False
            self.convs.append((w, b))
            c_in = width

    def parameters(self):
        return [p for pair in self.convs for p in pair]

    def features(self, img: Tensor, block: int | None = None) -> Tensor:
        """Feature map after ``block`` blocks (default: the last)."""
        n = len(self.convs) if block is None else block
        if not 1 <= n <= len(self.convs):
            raise ConfigError(f"block must be in [1, {len(self.convs)}]")
        h = img
        for w, b in self.convs[:n]:
            h = T.maxpool2d(T.leaky_relu(T.conv2d(h, w, b, padding=1), LEAKY_SLOPE))
        return h

    def save(self, path) -> None:
        cfg = f"kind=feature-extractor\nseed={self.seed}\n"
        save_checkpoint(path, cfg, self.parameters())

    @classmethod
    def load(cls, path, dtype=np.float32) -> "FeatureExtractor":
        cfg_text, arrays = load_checkpoint(path)
        head = dict(line.partition("=")[::2] for line in cfg_text.strip().splitlines())
        if head.get("kind") != "feature-extractor":
            raise ConfigError("checkpoint does not hold extractor weights")
        ext = cls(seed=int(head.get("seed", 0)), dtype=dtype)
        params = {p.name: p for p in ext.parameters()}
        if set(params) != set(arrays):
            raise CheckpointShapeError("extractor parameter set mismatch")
        for name, p in params.items():
            if arrays[name].shape != p.shape:
                raise CheckpointShapeError(f"{name}: shape mismatch")
            p.data = arrays[name].astype(dtype)
        return ext


def perceptual_loss(pred: Tensor, gt: Tensor, extractor: FeatureExtractor,
                    block: int | None = None) -> Tensor:
    """Mean L1 distance between fixed feature maps of prediction and target."""
    _require_same_shape(pred, gt, "perceptual")
    return T.mean_all(T.absolute(T.sub(extractor.features(pred, block),
                                       extractor.features(gt, block))))


def smooth_l1_loss(pred: Tensor, gt: Tensor) -> Tensor:
    """Mean Huber penalty: 0.5*d^2 below |d|=1, |d|-0.5 above."""
    _require_same_shape(pred, gt, "smooth_l1")
    d = T.sub(pred, gt)
    # The branch mask is held constant; the penalty is C1 at |d|=1 so both
    # branch gradients agree there.
    small = Tensor((np.abs(d.data) < 1.0).astype(d.dtype))
    quad = T.mul(T.square(d), 0.5)
    lin = T.sub(T.absolute(d), 0.5)
    return T.mean_all(T.add(T.mul(small, quad), T.mul(T.sub(1.0, small), lin)))


def tv_loss(img: Tensor) -> Tensor:
    """Mean of sqrt(|dh * dv| + eps) over adjacent-pixel differences."""
    _, h, w = img.shape
    if h < 2 or w < 2:
        raise DimensionError(f"tv needs H,W >= 2, got {h}x{w}")
    base = T.crop_spatial(img, 0, 0, h - 1, w - 1)
    dh = T.sub(base, T.crop_spatial(img, 1, 0, h - 1, w - 1))
    dv = T.sub(base, T.crop_spatial(img, 0, 1, h - 1, w - 1))
    return T.mean_all(T.sqrt(T.add(T.absolute(T.mul(dh, dv)), TV_EPS)))


def mse_loss(pred: Tensor, gt: Tensor) -> Tensor:
    _require_same_shape(pred, gt, "mse")
    return T.mean_all(T.square(T.sub(pred, gt)))


def brightness_map(img: Tensor) -> Tensor:
    """Luma as 0.299 R + 0.587 G + 0.114 B, shape 1xHxW."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"brightness_map expects 3xHxW, got {img.shape}")
    wr, wg, wb = BRIGHTNESS_WEIGHTS
    r = T.mul(T.slice_channels(img, 0, 1), wr)
    g = T.mul(T.slice_channels(img, 1, 2), wg)
    b = T.mul(T.slice_channels(img, 2, 3), wb)
    return T.add(T.add(r, g), b)


def l_dif(pred_k: Tensor, pred_k1: Tensor) -> Tensor:
    """Anti-flicker term: mean |maxpool(luma_k) - maxpool(luma_k+1)|."""
    _require_same_shape(pred_k, pred_k1, "l_dif")
    pa = T.maxpool2d(brightness_map(pred_k))
    pb = T.maxpool2d(brightness_map(pred_k1))
    return T.mean_all(T.absolute(T.sub(pa, pb)))


def l_self(pred_k: Tensor, pred_k1: Tensor, gt_k: Tensor, gt_k1: Tensor) -> Tensor:
    """Mean squared mismatch between enhanced and reference frame differences."""
    _require_same_shape(pred_k, pred_k1, "l_self")
    _require_same_shape(gt_k, gt_k1, "l_self")
    _require_same_shape(pred_k, gt_k, "l_self")
    return T.mean_all(T.square(T.sub(T.sub(pred_k1, pred_k), T.sub(gt_k1, gt_k))))


def stage1_loss(pred, gt, extractor, weights: LossWeights | None = None):
    """Perceptual + structural + smooth-L1 + weighted TV; returns (total, parts)."""
    w = weights or LossWeights()
    parts = {
        "perceptual": perceptual_loss(pred, gt, extractor),
        "ssim": ssim_loss(pred, gt),
        "smooth_l1": smooth_l1_loss(pred, gt),
        "tv": tv_loss(pred),
    }
    total = T.add(T.add(parts["perceptual"], parts["ssim"]),
                  T.add(parts["smooth_l1"], T.mul(parts["tv"], w.tv_weight)))
    return total, {k: v.item() for k, v in parts.items()}


def stage2_loss(pred, gt, extractor, weights: LossWeights | None = None):
    """Perceptual + structural + smooth-L1 + MSE regularization."""
    parts = {
        "perceptual": perceptual_loss(pred, gt, extractor),
        "ssim": ssim_loss(pred, gt),
        "smooth_l1": smooth_l1_loss(pred, gt),
        "mse": mse_loss(pred, gt),
    }
    total = T.add(T.add(parts["perceptual"], parts["ssim"]),
                  T.add(parts["smooth_l1"], parts["mse"]))
    return total, {k: v.item() for k, v in parts.items()}


def video_loss(pred_k, pred_k1, gt_k, gt_k1, extractor,
               weights: LossWeights | None = None):
    """alpha * l_dif + beta * l_self + the stage-1 composite over the pair."""
    w = weights or LossWeights(stage="video")
    s1_a, _ = stage1_loss(pred_k, gt_k, extractor, w)
    s1_b, _ = stage1_loss(pred_k1, gt_k1, extractor, w)
    stage1 = T.mul(T.add(s1_a, s1_b), 0.5)
    dif = l_dif(pred_k, pred_k1)
    self_sim = l_self(pred_k, pred_k1, gt_k, gt_k1)
    total = T.add(T.add(T.mul(dif, w.alpha), T.mul(self_sim, w.beta)), stage1)
    parts = {"l_dif": dif.item(), "l_self": self_sim.item(), "stage1": stage1.item()}
    return total, parts


def composite_loss(stage, pred, gt, extractor, weights=None,
                   pred_next=None, gt_next=None):
    """Dispatch on stage; the video stage requires the adjacent-frame pair."""
    stage = str(stage)
    if stage == "1":
        return stage1_loss(pred, gt, extractor, weights)
    if stage == "2":
        return stage2_loss(pred, gt, extractor, weights)
    if stage == "video":
        if pred_next is None or gt_next is None:
            raise ConfigError("video stage requires an adjacent frame pair")
        return video_loss(pred, pred_next, gt, gt_next, extractor, weights)
    raise ConfigError(f"unknown stage {stage!r}")
