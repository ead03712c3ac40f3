"""Evaluation metrics: fidelity (PSNR, SSIM, RMSE, DeltaE) and temporal
stability (AB, MABD, TPSNR, TSSIM) over frame sequences.

All functions take numpy arrays shaped 3xHxW with values in [0, 1].
Sequences are lists of such frames with uniform shape.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DimensionError
from .losses import BRIGHTNESS_WEIGHTS, ssim_mean
from .tensor import Tensor

PSNR_CAP = 100.0

# sRGB (D65) to XYZ and the D65 white point.
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE = np.array([0.95047, 1.0, 1.08883])


def _check_pair(pred: np.ndarray, gt: np.ndarray, op: str) -> None:
    if pred.shape != gt.shape:
        raise DimensionError(f"{op}: shapes {pred.shape} and {gt.shape} differ")


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range, capped at 100."""
    _check_pair(pred, gt, "psnr")
    mse = float(np.mean((np.asarray(pred, dtype=np.float64) - gt) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def ssim_index(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean SSIM in [-1, 1]; shares the windowed kernel with the SSIM loss."""
    return ssim_mean(Tensor(np.asarray(pred, dtype=np.float64)),
                     Tensor(np.asarray(gt, dtype=np.float64))).item()


def rmse(pred: np.ndarray, gt: np.ndarray) -> float:
    """Root mean squared error on the 0..255 scale."""
    _check_pair(pred, gt, "rmse")
    diff = 255.0 * (np.asarray(pred, dtype=np.float64) - gt)
    return float(np.sqrt(np.mean(diff ** 2)))


def _srgb_to_lab(img: np.ndarray) -> np.ndarray:
    rgb = np.asarray(img, dtype=np.float64)
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = np.einsum("ij,jhw->ihw", _RGB_TO_XYZ, linear) / _WHITE[:, None, None]
    delta = 6.0 / 29.0
    f = np.where(xyz > delta ** 3, np.cbrt(xyz), xyz / (3 * delta ** 2) + 4.0 / 29.0)
    fx, fy, fz = f
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)])


def delta_e76(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-pixel CIE76 color difference (Euclidean distance in Lab)."""
    _check_pair(pred, gt, "delta_e76")
    if pred.ndim != 3 or pred.shape[0] != 3:
        raise DimensionError(f"delta_e76 expects 3xHxW, got {pred.shape}")
    diff = _srgb_to_lab(pred) - _srgb_to_lab(gt)
    return float(np.mean(np.sqrt((diff ** 2).sum(axis=0))))


def _luma(frame: np.ndarray) -> np.ndarray:
    wr, wg, wb = BRIGHTNESS_WEIGHTS
    return wr * frame[0] + wg * frame[1] + wb * frame[2]


def _check_sequences(pred_seq, gt_seq) -> None:
    if len(pred_seq) != len(gt_seq):
        raise DimensionError(
            f"sequence lengths differ: {len(pred_seq)} vs {len(gt_seq)}")
    if len(pred_seq) < 2:
        raise DimensionError("temporal metrics need at least 2 frames")
    shapes = {f.shape for f in pred_seq} | {f.shape for f in gt_seq}
    if len(shapes) != 1:
        raise DimensionError(f"frames are not uniform in shape: {sorted(shapes)}")


def mabd_vector(seq) -> np.ndarray:
    """Per-step mean absolute brightness difference, length K-1."""
    lumas = [_luma(f) for f in seq]
    return np.array([float(np.mean(np.abs(lumas[k + 1] - lumas[k])))
                     for k in range(len(seq) - 1)])


def temporal_metrics(pred_seq, gt_seq) -> dict:
    """AB, MABD, TPSNR and TSSIM for an enhanced sequence vs its reference.

    AB compares the temporal variance of per-frame mean brightness; MABD is
    the MSE between the two per-step brightness-difference vectors; TPSNR
    and TSSIM average PSNR/SSIM between adjacent enhanced frames.
    """
    _check_sequences(pred_seq, gt_seq)
    pred_means = np.array([float(_luma(f).mean()) for f in pred_seq])
    gt_means = np.array([float(_luma(f).mean()) for f in gt_seq])
    ab = abs(float(pred_means.var()) - float(gt_means.var()))
    mabd = float(np.mean((mabd_vector(pred_seq) - mabd_vector(gt_seq)) ** 2))
    tpsnr = float(np.mean([psnr(pred_seq[k], pred_seq[k + 1])
                           for k in range(len(pred_seq) - 1)]))
    tssim = float(np.mean([ssim_index(pred_seq[k], pred_seq[k + 1])
                           for k in range(len(pred_seq) - 1)]))
    return {"ab": ab, "mabd": mabd, "tpsnr": tpsnr, "tssim": tssim}


def format_report(metrics: dict) -> str:
    """Flat key=value text block, one metric per line."""
    lines = []
    for key, value in metrics.items():
        if isinstance(value, float):
            lines.append(f"{key}={value:.6f}")
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_report_json(metrics: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
