"""Dataset directory scanning for paired image and video layouts.

Image mode:  root/low/*.png and root/high/*.png with identical filenames.
Video mode:  root/low/<scene>/NNNN.png and root/high/<scene>/NNNN.png with
zero-padded, contiguous frame indices per scene.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError
from .png_io import load_png


@dataclass
class ImagePair:
    low: np.ndarray
    high: np.ndarray
    name: str


@dataclass
class FramePair:
    low_k: np.ndarray
    low_k1: np.ndarray
    high_k: np.ndarray
    high_k1: np.ndarray
    name: str


def _png_names(directory) -> list[str]:
    if not os.path.isdir(directory):
        raise DatasetError(f"missing directory: {directory}")
    return sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))


def scan_image_pairs(root) -> list[tuple[str, str, str]]:
    """Matched (low_path, high_path, name) triples, sorted by name."""
    low_dir = os.path.join(root, "low")
    high_dir = os.path.join(root, "high")
    low_names = _png_names(low_dir)
    high_names = set(_png_names(high_dir))
    if not low_names:
        raise DatasetError(f"no PNG files under {low_dir}")
    missing = [n for n in low_names if n not in high_names]
    if missing:
        raise DatasetError(f"low images without high counterpart: {missing[:5]}")
    return [(os.path.join(low_dir, n), os.path.join(high_dir, n), n) for n in low_names]


def load_image_pairs(root) -> list[ImagePair]:
    return [ImagePair(load_png(lp), load_png(hp), name)
            for lp, hp, name in scan_image_pairs(root)]


def _scene_frames(low_scene, high_scene, scene) -> list[tuple[str, str]]:
    low_names = _png_names(low_scene)
    if not low_names:
        raise DatasetError(f"scene {scene} has no frames")
    high_names = set(_png_names(high_scene))
    if set(low_names) - high_names:
        raise DatasetError(f"scene {scene}: low/high frame sets differ")
    try:
        indices = [int(os.path.splitext(n)[0]) for n in low_names]
    except ValueError as exc:
        raise DatasetError(f"scene {scene}: frame names must be integers") from exc
    indices.sort()
    if indices != list(range(indices[0], indices[0] + len(indices))):
        raise DatasetError(f"scene {scene}: frame indices are not contiguous")
    return [(os.path.join(low_scene, n), os.path.join(high_scene, n)) for n in low_names]


def scan_video_scenes(root) -> dict[str, list[tuple[str, str]]]:
    """Per-scene ordered (low_path, high_path) frame lists."""
    low_dir = os.path.join(root, "low")
    high_dir = os.path.join(root, "high")
    if not os.path.isdir(low_dir) or not os.path.isdir(high_dir):
        raise DatasetError(f"dataset root {root} needs low/ and high/ directories")
    scenes = sorted(d for d in os.listdir(low_dir)
                    if os.path.isdir(os.path.join(low_dir, d)))
    if not scenes:
        raise DatasetError(f"no scene directories under {low_dir}")
    out = {}
    for scene in scenes:
        out[scene] = _scene_frames(os.path.join(low_dir, scene),
                                   os.path.join(high_dir, scene), scene)
    return out


def load_video_scenes(root):
    """List of (scene, [(low, high), ...]) with frames decoded in order."""
    return [(scene, [(load_png(lp), load_png(hp)) for lp, hp in frames])
            for scene, frames in scan_video_scenes(root).items()]


def frame_pairs_from_scenes(scenes) -> list[FramePair]:
    """Adjacent-frame training samples from decoded scenes."""
    samples = []
    for scene, frames in scenes:
        if len(frames) < 2:
            raise DatasetError(f"scene {scene} needs at least 2 frames")
        for k in range(len(frames) - 1):
            samples.append(FramePair(frames[k][0], frames[k + 1][0],
                                     frames[k][1], frames[k + 1][1],
                                     f"{scene}/{k:04d}"))
    return samples
