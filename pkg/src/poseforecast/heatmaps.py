"""Gaussian keypoint heatmaps: rendering, argmax decoding and raw float32 I/O."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose2D

DEFAULT_RESOLUTION = (64, 64)
DEFAULT_SIGMA = 1.0


@dataclass(frozen=True)
class HeatmapStack:
    maps: np.ndarray  # (N, H, W)
    sigma: float = DEFAULT_SIGMA

    @property
    def resolution(self):
        return self.maps.shape[1:]

    @property
    def n(self):
        return self.maps.shape[0]


def render(pose: Pose2D, resolution=DEFAULT_RESOLUTION, sigma: float = DEFAULT_SIGMA) -> HeatmapStack:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    h, w = resolution
    n = len(pose.points)
    # pixel (u, v) has its centre at integer coordinates
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    maps = np.zeros((n, h, w), dtype=np.float64)
    for k in range(n):
        if not pose.visible[k]:
            continue
        uk, vk = pose.points[k]
        gx = np.exp(-((us - uk) ** 2) / (2 * sigma**2))
        gy = np.exp(-((vs - vk) ** 2) / (2 * sigma**2))
        maps[k] = gy[:, None] * gx[None, :]
    return HeatmapStack(maps, sigma)


def render_batch(points, visible, resolution=DEFAULT_RESOLUTION, sigma=DEFAULT_SIGMA) -> np.ndarray:
    """Vectorised render for ``(B, N, 2)`` points; returns float32 ``(B, N, H, W)``."""
    points = np.asarray(points, dtype=np.float64)
    visible = np.asarray(visible, dtype=bool)
    h, w = resolution
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    gx = np.exp(-((us[None, None, :] - points[..., 0:1]) ** 2) / (2 * sigma**2))
    gy = np.exp(-((vs[None, None, :] - points[..., 1:2]) ** 2) / (2 * sigma**2))
    maps = gy[..., :, None] * gx[..., None, :]
    maps *= visible[..., None, None]
    return maps.astype(np.float32)


def decode(heatmaps) -> tuple[Pose2D, np.ndarray]:
    """Argmax per channel; ties go to the first pixel in row-major order.

    All-zero (or entirely non-positive) channels decode to ``(0, 0)`` with
    confidence 0 and are flagged not visible.
    """
    maps = heatmaps.maps if isinstance(heatmaps, HeatmapStack) else np.asarray(heatmaps)
    n, h, w = maps.shape
    flat = maps.reshape(n, -1)
    idx = np.argmax(flat, axis=1)
    conf = flat[np.arange(n), idx].astype(np.float64)
    empty = ~(conf > 0)
    pts = np.stack([idx % w, idx // w], axis=1).astype(np.float64)
    pts[empty] = 0.0
    conf[empty] = 0.0
    return Pose2D(pts, ~empty), conf


def decode_batch(maps) -> tuple[np.ndarray, np.ndarray]:
    """Argmax over ``(..., N, H, W)``; returns ``(..., N, 2)`` coords and confidences."""
    maps = np.asarray(maps)
    h, w = maps.shape[-2:]
    flat = maps.reshape(*maps.shape[:-2], h * w)
    idx = np.argmax(flat, axis=-1)
    conf = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0].astype(np.float64)
    pts = np.stack([idx % w, idx // w], axis=-1).astype(np.float64)
    return pts, conf


def save_heatmaps(path, stack: HeatmapStack) -> None:
    """Write ``<path>`` as little-endian float32 C-order plus ``<path>.json`` sidecar."""
    path = Path(path)
    maps = np.ascontiguousarray(stack.maps, dtype="<f4")
    path.write_bytes(maps.tobytes(order="C"))
    n, h, w = maps.shape
    sidecar = {"n": n, "h": h, "w": w, "sigma": float(stack.sigma)}
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar))


def load_heatmaps(path) -> HeatmapStack:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = meta["n"] * meta["h"] * meta["w"]
    if raw.size != expected:
        raise ValueError(f"{path}: expected {expected} floats, found {raw.size}")
    return HeatmapStack(raw.reshape(meta["n"], meta["h"], meta["w"]).astype(np.float32), meta["sigma"])
