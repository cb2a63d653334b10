"""Synthetic (heatmaps -> delta, translation, focal) triples from a MoCap pool.

Each sample draws a pose and a random camera, projects the pose, and renders
heatmaps of the projection. Sample ``i`` of a dataset uses its own RNG stream
seeded from ``(seed, i)`` so output does not depend on generation order or
worker count.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .heatmaps import HeatmapStack, load_heatmaps, render, save_heatmaps

MAX_ATTEMPTS = 100


class SyntheticConfigError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CameraRanges:
    focal_min: float = 350.0
    focal_max: float = 1150.0
    depth_min: float = 2000.0
    depth_max: float = 8000.0
    elevation_deg: float = 20.0
    canvas: int = 256
    centre_fraction: float = 0.6

    def validate(self):
        if not (self.focal_min <= self.focal_max and self.depth_min <= self.depth_max):
            raise SyntheticConfigError("camera ranges must satisfy min <= max")
        if self.focal_min <= 0 or self.depth_min <= 0 or self.canvas <= 0:
            raise SyntheticConfigError("focal, depth and canvas must be positive")
        if not 0 < self.centre_fraction <= 1 or self.elevation_deg < 0:
            raise SyntheticConfigError("invalid centre fraction or elevation")


@dataclass
class MoCapPool:
    poses: list
    split: str = "train"

    def __post_init__(self):
        if not self.poses:
            raise SyntheticConfigError("MoCap pool is empty")
        n = len(self.poses[0].points)
        if any(len(p.points) != n for p in self.poses):
            raise SyntheticConfigError("pool skeletons disagree on joint count")


@dataclass(frozen=True)
class SyntheticSample:
    heatmaps: HeatmapStack
    target: geo.CenteredSkeleton
    focal: float
    pose2d: geo.Pose2D
    camera: geo.CameraParams
    pose_index: int


def sample_camera(rng: np.random.Generator, ranges: CameraRanges = CameraRanges()) -> geo.CameraParams:
    ranges.validate()
    focal = rng.uniform(ranges.focal_min, ranges.focal_max)
    azimuth = rng.uniform(0.0, 2 * np.pi)
    elev = np.deg2rad(rng.uniform(-ranges.elevation_deg, ranges.elevation_deg))
    rotation = geo.rotation_x(elev) @ geo.rotation_y(azimuth)
    depth = rng.uniform(ranges.depth_min, ranges.depth_max)
    # centroid projects within the central fraction of the canvas
    half = 0.5 * ranges.centre_fraction * ranges.canvas * depth / focal
    tx, ty = rng.uniform(-half, half, size=2)
    return geo.CameraParams(focal, ranges.canvas, ranges.canvas, rotation, np.array([tx, ty, depth]))


def sample_from_camera(pose_world: geo.Skeleton3D, camera: geo.CameraParams, resolution=(64, 64),
                       sigma: float = 1.0, pose_index: int = 0) -> SyntheticSample:
    cam_skel = geo.world_to_camera(pose_world.points, camera)
    target = geo.decompose(cam_skel)
    pose2d = geo.project(geo.compose(target), camera)
    scale = resolution[1] / camera.image_width, resolution[0] / camera.image_height
    grid = geo.Pose2D(pose2d.points * np.asarray(scale)[None, :], pose2d.visible)
    return SyntheticSample(render(grid, resolution, sigma), target, camera.focal, pose2d, camera, pose_index)


def make_sample(pool: MoCapPool, rng: np.random.Generator, ranges: CameraRanges = CameraRanges(),
                resolution=(64, 64), sigma: float = 1.0) -> SyntheticSample:
    for _ in range(MAX_ATTEMPTS):
        idx = int(rng.integers(len(pool.poses)))
        camera = sample_camera(rng, ranges)
        cam_pts = geo.world_to_camera(pool.poses[idx].points, camera).points
        if np.all(cam_pts[:, 2] > 0):
            return sample_from_camera(pool.poses[idx], camera, resolution, sigma, idx)
    raise GenerationError(f"{MAX_ATTEMPTS} consecutive draws had non-positive depth; check camera ranges")


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def make_dataset(pool: MoCapPool, count: int, seed: int, ranges: CameraRanges = CameraRanges(),
                 resolution=(64, 64), sigma: float = 1.0, workers: int = 1) -> list:
    if count < 1:
        raise SyntheticConfigError(f"count must be >= 1, got {count}")
    ranges.validate()

    def one(i):
        return make_sample(pool, sample_rng(seed, i), ranges, resolution, sigma)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, range(count)))
    return [one(i) for i in range(count)]


def save_dataset(directory, samples, seed: int, ranges: CameraRanges) -> str:
    """Persist as ``manifest.json`` + ``heatmaps/NNNNNN.f32`` + ``targets.jsonl``; returns a content hash."""
    directory = Path(directory)
    (directory / "heatmaps").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(samples):
        save_heatmaps(directory / "heatmaps" / f"{i:06d}.f32", s.heatmaps)
        lines.append(json.dumps({
            "delta": s.target.delta.tolist(),
            "translation": s.target.translation.tolist(),
            "focal": float(s.focal),
            "pose2d": s.pose2d.points.tolist(),
        }))
    (directory / "targets.jsonl").write_text("\n".join(lines) + "\n")
    first = samples[0].heatmaps
    manifest = {
        "count": len(samples),
        "seed": seed,
        "ranges": asdict(ranges),
        "sigma": float(first.sigma),
        "resolution": list(first.resolution),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory_hash(directory)


def directory_hash(directory, exclude=("resolved_config.txt",)) -> str:
    """Content hash of the dataset files; the run config (which names the output path) is left out."""
    h = hashlib.sha256()
    directory = Path(directory)
    for path in sorted(p for p in directory.rglob("*") if p.is_file() and p.name not in exclude):
        h.update(str(path.relative_to(directory)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def manifest_hash(directory) -> str:
    return hashlib.sha256((Path(directory) / "manifest.json").read_bytes()).hexdigest()


def load_dataset_arrays(directory):
    """Load a saved dataset as stacked arrays for training.

    Returns ``(heatmaps (M,N,H,W) float32, delta (M,N,3), translation (M,3), focal (M,), manifest)``.
    """
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    maps, deltas, trans, focals = [], [], [], []
    with open(directory / "targets.jsonl") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            maps.append(load_heatmaps(directory / "heatmaps" / f"{i:06d}.f32").maps)
            deltas.append(rec["delta"])
            trans.append(rec["translation"])
            focals.append(rec["focal"])
    return (np.stack(maps).astype(np.float32), np.asarray(deltas), np.asarray(trans),
            np.asarray(focals), manifest)


def samples_to_arrays(samples):
    maps = np.stack([s.heatmaps.maps for s in samples]).astype(np.float32)
    delta = np.stack([s.target.delta for s in samples])
    trans = np.stack([s.target.translation for s in samples])
    focal = np.array([s.focal for s in samples])
    return maps, delta, trans, focal
