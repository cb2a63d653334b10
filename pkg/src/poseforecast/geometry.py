"""Skeleton representations, centroid decomposition and pinhole projection.

Layout is row-major: a skeleton with N joints is an ``(N, 3)`` array in
camera-frame millimetres; 2D poses are ``(N, 2)`` arrays in pixels.
Focal lengths are in pixels and the principal point is the image centre.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

JOINT_NAMES = (
    "head",
    "r_shoulder",
    "l_shoulder",
    "r_elbow",
    "l_elbow",
    "r_wrist",
    "l_wrist",
    "r_hip",
    "l_hip",
    "r_knee",
    "l_knee",
    "r_ankle",
    "l_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)

MIN_DEPTH_MM = 1.0


class GeometryError(ValueError):
    """Invalid skeleton or camera input."""


class DegenerateDepthError(GeometryError):
    """A point lies on or behind the camera plane."""


@dataclass(frozen=True)
class Skeleton3D:
    points: np.ndarray
    joint_names: tuple = JOINT_NAMES

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise GeometryError(f"expected (N, 3) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("skeleton has non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if len(self.joint_names) != len(pts):
            object.__setattr__(self, "joint_names", tuple(f"j{i}" for i in range(len(pts))))


@dataclass(frozen=True)
class CenteredSkeleton:
    delta: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class CameraParams:
    focal: float
    image_width: int
    image_height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    world_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.focal > 0):
            raise GeometryError(f"focal must be positive, got {self.focal}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise GeometryError("image size must be positive")
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3) or not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9, rtol=0):
            raise GeometryError("rotation must be a 3x3 orthonormal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "world_translation",
                           np.asarray(self.world_translation, dtype=np.float64).reshape(3))

    @property
    def principal_point(self):
        return self.image_width / 2.0, self.image_height / 2.0


@dataclass(frozen=True)
class Pose2D:
    points: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        vis = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(vis) != len(pts):
            raise GeometryError("points and visibility flags differ in length")
        if not np.all(np.isfinite(pts[vis])):
            raise GeometryError("visible keypoints must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "visible", vis)

    @classmethod
    def all_visible(cls, points) -> "Pose2D":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.ones(len(pts), dtype=bool))

    def to_triples(self) -> list:
        # invisible joints serialise as (0, 0, 0)
        out = []
        for (x, y), v in zip(self.points, self.visible):
            out.append([float(x), float(y), 1] if v else [0.0, 0.0, 0])
        return out

    @classmethod
    def from_triples(cls, triples) -> "Pose2D":
        arr = np.asarray(triples, dtype=np.float64).reshape(-1, 3)
        vis = arr[:, 2] > 0
        pts = np.where(vis[:, None], arr[:, :2], 0.0)
        return cls(pts, vis)


def decompose(skeleton: Skeleton3D) -> CenteredSkeleton:
    centroid = skeleton.points.mean(axis=0)
    return CenteredSkeleton(skeleton.points - centroid, centroid)


def compose(centered: CenteredSkeleton) -> Skeleton3D:
    return Skeleton3D(centered.delta + centered.translation[None, :])


def _check_depth(points):
    if np.any(points[:, 2] <= 0):
        raise DegenerateDepthError("all depths must be positive for projection")


def project(skeleton: Skeleton3D, camera: CameraParams) -> Pose2D:
    pts = skeleton.points
    _check_depth(pts)
    cx, cy = camera.principal_point
    uv = np.empty((len(pts), 2))
    uv[:, 0] = camera.focal * pts[:, 0] / pts[:, 2] + cx
    uv[:, 1] = camera.focal * pts[:, 1] / pts[:, 2] + cy
    return Pose2D.all_visible(uv)


def project_jacobian(skeleton: Skeleton3D, camera: CameraParams) -> np.ndarray:
    """Analytic Jacobian of the flattened ``(u0, v0, u1, v1, ...)`` output.

    Columns are the flattened points ``(x0, y0, z0, x1, ...)`` followed by
    the focal length, so the result has shape ``(2N, 3N + 1)``.
    """
    pts = skeleton.points
    _check_depth(pts)
    n = len(pts)
    f = camera.focal
    jac = np.zeros((2 * n, 3 * n + 1))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    rows = np.arange(n)
    jac[2 * rows, 3 * rows] = f / z
    jac[2 * rows, 3 * rows + 2] = -f * x / z**2
    jac[2 * rows + 1, 3 * rows + 1] = f / z
    jac[2 * rows + 1, 3 * rows + 2] = -f * y / z**2
    jac[2 * rows, -1] = x / z
    jac[2 * rows + 1, -1] = y / z
    return jac


def world_to_camera(points_world, camera: CameraParams) -> Skeleton3D:
    pts = np.asarray(points_world, dtype=np.float64)
    return Skeleton3D(pts @ camera.rotation.T + camera.world_translation[None, :])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project_torch(points: torch.Tensor, focal: torch.Tensor, image_size, clamp: bool = False):
    """Batched differentiable projection.

    ``points`` is ``(..., N, 3)`` and ``focal`` broadcasts against ``(...)``.
    With ``clamp`` depths are floored at 1 mm and a flag reports whether any
    clamping happened; without it a non-positive depth raises.
    """
    z = points[..., 2]
    if clamp:
        clamped = bool((z < MIN_DEPTH_MM).any())
        z = z.clamp(min=MIN_DEPTH_MM)
    else:
        if bool((z <= 0).any()):
            raise DegenerateDepthError("all depths must be positive for projection")
        clamped = False
    h, w = image_size
    f = focal.unsqueeze(-1)
    u = f * points[..., 0] / z + w / 2.0
    v = f * points[..., 1] / z + h / 2.0
    return torch.stack([u, v], dim=-1), clamped


def skeleton_to_json(skeleton: Skeleton3D) -> list:
    return [[float(c) for c in row] for row in skeleton.points]


def skeleton_from_json(rows) -> Skeleton3D:
    return Skeleton3D(np.asarray(rows, dtype=np.float64))


def load_skeletons(path) -> list:
    """Read a JSON list of skeletons, each a list of 13 ``[x, y, z]`` mm triples."""
    data = json.loads(Path(path).read_text())
    return [skeleton_from_json(s) for s in data]


def save_skeletons(path, skeletons) -> None:
    Path(path).write_text(json.dumps([skeleton_to_json(s) for s in skeletons]))
