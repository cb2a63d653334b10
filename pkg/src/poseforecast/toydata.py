"""Procedural Penn-Action-style toy corpus: stick-figure videos with annotations.

Each video plays one action from the body model, seen by a fixed camera in a
plain-coloured scene. Images are PNGs; annotations use the per-video JSON
layout read by :func:`poseforecast.sequences.load_annotation`.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import geometry as geo
from .body import ACTIONS, LIMBS, action_angles, articulate
from .sequences import Frame, VideoAnnotation, save_annotation

IMAGE_SIZE = 160
SCENES = ((40, 90, 40), (70, 70, 110), (120, 100, 60), (30, 30, 30))
RIGHT_COLOUR = (250, 80, 60)
LEFT_COLOUR = (60, 200, 250)
CENTRE_COLOUR = (240, 240, 120)


def _limb_colour(a, b):
    if a in (1, 3, 5, 7, 9, 11) and b in (1, 3, 5, 7, 9, 11):
        return RIGHT_COLOUR
    if a in (2, 4, 6, 8, 10, 12) and b in (2, 4, 6, 8, 10, 12):
        return LEFT_COLOUR
    return CENTRE_COLOUR


def draw_figure(points, scene=SCENES[0], size=IMAGE_SIZE) -> Image.Image:
    img = Image.new("RGB", (size, size), scene)
    draw = ImageDraw.Draw(img)
    for a, b in LIMBS:
        draw.line([tuple(points[a]), tuple(points[b])], fill=_limb_colour(a, b), width=3)
    hx, hy = points[0]
    draw.ellipse([hx - 6, hy - 6, hx + 6, hy + 6], outline=CENTRE_COLOUR, width=2)
    return img


def make_video(video_id: str, action: str, num_frames: int, rng: np.random.Generator,
               image_dir=None, occlusion: float = 0.03) -> tuple[VideoAnnotation, list]:
    """Build one video; images are written under ``image_dir`` when given."""
    focal = 220.0
    depth = rng.uniform(3800, 4600)
    azimuth = rng.uniform(-0.9, 0.9)
    camera = geo.CameraParams(focal, IMAGE_SIZE, IMAGE_SIZE, geo.rotation_y(azimuth),
                              np.array([rng.uniform(-300, 300), rng.uniform(-150, 150), depth]))
    scene = SCENES[int(rng.integers(len(SCENES)))]
    phase0 = rng.uniform(0.0, 0.1)
    frames, images = [], []
    for t in range(num_frames):
        phase = phase0 + (1 - phase0) * t / max(1, num_frames - 1)
        angles, root = action_angles(action, phase)
        joints = articulate(angles) + root
        pose = geo.project(geo.world_to_camera(joints, camera), camera)
        pts = pose.points
        inside = (pts[:, 0] >= 0) & (pts[:, 0] < IMAGE_SIZE) & (pts[:, 1] >= 0) & (pts[:, 1] < IMAGE_SIZE)
        visible = inside & (rng.random(len(pts)) >= occlusion)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.08 * (hi - lo) + 4
        box = (max(0.0, lo[0] - pad[0]), max(0.0, lo[1] - pad[1]),
               min(IMAGE_SIZE - 1.0, hi[0] + pad[0]), min(IMAGE_SIZE - 1.0, hi[1] + pad[1]))
        box = tuple(float(np.round(c, 2)) for c in box)
        img = draw_figure(pts, scene)
        path = ""
        if image_dir is not None:
            path = str(Path(image_dir) / f"{t + 1:06d}.png")
            img.save(path)
        images.append(img)
        frames.append(Frame(path, box, geo.Pose2D(np.where(visible[:, None], pts, 0.0), visible)))
    return VideoAnnotation(video_id, action, frames), images


def make_corpus(directory, n_videos: int = 12, seed: int = 0, min_frames: int = 17,
                max_frames: int = 36) -> list:
    """Write ``n_videos`` toy videos under ``directory``; returns annotation paths."""
    directory = Path(directory)
    (directory / "annotations").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_videos):
        action = ACTIONS[i % len(ACTIONS)]
        vid = f"{i:04d}"
        image_dir = directory / "frames" / vid
        image_dir.mkdir(parents=True, exist_ok=True)
        k = int(rng.integers(min_frames, max_frames + 1))
        video, _ = make_video(vid, action, k, rng, image_dir)
        path = directory / "annotations" / f"{vid}.json"
        save_annotation(path, video, relative_to=directory / "annotations")
        paths.append(path)
    return paths
