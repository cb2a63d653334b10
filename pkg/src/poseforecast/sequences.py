"""Penn-Action-style video annotations -> fixed-length forecasting samples.

Frame indices are 1-based everywhere they are serialised.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import NUM_JOINTS, Pose2D

SEQ_LEN = 16


class AnnotationError(ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass
class Frame:
    image: str
    box: tuple
    pose: Pose2D


@dataclass
class VideoAnnotation:
    video_id: str
    action: str
    frames: list

    def __post_init__(self):
        if not self.frames:
            raise AnnotationError(f"video {self.video_id} has no frames")
        for f in self.frames:
            x1, y1, x2, y2 = f.box
            if not (x1 < x2 and y1 < y2):
                raise AnnotationError(f"video {self.video_id}: invalid box {f.box}")
            if len(f.pose.points) != NUM_JOINTS:
                raise AnnotationError(f"video {self.video_id}: expected {NUM_JOINTS} keypoints")

    @property
    def num_frames(self):
        return len(self.frames)


@dataclass
class SequenceSample:
    video_id: str
    action: str
    input_frame_index: int
    crop_box: tuple
    frame_indices: list
    targets: list  # SEQ_LEN Pose2D in crop coordinates
    image: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "action": self.action,
            "input_frame_index": self.input_frame_index,
            "crop_box": [float(c) for c in self.crop_box],
            "frame_indices": list(self.frame_indices),
            "targets": [p.to_triples() for p in self.targets],
            "image": self.image,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "SequenceSample":
        return cls(
            video_id=rec["video_id"],
            action=rec.get("action", "unknown"),
            input_frame_index=int(rec["input_frame_index"]),
            crop_box=tuple(rec["crop_box"]),
            frame_indices=[int(i) for i in rec["frame_indices"]],
            targets=[Pose2D.from_triples(t) for t in rec["targets"]],
            image=rec.get("image", ""),
        )

    @property
    def crop_size(self):
        x1, y1, x2, y2 = self.crop_box
        return y2 - y1, x2 - x1


def load_annotation(path) -> VideoAnnotation:
    path = Path(path)
    try:
        rec = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise AnnotationError(e.msg, path, e.lineno) from e
    try:
        frames = []
        for fr in rec["frames"]:
            image = fr.get("image", "")
            if image and not Path(image).is_absolute():
                image = str(path.parent / image)
            frames.append(Frame(image, tuple(float(c) for c in fr["box"]), Pose2D.from_triples(fr["keypoints"])))
        return VideoAnnotation(str(rec["video_id"]), str(rec.get("action", "unknown")), frames)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, AnnotationError):
            raise
        raise AnnotationError(f"malformed annotation ({e})", path) from e


def save_annotation(path, video: VideoAnnotation, relative_to=None) -> None:
    frames = []
    for fr in video.frames:
        image = fr.image
        if relative_to is not None and image:
            image = os.path.relpath(image, relative_to)
        frames.append({"image": image, "box": list(fr.box), "keypoints": fr.pose.to_triples()})
    Path(path).write_text(json.dumps({"video_id": video.video_id, "action": video.action, "frames": frames}))


def union_crop(video: VideoAnnotation) -> tuple:
    boxes = np.array([f.box for f in video.frames], dtype=np.float64)
    return (boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max())


def to_crop(pose: Pose2D, crop_box) -> Pose2D:
    offset = np.array(crop_box[:2])
    return Pose2D(np.where(pose.visible[:, None], pose.points - offset, 0.0), pose.visible)


def from_crop(pose: Pose2D, crop_box) -> Pose2D:
    offset = np.array(crop_box[:2])
    return Pose2D(np.where(pose.visible[:, None], pose.points + offset, 0.0), pose.visible)


def sequence_indices(num_frames: int, start: int, length: int = SEQ_LEN) -> list:
    """1-based frame indices for a sequence starting at ``start``.

    The stride is ``(K-1)/(length-1)``; each offset is rounded half-up in
    exact integer arithmetic and clipped at the last frame.
    """
    k = num_frames
    if k < 1 or not 1 <= start <= k:
        raise ValueError(f"invalid start {start} for a {k}-frame video")
    denom = length - 1
    return [min(k, start + (2 * (k - 1) * i + denom) // (2 * denom)) for i in range(length)]


def generate_sequences(video: VideoAnnotation) -> list:
    crop = union_crop(video)
    k = video.num_frames
    out = []
    for s in range(1, k + 1):
        idx = sequence_indices(k, s)
        out.append(SequenceSample(
            video_id=video.video_id,
            action=video.action,
            input_frame_index=s,
            crop_box=crop,
            frame_indices=idx,
            targets=[to_crop(video.frames[i - 1].pose, crop) for i in idx],
            image=video.frames[s - 1].image,
        ))
    return out


def split(videos: list, fraction: float, seed: int) -> tuple[list, list]:
    """Video-level shuffle split; returns ``(train, val)``."""
    if not videos:
        raise ValueError("cannot split an empty video list")
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    order = sorted(videos, key=lambda v: v.video_id)
    perm = np.random.default_rng(seed).permutation(len(order))
    n_train = int(round(fraction * len(order)))
    train = [order[i] for i in perm[:n_train]]
    val = [order[i] for i in perm[n_train:]]
    return train, val


def write_samples(path, samples) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json()) + "\n")


def read_samples(path) -> list:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(SequenceSample.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise AnnotationError(f"bad sample record ({e})", path, lineno) from e
    return out


def letterbox(crop_box, size: int):
    """Uniform crop -> network-grid mapping: ``grid = (crop_xy + offset) * scale``.

    The crop is centred in a square of side ``max(h, w)`` before resizing.
    """
    x1, y1, x2, y2 = crop_box
    w, h = x2 - x1, y2 - y1
    side = max(w, h)
    offset = np.array([(side - w) / 2.0, (side - h) / 2.0])
    return size / side, offset


def crop_to_grid(points, crop_box, size: int):
    scale, offset = letterbox(crop_box, size)
    return (np.asarray(points) + offset) * scale


def grid_to_crop(points, crop_box, size: int):
    scale, offset = letterbox(crop_box, size)
    return np.asarray(points) / scale - offset
