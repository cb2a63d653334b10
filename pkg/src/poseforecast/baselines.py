"""Nearest-neighbour forecasting baselines.

Every training sequence start is indexed by its normalised first pose. A
query pose is matched by exact exhaustive search and the neighbour's whole
sequence is mapped into the query's frame by undoing the neighbour's
normalisation and applying the query's.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import Pose2D


class NoPoseError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizedPose:
    points: np.ndarray
    scale: float
    center: np.ndarray
    visible: np.ndarray


def normalize_pose(pose: Pose2D) -> NormalizedPose:
    """Zero mean and unit maximum distance from the centre, over visible joints."""
    vis = pose.visible
    if not vis.any():
        raise NoPoseError("pose has no visible keypoints")
    center = pose.points[vis].mean(axis=0)
    offsets = pose.points - center
    scale = float(np.sqrt((offsets[vis] ** 2).sum(axis=1)).max())
    if scale == 0.0:
        scale = 1.0
    pts = np.where(vis[:, None], offsets / scale, 0.0)
    return NormalizedPose(pts, scale, center, vis.copy())


def denormalize(npose: NormalizedPose) -> Pose2D:
    pts = np.where(npose.visible[:, None], npose.points * npose.scale + npose.center, 0.0)
    return Pose2D(pts, npose.visible)


def pose_distance(a: NormalizedPose, b: NormalizedPose) -> float:
    """Per-coordinate MSE over joints visible in both poses; ``inf`` if none are."""
    if a.points.shape != b.points.shape:
        raise ValueError("poses differ in keypoint count")
    return float(kernels.pose_distances(a.points, a.visible, b.points[None], b.visible[None])[0])


def transfer(sequence, source: NormalizedPose, dest: NormalizedPose) -> list:
    """Map poses from the frame normalised by ``source`` into the frame of ``dest``.

    Written as one affine map so that identical source and destination
    frames reproduce the input bitwise.
    """
    ratio = dest.scale / source.scale
    shift = dest.center - source.center * ratio
    out = []
    for pose in sequence:
        pts = np.where(pose.visible[:, None], pose.points * ratio + shift, 0.0)
        out.append(Pose2D(pts, pose.visible))
    return out


@dataclass
class IndexEntry:
    video_id: str
    start_frame: int
    action: str
    start: NormalizedPose
    sequence: list
    embedding: np.ndarray = field(default_factory=lambda: np.zeros(0))


class NNIndex:
    def __init__(self, entries: list):
        self.entries = list(entries)
        n = len(self.entries)
        if n:
            self.points = np.stack([e.start.points for e in self.entries])
            self.visible = np.stack([e.start.visible for e in self.entries])
        else:
            self.points = np.zeros((0, 0, 2))
            self.visible = np.zeros((0, 0), dtype=bool)
        self.actions = np.array([e.action for e in self.entries], dtype=object)
        dims = {len(e.embedding) for e in self.entries}
        self.embeddings = np.stack([e.embedding for e in self.entries]) if n and dims != {0} else None

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_samples(cls, samples, embed=None) -> "NNIndex":
        """Index :class:`~poseforecast.sequences.SequenceSample` objects.

        ``embed`` maps a sample to a scene-embedding vector (optional).
        """
        entries = []
        for s in samples:
            if not s.targets[0].visible.any():
                continue
            emb = np.asarray(embed(s), dtype=np.float64) if embed is not None else np.zeros(0)
            entries.append(IndexEntry(s.video_id, s.input_frame_index, s.action, normalize_pose(s.targets[0]),
                                      list(s.targets), emb))
        return cls(entries)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps({
                    "video_id": e.video_id,
                    "start_frame": e.start_frame,
                    "action": e.action,
                    "normalized_start": e.start.points.tolist(),
                    "visible": e.start.visible.astype(int).tolist(),
                    "center": e.start.center.tolist(),
                    "scale": e.start.scale,
                    "embedding": e.embedding.tolist(),
                    "sequence": [p.to_triples() for p in e.sequence],
                }) + "\n")

    @classmethod
    def load(cls, path) -> "NNIndex":
        entries = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            r = json.loads(line)
            start = NormalizedPose(np.asarray(r["normalized_start"], dtype=np.float64), float(r["scale"]),
                                   np.asarray(r["center"], dtype=np.float64), np.asarray(r["visible"], dtype=bool))
            entries.append(IndexEntry(r["video_id"], int(r["start_frame"]), r["action"], start,
                                      [Pose2D.from_triples(t) for t in r["sequence"]],
                                      np.asarray(r["embedding"], dtype=np.float64)))
        return cls(entries)

    def search(self, query: NormalizedPose, allowed=None) -> tuple[int, float]:
        if not len(self):
            raise ValueError("nearest-neighbour index is empty")
        return kernels.nearest(query.points, query.visible, self.points, self.visible, allowed)

    def embedding_mask(self, embedding, tau: float) -> np.ndarray:
        if self.embeddings is None:
            raise ValueError("index has no scene embeddings")
        d = np.sqrt(((self.embeddings - np.asarray(embedding, dtype=np.float64)[None]) ** 2).sum(axis=1))
        return d <= tau


def _forecast(index: NNIndex, query_pose: Pose2D, allowed, horizon: int):
    q = normalize_pose(query_pose)
    idx, _ = index.search(q, allowed)
    if idx < 0:
        raise ValueError("no candidate shares a visible keypoint with the query")
    entry = index.entries[idx]
    seq = entry.sequence[:horizon]
    seq = seq + [seq[-1]] * (horizon - len(seq))
    return transfer(seq, entry.start, q), idx


def nn_all(query_pose: Pose2D, index: NNIndex, horizon: int = 16) -> list:
    return _forecast(index, query_pose, None, horizon)[0]


def nn_context(query_pose: Pose2D, query_embedding, index: NNIndex, tau: float, horizon: int = 16) -> list:
    """``nn_all`` restricted to candidates whose scene embedding lies within ``tau``.

    Falls back to the unfiltered search when nothing passes the filter.
    """
    allowed = index.embedding_mask(query_embedding, tau)
    q = normalize_pose(query_pose)
    if not allowed.any() or index.search(q, allowed)[0] < 0:
        allowed = None
    return _forecast(index, query_pose, allowed, horizon)[0]


def nn_oracle(query_pose: Pose2D, action: str, index: NNIndex, horizon: int = 16) -> list:
    allowed = index.actions == action
    if not allowed.any():
        raise ValueError(f"no training sequences with action {action!r}")
    return _forecast(index, query_pose, allowed, horizon)[0]


def select_tau(candidates, score) -> float:
    """Pick the filtering threshold with the best validation ``score(tau)``; ties keep the first."""
    best_tau, best = None, -np.inf
    for tau in candidates:
        s = score(tau)
        if s > best:
            best_tau, best = tau, s
    return best_tau
