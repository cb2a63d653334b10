"""Forecast 2D pose sequences (and their 3D lifts) and read/write prediction files.

Prediction files are JSONL. 2D lines carry ``video_id``, ``input_frame_index``,
``action``, ``crop_box`` and ``poses`` (T lists of 13 ``[x, y, visible]`` in
crop coordinates). 3D lines carry ``delta``/``translation``/``focal`` per step.
Baselines and the network write the same 2D schema.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .geometry import Pose2D
from .heatmaps import decode_batch
from .sequences import grid_to_crop


def heatmaps_to_poses(maps, crop_box, size: int) -> list:
    """``(T, N, H, W)`` heatmaps -> T poses in crop coordinates."""
    pts, conf = decode_batch(maps)
    out = []
    for p, c in zip(pts, conf):
        vis = c > 0
        crop = np.where(vis[:, None], grid_to_crop(p, crop_box, size), 0.0)
        out.append(Pose2D(crop, vis))
    return out


def lift(converter, maps, batch: int = 256):
    """Run the converter over ``(M, N, H, W)`` maps; returns numpy ``delta, translation, focal``."""
    converter.eval()
    outs = [[], [], []]
    with torch.no_grad():
        for i in range(0, len(maps), batch):
            for acc, v in zip(outs, converter(torch.as_tensor(np.asarray(maps[i:i + batch]), dtype=torch.float32))):
                acc.append(v.numpy().astype(np.float64))
    return tuple(np.concatenate(v) for v in outs)


def prediction_record(sample, poses) -> dict:
    return {
        "video_id": sample.video_id,
        "input_frame_index": sample.input_frame_index,
        "action": sample.action,
        "crop_box": [float(c) for c in sample.crop_box],
        "poses": [p.to_triples() for p in poses],
    }


def write_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def read_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"{path}:{lineno}: {e.msg}") from e
    return out


def read_predictions(path) -> dict:
    """Map ``(video_id, input_frame_index)`` -> list of :class:`Pose2D`."""
    out = {}
    for r in read_jsonl(path):
        out[(str(r["video_id"]), int(r["input_frame_index"]))] = [Pose2D.from_triples(p) for p in r["poses"]]
    return out


def record_3d(sample_key, delta, translation, focal) -> dict:
    video_id, start = sample_key
    return {
        "video_id": video_id,
        "input_frame_index": start,
        "delta": np.asarray(delta).tolist(),
        "translation": np.asarray(translation).tolist(),
        "focal": np.asarray(focal).tolist(),
    }


def save_forecasts(directory, samples, heatmaps, size: int, converter=None) -> tuple[Path, Path | None]:
    """Write ``forecast_2d.jsonl`` (and ``forecast_3d.jsonl`` with a converter) under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    recs2d, recs3d = [], []
    for s, maps in zip(samples, heatmaps):
        recs2d.append(prediction_record(s, heatmaps_to_poses(maps, s.crop_box, size)))
        if converter is not None:
            d, t, f = lift(converter, maps)
            recs3d.append(record_3d((s.video_id, s.input_frame_index), d, t, f))
    p2 = directory / "forecast_2d.jsonl"
    write_jsonl(p2, recs2d)
    p3 = None
    if converter is not None:
        p3 = directory / "forecast_3d.jsonl"
        write_jsonl(p3, recs3d)
    return p2, p3
