"""Image loading, letterboxed crops for the network input, and thumbnail embeddings."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .sequences import letterbox


def open_image(path) -> Image.Image:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
        if arr.dtype != np.uint8:
            arr = (np.clip(arr, 0, 1) * 255).round().astype(np.uint8)
        return Image.fromarray(arr)
    with Image.open(path) as im:
        return im.convert("RGB")


def crop_input(image: Image.Image, crop_box, size: int) -> np.ndarray:
    """Letterboxed crop resized to ``size``; returns float32 ``(3, size, size)`` in [0, 1]."""
    scale, offset = letterbox(crop_box, size)
    side = size / scale
    left = crop_box[0] - offset[0]
    top = crop_box[1] - offset[1]
    out = image.convert("RGB").transform((size, size), Image.Transform.EXTENT,
                                         (left, top, left + side, top + side),
                                         Image.Resampling.BILINEAR)
    return np.asarray(out, dtype=np.float32).transpose(2, 0, 1) / 255.0


def load_input(path, crop_box, size: int) -> np.ndarray:
    return crop_input(open_image(path), crop_box, size)


def thumbnail_embedding(image, size: int = 8) -> np.ndarray:
    """Default scene embedding: an 8x8 grayscale thumbnail flattened to a vector."""
    if not isinstance(image, Image.Image):
        image = open_image(image)
    thumb = image.convert("L").resize((size, size), Image.Resampling.BILINEAR)
    return np.asarray(thumb, dtype=np.float64).reshape(-1) / 255.0
