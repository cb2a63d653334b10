"""Heatmap -> 3D skeleton converter with separate heads for offsets, translation and focal.

Outputs are in millimetres (offsets, translation) and pixels (focal). Each
head regresses a value in units of its configured scale; the offsets are
re-centred to zero mean, and depth and focal go through a softplus so they
stay positive for any parameter values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .forecaster import ConfigError, fan_in_uniform_
from .geometry import project_torch


@dataclass
class ConverterConfig:
    n_keypoints: int = 13
    resolution: int = 64
    channels: list = field(default_factory=lambda: [32, 64])
    hidden: int = 256
    delta_scale: float = 1000.0
    translation_scale: float = 1000.0
    focal_scale: float = 1000.0
    depth_offset: float = 1000.0
    focal_floor: float = 1.0
    image_size: int = 256

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _head(cin, hidden, cout):
    return nn.Sequential(nn.Linear(cin, hidden), nn.ReLU(), nn.Linear(hidden, hidden), nn.ReLU(),
                         nn.Linear(hidden, cout))


class SkeletonConverter(nn.Module):
    def __init__(self, config: ConverterConfig = None, seed: int = 0):
        super().__init__()
        config = config or ConverterConfig()
        self.config = config
        layers, cin = [], config.n_keypoints
        # first pool brings the 64x64 maps to 32x32 before any convolution
        layers.append(nn.MaxPool2d(2))
        for c in config.channels:
            layers += [nn.Conv2d(cin, c, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2)]
            cin = c
        self.encoder = nn.Sequential(*layers, nn.Flatten())
        side = config.resolution // 2 ** (len(config.channels) + 1)
        if side < 1:
            raise ConfigError("converter resolution too small for its depth")
        feat = cin * side * side
        self.delta_head = _head(feat, config.hidden, 3 * config.n_keypoints)
        self.translation_head = _head(feat, config.hidden, 3)
        self.focal_head = _head(feat, config.hidden, 1)
        fan_in_uniform_(self, torch.Generator().manual_seed(seed))
        with torch.no_grad():
            # start focal near the middle of the usual range
            self.focal_head[-1].bias.fill_(0.5)

    def forward(self, heatmaps):
        """``(B, N, H, W)`` heatmaps -> delta ``(B, N, 3)``, translation ``(B, 3)``, focal ``(B,)``."""
        cfg = self.config
        if heatmaps.shape[1:] != (cfg.n_keypoints, cfg.resolution, cfg.resolution):
            raise ConfigError(f"expected heatmaps (B, {cfg.n_keypoints}, {cfg.resolution}, {cfg.resolution}), "
                              f"got {tuple(heatmaps.shape)}")
        z = self.encoder(heatmaps)
        delta = self.delta_head(z).view(-1, cfg.n_keypoints, 3) * cfg.delta_scale
        delta = delta - delta.mean(dim=1, keepdim=True)
        t = self.translation_head(z)
        depth = cfg.depth_offset + F.softplus(t[:, 2]) * cfg.translation_scale
        translation = torch.stack([t[:, 0] * cfg.translation_scale, t[:, 1] * cfg.translation_scale, depth], dim=1)
        # softplus underflows to 0 in float32, so keep a small floor
        focal = F.softplus(self.focal_head(z)[:, 0]) * cfg.focal_scale + cfg.focal_floor
        return delta, translation, focal


def converter_loss(pred, target, scales=(1.0, 1.0, 1.0), reduce=True):
    """Equal-weight sum of per-output MSEs; each output is divided by its scale first."""
    terms = []
    for p, t, s in zip(pred, target, scales):
        t = torch.as_tensor(t, dtype=p.dtype, device=p.device)
        terms.append(((p - t) / s).pow(2).mean())
    total = terms[0] + terms[1] + terms[2]
    return total if reduce else (total, terms)


def reprojection_loss(pred, target_points, visible, image_size, clamp: bool = True):
    """MSE between projected predicted joints and 2D targets over visible joints.

    The mean runs over both coordinates of every visible joint, so a uniform
    (3, 4) px error gives 12.5. ``target_points`` is ``(..., N, 2)``.
    """
    delta, translation, focal = pred
    points = delta + translation.unsqueeze(-2)
    uv, _ = project_torch(points, focal, image_size, clamp=clamp)
    target_points = torch.as_tensor(target_points, dtype=uv.dtype)
    mask = torch.as_tensor(visible, dtype=uv.dtype)[..., None]
    denom = mask.sum() * 2
    if denom == 0:
        return uv.sum() * 0.0
    return (((uv - target_points) ** 2) * mask).sum() / denom
