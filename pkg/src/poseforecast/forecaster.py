"""Recurrent hourglass for 2D pose sequence forecasting.

The encoder reduces the input image to a low-resolution neck and keeps one
skip feature map before every pooling step. A 1x1 convolutional LSTM sits on
the neck and on every skip path. Each LSTM output is added to a residual
anchor: the encoder features of the first frame, so with zero LSTM weights
every timestep reproduces the plain hourglass estimate. After the first
frame the LSTM inputs are zero tensors.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConfigError(ValueError):
    pass


@dataclass
class HourglassConfig:
    input_resolution: int = 64
    in_channels: int = 3
    channels: list = field(default_factory=lambda: [32, 64, 128])
    n_keypoints: int = 13

    @property
    def num_scales(self):
        return len(self.channels)

    @property
    def neck_resolution(self):
        return self.input_resolution // 2**self.num_scales

    def validate(self):
        if self.input_resolution % 2**self.num_scales:
            raise ConfigError("input resolution must be divisible by 2**num_scales")
        if self.num_scales < 1:
            raise ConfigError("need at least one scale")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def fan_in_uniform_(module: nn.Module, generator: torch.Generator) -> None:
    for name, p in module.named_parameters():
        if p.dim() > 1:
            fan_in = p[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
        else:
            bound = 0.0
        with torch.no_grad():
            if bound == 0.0:
                p.zero_()
            else:
                p.copy_(torch.rand(p.shape, generator=generator, dtype=p.dtype) * 2 * bound - bound)


class ConvBlock(nn.Sequential):
    def __init__(self, cin, cout):
        super().__init__(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.ReLU(),
        )


class ConvLSTMCell(nn.Module):
    """LSTM with 1x1 convolutions in place of the fully-connected gate transforms."""

    def __init__(self, channels: int, hidden: int | None = None):
        super().__init__()
        self.channels = channels
        self.hidden = hidden or channels
        self.input_gates = nn.Conv2d(channels, 4 * self.hidden, 1)
        self.hidden_gates = nn.Conv2d(self.hidden, 4 * self.hidden, 1, bias=False)
        self.project = None if self.hidden == channels else nn.Conv2d(self.hidden, channels, 1, bias=False)

    def zero_state(self, x: torch.Tensor):
        b, _, h, w = x.shape
        z = x.new_zeros(b, self.hidden, h, w)
        return z, z

    def forward(self, x, state):
        c, h = state
        gates = self.input_gates(x) + self.hidden_gates(h)
        i, f, g, o = gates.chunk(4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        out = h if self.project is None else self.project(h)
        return (c, h), out


class RecurrentHourglass(nn.Module):
    def __init__(self, config: HourglassConfig = None, seed: int = 0):
        super().__init__()
        config = config or HourglassConfig()
        config.validate()
        self.config = config
        ch = config.channels
        self.stem = ConvBlock(config.in_channels, ch[0])
        self.down = nn.ModuleList(ConvBlock(ch[i - 1], ch[i]) for i in range(1, len(ch)))
        self.neck = ConvBlock(ch[-1], ch[-1])
        self.up = nn.ModuleList(ConvBlock(ch[i], ch[i - 1]) for i in range(len(ch) - 1, 0, -1))
        self.head = nn.Sequential(ConvBlock(ch[0], ch[0]), nn.Conv2d(ch[0], config.n_keypoints, 1))
        # index 0..S-1 are skip sites (fine to coarse), index S is the neck
        self.rnn = nn.ModuleList([ConvLSTMCell(c) for c in ch] + [ConvLSTMCell(ch[-1])])
        fan_in_uniform_(self, torch.Generator().manual_seed(seed))

    def zero_lstm_(self):
        with torch.no_grad():
            for p in self.rnn.parameters():
                p.zero_()
        return self

    def encode(self, x):
        res = self.config.input_resolution
        if x.shape[1:] != (self.config.in_channels, res, res):
            raise ConfigError(f"expected input (B, {self.config.in_channels}, {res}, {res}), got {tuple(x.shape)}")
        skips = []
        h = self.stem(x)
        skips.append(h)
        for block in self.down:
            h = block(F.max_pool2d(h, 2))
            skips.append(h)
        neck = self.neck(F.max_pool2d(h, 2))
        return neck, skips

    def decode(self, neck, skips):
        h = neck
        for block, skip in zip(self.up, reversed(skips[1:])):
            h = F.interpolate(h, scale_factor=2, mode="nearest") + skip
            h = block(h)
        h = F.interpolate(h, scale_factor=2, mode="nearest") + skips[0]
        return self.head(h)

    def forward_single(self, x):
        """Plain (non-recurrent) hourglass forward."""
        neck, skips = self.encode(x)
        return self.decode(neck, skips)

    def initial_state(self, neck, skips):
        return [cell.zero_state(f) for cell, f in zip(self.rnn, list(skips) + [neck])]

    def rnn_step(self, site: int, state, inputs, residual=None):
        """One LSTM step at ``site``; output is ``residual + lstm_output``.

        ``residual`` defaults to ``inputs``.
        """
        if residual is None:
            residual = inputs
        state, out = self.rnn[site](inputs, state)
        return state, residual + out

    def rollout(self, x, horizon: int, video: torch.Tensor | None = None):
        """Heatmaps for ``horizon`` steps as a list of ``(B, N, H, W)`` tensors.

        With ``video`` given as ``(T, B, C, H, W)`` the encoder runs on every
        frame instead of feeding zeros after the first one.
        """
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        neck, skips = self.encode(x)
        anchors = list(skips) + [neck]
        state = self.initial_state(neck, skips)
        outputs = []
        for t in range(horizon):
            if t == 0:
                inputs = anchors
            elif video is not None:
                vneck, vskips = self.encode(video[t])
                inputs = anchors = list(vskips) + [vneck]
            else:
                inputs = [torch.zeros_like(a) for a in anchors]
            feats = []
            for site in range(len(anchors)):
                state[site], out = self.rnn_step(site, state[site], inputs[site], anchors[site])
                feats.append(out)
            outputs.append(self.decode(feats[-1], feats[:-1]))
        return outputs

    def lstm_parameters(self):
        return list(self.rnn.parameters())

    def hourglass_parameters(self):
        ids = {id(p) for p in self.rnn.parameters()}
        return [p for p in self.parameters() if id(p) not in ids]


def heatmap_loss(predicted, target, visible=None):
    """Masked MSE over pixels, channels and timesteps.

    ``predicted``/``target`` are sequences (or stacked tensors) of
    ``(B, N, H, W)``; ``visible`` is ``(T, B, N)`` and masks whole channels.
    """
    if len(predicted) != len(target):
        raise ValueError(f"length mismatch: {len(predicted)} predicted vs {len(target)} target steps")
    pred = torch.stack(list(predicted)) if not torch.is_tensor(predicted) else predicted
    tgt = torch.stack(list(target)) if not torch.is_tensor(target) else target
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(tgt.shape)}")
    sq = (pred - tgt) ** 2
    if visible is None:
        return sq.mean()
    mask = torch.as_tensor(visible, dtype=sq.dtype, device=sq.device)[..., None, None]
    denom = mask.sum() * sq.shape[-1] * sq.shape[-2]
    if denom == 0:
        return sq.sum() * 0.0
    return (sq * mask).sum() / denom
