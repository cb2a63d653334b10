"""Three-stage training: hourglass pre-training, converter on synthetic data, full network with a curriculum."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import imaging
from .checkpoint import Checkpoint, StageOrderError, from_models, module_hash
from .converter import ConverterConfig, SkeletonConverter, converter_loss, reprojection_loss
from .forecaster import HourglassConfig, RecurrentHourglass, heatmap_loss
from .heatmaps import render_batch
from .sequences import SEQ_LEN, crop_to_grid

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "stage", "seq_len", "train_loss", "val_loss")


class TrainingError(RuntimeError):
    pass


class NonFiniteGradientError(TrainingError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2.5e-4
    decay: float = 0.99
    eps: float = 1e-8
    batch: int = 8
    epochs: int = 20
    seed: int = 0
    sigma: float = 1.0
    patience: int = 5
    min_delta: float = 0.005
    max_epochs_per_length: int = 60
    curriculum: tuple = (2, 4, 8, 16)
    lambda_reproj: float = 1e-6
    reproj_through_converter: bool = False
    loss_scales: tuple = (1000.0, 1000.0, 1000.0)

    @classmethod
    def for_stage(cls, stage: int, **overrides) -> "TrainConfig":
        base = cls(lr=1e-3, batch=64, epochs=50) if stage == 2 else cls()
        return replace(base, **overrides)


# ---------------------------------------------------------------- rmsprop


@dataclass
class OptimizerState:
    acc: dict = field(default_factory=dict)
    step: int = 0


def rmsprop_update(params: dict, grads: dict, state: OptimizerState, lr: float, decay: float = 0.99,
                   eps: float = 1e-8) -> tuple[dict, OptimizerState]:
    """Reference rmsprop step on numpy arrays; returns new params and state."""
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(f"non-finite gradient in {bad} at step {state.step}")
    new_params, new_acc = {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if k in state.acc and np.shape(state.acc[k]) != np.shape(p):
            raise ValueError(f"accumulator shape mismatch for {k}")
        acc = decay * state.acc.get(k, np.zeros_like(g)) + (1 - decay) * g * g
        new_acc[k] = acc
        new_params[k] = p - lr * g / (np.sqrt(acc) + eps)
    return new_params, OptimizerState(new_acc, state.step + 1)


def make_optimizer(parameters, cfg: TrainConfig) -> torch.optim.Optimizer:
    # torch's RMSprop with momentum=0, centered=False is exactly rmsprop_update
    return torch.optim.RMSprop(parameters, lr=cfg.lr, alpha=cfg.decay, eps=cfg.eps)


def check_gradients(named_parameters, step: int) -> None:
    bad = [n for n, p in named_parameters if p.grad is not None and not torch.isfinite(p.grad).all()]
    if bad:
        raise NonFiniteGradientError(f"non-finite gradient at step {step} in: {', '.join(bad[:8])}")


# ---------------------------------------------------------------- curriculum


@dataclass
class CurriculumState:
    lengths: tuple = (2, 4, 8, 16)
    stage_index: int = 0
    stale_epochs: int = 0
    epochs_at_length: int = 0
    best_val: float = math.inf
    schedule: list = field(default_factory=list)

    def __post_init__(self):
        if not self.schedule:
            self.schedule = [self.length]

    @property
    def length(self) -> int:
        return self.lengths[self.stage_index]

    @property
    def at_last(self) -> bool:
        return self.stage_index == len(self.lengths) - 1

    def converged(self, val_loss: float, patience: int, min_delta: float) -> bool:
        """Record one epoch; True once ``patience`` epochs pass without a relative gain above ``min_delta``."""
        self.epochs_at_length += 1
        if val_loss < self.best_val * (1 - min_delta):
            self.best_val = val_loss
            self.stale_epochs = 0
        else:
            self.best_val = min(self.best_val, val_loss)
            self.stale_epochs += 1
        return self.stale_epochs >= patience

    def advance(self) -> bool:
        if self.at_last:
            return False
        self.stage_index += 1
        self.stale_epochs = 0
        self.epochs_at_length = 0
        self.best_val = math.inf
        self.schedule.append(self.length)
        return True


# ---------------------------------------------------------------- data


@dataclass
class SequenceData:
    """Network-ready tensors for a list of sequence samples."""

    inputs: torch.Tensor      # (M, 3, S, S)
    points: np.ndarray        # (M, T, N, 2) grid coordinates
    visible: np.ndarray       # (M, T, N)

    @classmethod
    def from_samples(cls, samples, size: int) -> "SequenceData":
        if not samples:
            raise TrainingError("empty dataset")
        inputs, points, visible = [], [], []
        for s in samples:
            inputs.append(imaging.load_input(s.image, s.crop_box, size))
            points.append([crop_to_grid(p.points, s.crop_box, size) for p in s.targets])
            visible.append([p.visible for p in s.targets])
        return cls(torch.from_numpy(np.stack(inputs)), np.asarray(points), np.asarray(visible, dtype=bool))

    def __len__(self):
        return len(self.inputs)

    def targets(self, idx, steps: int, size: int, sigma: float):
        maps = render_batch(self.points[idx, :steps].reshape(-1, *self.points.shape[2:]),
                            self.visible[idx, :steps].reshape(-1, self.visible.shape[2]), (size, size), sigma)
        maps = maps.reshape(len(idx), steps, *maps.shape[1:]).transpose(1, 0, 2, 3, 4)
        vis = self.visible[idx, :steps].transpose(1, 0, 2)
        return torch.from_numpy(np.ascontiguousarray(maps)), torch.from_numpy(np.ascontiguousarray(vis))


def _batches(n: int, batch: int, seed: int, epoch: int):
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i:i + batch] for i in range(0, n, batch)]


def write_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.9g}" if isinstance(r[k], float) else r[k]) for k in LOG_FIELDS})


# ---------------------------------------------------------------- stage 1


def train_hourglass(train: SequenceData, cfg: TrainConfig, model_cfg: HourglassConfig | None = None,
                    val: SequenceData | None = None, model: RecurrentHourglass | None = None):
    """Single-frame heatmap regression of the plain hourglass. Returns ``(model, checkpoint, log)``."""
    if train is None or len(train) == 0:
        raise TrainingError("empty dataset")
    torch.manual_seed(cfg.seed)
    model = model or RecurrentHourglass(model_cfg, seed=cfg.seed)
    size = model.config.input_resolution
    params = model.hourglass_parameters()
    opt = make_optimizer(params, cfg)
    val = val or train

    def loss_on(data, idx):
        maps, vis = data.targets(idx, 1, size, cfg.sigma)
        return heatmap_loss(model.forward_single(data.inputs[idx])[None], maps, vis)

    rows, step = [], 0
    for epoch in range(cfg.epochs):
        model.train()
        total, count = 0.0, 0
        for idx in _batches(len(train), cfg.batch, cfg.seed, epoch):
            opt.zero_grad()
            loss = loss_on(train, idx)
            loss.backward()
            check_gradients(model.named_parameters(), step)
            opt.step()
            step += 1
            total += loss.item() * len(idx)
            count += len(idx)
        val_loss = evaluate_loss(lambda idx: loss_on(val, idx), len(val), cfg.batch)
        rows.append({"step": step, "stage": 1, "seq_len": 1, "train_loss": total / count, "val_loss": val_loss})
        log.info("stage 1 epoch %d: train %.6g val %.6g", epoch, total / count, val_loss)
    return model, from_models(1, step, forecaster=model), rows


def evaluate_loss(fn, n: int, batch: int) -> float:
    with torch.no_grad():
        total = 0.0
        for i in range(0, n, batch):
            idx = np.arange(i, min(n, i + batch))
            total += fn(idx).item() * len(idx)
    return total / n


# ---------------------------------------------------------------- stage 2


@dataclass
class ConverterData:
    heatmaps: torch.Tensor   # (M, N, H, W)
    delta: torch.Tensor      # (M, N, 3)
    translation: torch.Tensor
    focal: torch.Tensor

    @classmethod
    def from_arrays(cls, maps, delta, translation, focal) -> "ConverterData":
        return cls(torch.as_tensor(maps, dtype=torch.float32), torch.as_tensor(delta, dtype=torch.float32),
                   torch.as_tensor(translation, dtype=torch.float32), torch.as_tensor(focal, dtype=torch.float32))

    def __len__(self):
        return len(self.heatmaps)

    def target(self, idx):
        return self.delta[idx], self.translation[idx], self.focal[idx]


def converter_val_loss(model: SkeletonConverter, data: ConverterData, cfg: TrainConfig) -> float:
    model.eval()
    return evaluate_loss(lambda idx: converter_loss(model(data.heatmaps[idx]), data.target(idx), cfg.loss_scales),
                         len(data), 256)


def predict_converter(model: SkeletonConverter, maps, batch: int = 256):
    model.eval()
    out = [[], [], []]
    with torch.no_grad():
        for i in range(0, len(maps), batch):
            for acc, v in zip(out, model(torch.as_tensor(maps[i:i + batch]))):
                acc.append(v)
    return tuple(torch.cat(v).numpy().astype(np.float64) for v in out)


def train_converter(train: ConverterData, cfg: TrainConfig, model_cfg: ConverterConfig | None = None,
                    val: ConverterData | None = None, dataset_hash: str | None = None):
    """Fit the converter on synthetic triples. Returns ``(model, checkpoint, log)``."""
    if train is None or len(train) == 0:
        raise TrainingError("synthetic dataset is empty")
    torch.manual_seed(cfg.seed)
    model = SkeletonConverter(model_cfg, seed=cfg.seed)
    opt = make_optimizer(model.parameters(), cfg)
    val = val or train
    rows, step = [], 0
    rows.append({"step": 0, "stage": 2, "seq_len": 1, "train_loss": converter_val_loss(model, train, cfg),
                 "val_loss": converter_val_loss(model, val, cfg)})
    for epoch in range(cfg.epochs):
        model.train()
        total = 0.0
        for idx in _batches(len(train), cfg.batch, cfg.seed, epoch):
            opt.zero_grad()
            loss = converter_loss(model(train.heatmaps[idx]), train.target(idx), cfg.loss_scales)
            loss.backward()
            check_gradients(model.named_parameters(), step)
            opt.step()
            step += 1
            total += loss.item() * len(idx)
        val_loss = converter_val_loss(model, val, cfg)
        rows.append({"step": step, "stage": 2, "seq_len": 1, "train_loss": total / len(train), "val_loss": val_loss})
        log.info("stage 2 epoch %d: train %.6g val %.6g", epoch, total / len(train), val_loss)
    meta = {"synthetic_manifest_hash": dataset_hash} if dataset_hash else {}
    return model, from_models(2, step, converter=model, metadata=meta), rows


# ---------------------------------------------------------------- stage 3


def _require(ckpt: Checkpoint | None, stage: int, what: str) -> Checkpoint:
    if ckpt is None:
        raise StageOrderError(f"stage 3 needs a stage-{stage} {what} checkpoint")
    if ckpt.stage != stage and not (stage == 1 and ckpt.stage == 3):
        raise StageOrderError(f"expected a stage-{stage} {what} checkpoint, got stage {ckpt.stage}")
    return ckpt


def full_loss(model, converter, data: SequenceData, idx, steps: int, cfg: TrainConfig, train: bool):
    size = model.config.input_resolution
    maps, vis = data.targets(idx, steps, size, cfg.sigma)
    outs = model.rollout(data.inputs[idx], steps)
    hm = heatmap_loss(outs, maps, vis)
    if cfg.lambda_reproj == 0:
        return hm, hm.detach(), torch.zeros(())
    image = converter.config.image_size
    canvas = torch.from_numpy(data.points[idx, :steps].transpose(1, 0, 2, 3) * (image / size))
    stacked = torch.stack(outs)
    flat = stacked.reshape(-1, *stacked.shape[2:])
    grad_ok = train and cfg.reproj_through_converter
    with torch.set_grad_enabled(grad_ok and torch.is_grad_enabled()):
        pred = converter(flat if grad_ok else flat.detach())
        rp = reprojection_loss(pred, canvas.reshape(-1, *canvas.shape[2:]), vis.reshape(-1, vis.shape[-1]),
                               (image, image), clamp=True)
    return hm + cfg.lambda_reproj * rp, hm.detach(), rp.detach()


def train_full(train: SequenceData, hourglass_ckpt: Checkpoint | None, converter_ckpt: Checkpoint | None,
               cfg: TrainConfig, val: SequenceData | None = None, stop_at=None):
    """Curriculum training of the recurrent hourglass with a frozen converter.

    The sequence length starts at the first curriculum entry and doubles
    each time the validation loss converges (or the per-length epoch cap is
    hit). Returns ``(model, converter, checkpoint, log)``.
    """
    hourglass_ckpt = _require(hourglass_ckpt, 1, "hourglass")
    converter_ckpt = _require(converter_ckpt, 2, "converter")
    if train is None or len(train) == 0:
        raise TrainingError("empty dataset")
    torch.manual_seed(cfg.seed)
    model = hourglass_ckpt.load_models()["forecaster"]
    converter = converter_ckpt.load_models()["converter"]
    for p in converter.parameters():
        p.requires_grad_(False)
    converter.eval()
    frozen = module_hash(converter)
    opt = make_optimizer(model.parameters(), cfg)
    val = val or train
    cur = CurriculumState(tuple(cfg.curriculum))
    rows, step, epoch = [], 0, 0
    while True:
        model.train()
        total = 0.0
        for idx in _batches(len(train), cfg.batch, cfg.seed, epoch):
            opt.zero_grad()
            loss, _, _ = full_loss(model, converter, train, idx, cur.length, cfg, train=True)
            loss.backward()
            check_gradients(model.named_parameters(), step)
            opt.step()
            step += 1
            total += loss.item() * len(idx)
        model.eval()
        val_loss = evaluate_loss(lambda i: full_loss(model, converter, val, i, cur.length, cfg, False)[0],
                                 len(val), cfg.batch)
        rows.append({"step": step, "stage": 3, "seq_len": cur.length, "train_loss": total / len(train),
                     "val_loss": val_loss})
        log.info("stage 3 epoch %d len %d: train %.6g val %.6g", epoch, cur.length, total / len(train), val_loss)
        epoch += 1
        done = cur.converged(val_loss, cfg.patience, cfg.min_delta) or cur.epochs_at_length >= cfg.max_epochs_per_length
        if stop_at is not None and stop_at(cur, val_loss):
            done = True
        if done and not cur.advance():
            break
    if module_hash(converter) != frozen:
        raise TrainingError("converter parameters changed during stage 3")
    meta = {"curriculum_schedule": cur.schedule, "converter_hash": frozen}
    return model, converter, from_models(3, step, forecaster=model, converter=converter, metadata=meta), rows


def forecast_heatmaps(model: RecurrentHourglass, inputs: torch.Tensor, horizon: int = SEQ_LEN, batch: int = 16):
    """Roll out in eval mode; returns numpy ``(M, T, N, H, W)``."""
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(inputs), batch):
            out.append(torch.stack(model.rollout(inputs[i:i + batch], horizon), dim=1).numpy())
    return np.concatenate(out)


def write_checkpoint(ckpt: Checkpoint, directory, rows, cfg: TrainConfig | None = None) -> None:
    directory = Path(directory)
    ckpt.save(directory)
    write_log(directory / "log.csv", rows)
