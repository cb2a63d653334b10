"""Checkpoint container: ``manifest.json`` plus one little-endian float32 blob.

The manifest holds the model configs, training stage, step count, free-form
metadata and an index of ``name -> (offset, shape)`` into ``tensors.bin``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .converter import ConverterConfig, SkeletonConverter
from .forecaster import HourglassConfig, RecurrentHourglass


class CheckpointError(ValueError):
    pass


class StageOrderError(RuntimeError):
    """A training stage was started without the checkpoints it builds on."""


@dataclass
class Checkpoint:
    stage: int
    step: int
    config: dict
    tensors: dict
    metadata: dict = field(default_factory=dict)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        index, offset = {}, 0
        with open(directory / "tensors.bin", "wb") as fh:
            for name in sorted(self.tensors):
                arr = np.ascontiguousarray(self.tensors[name], dtype="<f4")
                fh.write(arr.tobytes(order="C"))
                index[name] = {"offset": offset, "shape": list(arr.shape)}
                offset += arr.size
        manifest = {"stage": self.stage, "step": self.step, "config": self.config,
                    "metadata": self.metadata, "tensors": index}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        directory = Path(directory)
        try:
            manifest = json.loads((directory / "manifest.json").read_text())
        except FileNotFoundError as e:
            raise CheckpointError(f"no checkpoint manifest in {directory}") from e
        blob = np.frombuffer((directory / "tensors.bin").read_bytes(), dtype="<f4")
        tensors = {}
        for name, info in manifest["tensors"].items():
            n = int(np.prod(info["shape"])) if info["shape"] else 1
            start = info["offset"]
            if start + n > blob.size:
                raise CheckpointError(f"tensor {name} runs past the end of the blob")
            tensors[name] = blob[start:start + n].reshape(info["shape"]).astype(np.float32)
        ckpt = cls(manifest["stage"], manifest["step"], manifest["config"], tensors, manifest.get("metadata", {}))
        ckpt.validate()
        return ckpt

    def validate(self) -> None:
        for prefix, model in self.build_models().items():
            expected = {f"{prefix}.{k}": tuple(v.shape) for k, v in model.state_dict().items()}
            for name, shape in expected.items():
                if name not in self.tensors:
                    raise CheckpointError(f"checkpoint lacks tensor {name}")
                if tuple(self.tensors[name].shape) != shape:
                    raise CheckpointError(f"tensor {name} has shape {self.tensors[name].shape}, config expects {shape}")

    def build_models(self) -> dict:
        models = {}
        if "forecaster" in self.config:
            models["forecaster"] = RecurrentHourglass(HourglassConfig.from_dict(self.config["forecaster"]))
        if "converter" in self.config:
            models["converter"] = SkeletonConverter(ConverterConfig.from_dict(self.config["converter"]))
        return models

    def load_models(self) -> dict:
        models = self.build_models()
        for prefix, model in models.items():
            state = {k: torch.from_numpy(self.tensors[f"{prefix}.{k}"].copy()) for k in model.state_dict()}
            model.load_state_dict(state)
            model.eval()
        return models

    def tensor_hash(self, prefix: str = "") -> str:
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            if name.startswith(prefix):
                h.update(name.encode())
                h.update(np.ascontiguousarray(self.tensors[name], dtype="<f4").tobytes())
        return h.hexdigest()


def model_tensors(prefix: str, model: torch.nn.Module) -> dict:
    return {f"{prefix}.{k}": v.detach().cpu().numpy().astype(np.float32).copy() for k, v in model.state_dict().items()}


def from_models(stage: int, step: int, forecaster=None, converter=None, metadata=None) -> Checkpoint:
    config, tensors = {}, {}
    if forecaster is not None:
        config["forecaster"] = forecaster.config.to_dict()
        tensors.update(model_tensors("forecaster", forecaster))
    if converter is not None:
        config["converter"] = converter.config.to_dict()
        tensors.update(model_tensors("converter", converter))
    return Checkpoint(stage, step, config, tensors, dict(metadata or {}))


def module_hash(model: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for k, v in sorted(model.state_dict().items()):
        h.update(k.encode())
        h.update(v.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
