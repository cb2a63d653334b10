"""PCK per timestep (overall and per action) and MPJPE per joint."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import JOINT_NAMES

PCK_THRESHOLD = 0.05
CURVE_THRESHOLDS = tuple(round(0.01 * i, 2) for i in range(51))


def pck_counts(predictions, targets, crop_sizes, threshold: float):
    """Per-timestep ``(correct, total)`` counts over visible target joints.

    ``predictions``/``targets`` are per-sample lists of :class:`Pose2D`;
    ``crop_sizes`` holds ``(h, w)`` per sample and the radius is
    ``threshold * max(h, w)``.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not (len(predictions) == len(targets) == len(crop_sizes)):
        raise ValueError("predictions, targets and crop sizes are not aligned")
    steps = max((len(t) for t in targets), default=0)
    correct = np.zeros(steps, dtype=np.int64)
    total = np.zeros(steps, dtype=np.int64)
    for pred_seq, tgt_seq, (h, w) in zip(predictions, targets, crop_sizes):
        radius = threshold * max(h, w)
        for t, (p, g) in enumerate(zip(pred_seq, tgt_seq)):
            vis = g.visible
            d = np.sqrt(((p.points[vis] - g.points[vis]) ** 2).sum(axis=1))
            correct[t] += int((d <= radius).sum())
            total[t] += int(vis.sum())
    return correct, total


def _ratio(correct, total):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, correct / np.maximum(total, 1), np.nan)


def pck(predictions, targets, crop_sizes, threshold: float = PCK_THRESHOLD) -> np.ndarray:
    """PCK per timestep; timesteps without visible joints are NaN (missing)."""
    return _ratio(*pck_counts(predictions, targets, crop_sizes, threshold))


def pck_by_action(predictions, targets, crop_sizes, actions, threshold: float = PCK_THRESHOLD) -> dict:
    """PCK per action label; missing labels are grouped as ``"unknown"``."""
    groups = defaultdict(list)
    for i, a in enumerate(actions):
        groups[a or "unknown"].append(i)
    out = {}
    for a, idx in sorted(groups.items()):
        out[a] = pck([predictions[i] for i in idx], [targets[i] for i in idx],
                     [crop_sizes[i] for i in idx], threshold)
    return out


def pck_curve(predictions, targets, crop_sizes, thresholds=CURVE_THRESHOLDS) -> np.ndarray:
    """Rows are thresholds, columns timesteps. A zero threshold counts exact hits only."""
    rows = []
    for th in thresholds:
        rows.append(pck(predictions, targets, crop_sizes, th if th > 0 else np.nextafter(0, 1)))
    return np.array(rows)


def mpjpe(pred, target):
    """Per-joint mean Euclidean error of centred offsets, and its mean over joints.

    Accepts lists of :class:`CenteredSkeleton` or arrays shaped ``(M, N, 3)``.
    """
    p = np.asarray([getattr(s, "delta", s) for s in pred], dtype=np.float64)
    g = np.asarray([getattr(s, "delta", s) for s in target], dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"length/shape mismatch {p.shape} vs {g.shape}")
    per_joint = np.sqrt(((p - g) ** 2).sum(axis=-1)).mean(axis=0)
    return per_joint, float(per_joint.mean())


def _clean(values):
    return [None if (isinstance(v, float) and math.isnan(v)) else v for v in np.asarray(values, dtype=float).tolist()]


@dataclass
class EvalReport:
    pck: dict = field(default_factory=dict)
    pck_by_action: dict = field(default_factory=dict)
    mpjpe_per_joint: list | None = None
    mpjpe_mean: float | None = None
    counts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "pck": {f"{k:g}": _clean(v) for k, v in self.pck.items()},
            "pck_by_action": {a: _clean(v) for a, v in self.pck_by_action.items()},
            "counts": self.counts,
        }
        if self.mpjpe_per_joint is not None:
            out["mpjpe_mm"] = {"per_joint": dict(zip(JOINT_NAMES, _clean(self.mpjpe_per_joint))),
                               "average": self.mpjpe_mean}
        return out

    def write(self, directory, label: str = "model") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(json.dumps(self.to_json(), indent=2))
        if self.pck:
            write_pck_table(directory / "pck.csv", {f"{label}@{k:g}": v for k, v in self.pck.items()})
        if self.pck_by_action:
            write_pck_table(directory / "pck_by_action.csv", self.pck_by_action)
        if self.mpjpe_per_joint is not None:
            write_mpjpe_table(directory / "mpjpe.csv", {label: (self.mpjpe_per_joint, self.mpjpe_mean)})


def write_pck_table(path, rows: dict) -> None:
    """One row per method, columns ``t1..tT`` (values as fractions, blank when missing)."""
    width = max(len(v) for v in rows.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method"] + [f"t{i + 1}" for i in range(width)])
        for name, values in rows.items():
            w.writerow([name] + ["" if v is None else f"{v:.6f}" for v in _clean(values)])


def write_mpjpe_table(path, rows: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method"] + list(JOINT_NAMES) + ["avg"])
        for name, (per_joint, mean) in rows.items():
            w.writerow([name] + [f"{v:.3f}" for v in per_joint] + [f"{mean:.3f}"])


def write_pck_curve(path, curve, thresholds=CURVE_THRESHOLDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold"] + [f"t{i + 1}" for i in range(curve.shape[1])])
        for th, row in zip(thresholds, curve):
            w.writerow([f"{th:.2f}"] + ["" if v is None else f"{v:.6f}" for v in _clean(row)])


def plot_pck_curve(path, curve, thresholds=CURVE_THRESHOLDS, steps=(1, 4, 8, 16)) -> bool:
    """Render selected timesteps of a PCK curve; returns False when matplotlib is unavailable."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, ax = plt.subplots(figsize=(4, 3))
    for t in steps:
        if t <= curve.shape[1]:
            ax.plot(thresholds, curve[:, t - 1], label=f"t={t}")
    ax.set_xlabel("normalized distance")
    ax.set_ylabel("PCK")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True
