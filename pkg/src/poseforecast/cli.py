"""``poseforecast`` command line: synth, prepare, train, forecast, eval, baseline (plus ``toy``).

Every command reads an optional flat config file (``--config`` or the
``POSEFORECAST_CONFIG`` env var), applies ``--set key=value`` overrides and
then explicit flags, and writes the resolved config into its output
directory. Exit codes: 0 ok, 2 config/input error, 3 stage-order error,
1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import baselines as bl
from . import body, evaluation as ev, imaging, inference, sequences as sq, synthetic as syn, toydata
from . import training as tr
from .checkpoint import Checkpoint, CheckpointError, StageOrderError
from .config import ENV_VAR, ConfigFileError, RunConfig
from .converter import ConverterConfig
from .forecaster import ConfigError, HourglassConfig
from .geometry import GeometryError, Pose2D

log = logging.getLogger("poseforecast")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_STAGE = 0, 1, 2, 3


class InputError(ValueError):
    pass


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.require("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _existing(cfg: RunConfig, key: str) -> Path:
    path = Path(cfg.require(key))
    if not path.exists():
        raise InputError(f"{key}: {path} does not exist")
    return path


def _finish(cfg: RunConfig, out: Path) -> None:
    cfg.get("seed", 0, int)
    cfg.write(out)


# ---------------------------------------------------------------- data


def cmd_toy(cfg: RunConfig) -> int:
    out = _out(cfg)
    paths = toydata.make_corpus(out, cfg.get("videos", 12, int), cfg.get("seed", 0, int),
                                cfg.get("min_frames", 17, int), cfg.get("max_frames", 36, int))
    _finish(cfg, out)
    print(f"wrote {len(paths)} videos to {out}")
    return EXIT_OK


def _ranges(cfg: RunConfig) -> syn.CameraRanges:
    d = syn.CameraRanges()
    return syn.CameraRanges(
        focal_min=cfg.get("camera.focal_min", d.focal_min, float),
        focal_max=cfg.get("camera.focal_max", d.focal_max, float),
        depth_min=cfg.get("camera.depth_min", d.depth_min, float),
        depth_max=cfg.get("camera.depth_max", d.depth_max, float),
        elevation_deg=cfg.get("camera.elevation_deg", d.elevation_deg, float),
        canvas=cfg.get("camera.canvas", d.canvas, int),
        centre_fraction=cfg.get("camera.centre_fraction", d.centre_fraction, float),
    )


def cmd_synth(cfg: RunConfig) -> int:
    count = cfg.get("count", 2000, int)
    seed = cfg.get("seed", 0, int)
    ranges = _ranges(cfg)
    ranges.validate()
    if count < 1:
        raise syn.SyntheticConfigError(f"count must be >= 1, got {count}")
    res = cfg.get("resolution", 64, int)
    pool = syn.MoCapPool(body.bundled_pool(cfg.get("pool.size", 20, int), cfg.get("pool.seed", 0, int)))
    samples = syn.make_dataset(pool, count, seed, ranges, (res, res), cfg.get("sigma", 1.0, float),
                               cfg.get("workers", 1, int))
    out = _out(cfg)
    _finish(cfg, out)
    digest = syn.save_dataset(out, samples, seed, ranges)
    print(digest)
    return EXIT_OK


def _annotation_paths(path: Path) -> list:
    if path.is_dir():
        paths = sorted(path.glob("*.json"))
        if not paths:
            raise InputError(f"no *.json annotations in {path}")
        return paths
    return [path]


def cmd_prepare(cfg: RunConfig) -> int:
    videos = [sq.load_annotation(p) for p in _annotation_paths(_existing(cfg, "annotations"))]
    fraction = cfg.get("train_fraction", 0.8, float)
    seed = cfg.get("seed", 0, int)
    out = _out(cfg)
    samples = [s for v in sorted(videos, key=lambda v: v.video_id) for s in sq.generate_sequences(v)]
    sq.write_samples(out / "samples.jsonl", samples)
    if 0 < fraction < 1 and len(videos) >= 2:
        train, val = sq.split(videos, fraction, seed)
        sq.write_samples(out / "train.jsonl", [s for v in train for s in sq.generate_sequences(v)])
        sq.write_samples(out / "val.jsonl", [s for v in val for s in sq.generate_sequences(v)])
    _finish(cfg, out)
    print(f"{len(samples)} sequences from {len(videos)} videos")
    return EXIT_OK


# ---------------------------------------------------------------- training


def _train_config(cfg: RunConfig, stage: int) -> tr.TrainConfig:
    base = tr.TrainConfig.for_stage(stage)
    return tr.TrainConfig(
        lr=cfg.get("lr", base.lr, float),
        decay=cfg.get("decay", base.decay, float),
        eps=cfg.get("eps", base.eps, float),
        batch=cfg.get("batch", base.batch, int),
        epochs=cfg.get("epochs", base.epochs, int),
        seed=cfg.get("seed", base.seed, int),
        sigma=cfg.get("sigma", base.sigma, float),
        patience=cfg.get("curriculum.patience", base.patience, int),
        min_delta=cfg.get("curriculum.min_delta", base.min_delta, float),
        max_epochs_per_length=cfg.get("curriculum.max_epochs", base.max_epochs_per_length, int),
        curriculum=tuple(cfg.get("curriculum.lengths", list(base.curriculum), "ints")),
        lambda_reproj=cfg.get("loss.lambda_reproj", base.lambda_reproj, float),
        reproj_through_converter=cfg.get("loss.through_converter", base.reproj_through_converter, bool),
        loss_scales=tuple(cfg.get("loss.scales", list(base.loss_scales), "floats")),
    )


def _sequence_data(cfg: RunConfig, key: str, size: int, required=True):
    if not required and not cfg.get(key):
        return None
    samples = sq.read_samples(_existing(cfg, key))
    return tr.SequenceData.from_samples(samples, size)


def _stage_checkpoint(cfg: RunConfig, key: str, stage: int) -> Checkpoint:
    value = cfg.get(key)
    if not value or not (Path(value) / "manifest.json").exists():
        raise StageOrderError(f"stage 3 needs a stage-{stage} checkpoint in {key!r} (got {value!r})")
    return Checkpoint.load(value)


def cmd_train(cfg: RunConfig) -> int:
    stage = cfg.require("stage", int)
    if stage not in (1, 2, 3):
        raise ConfigFileError(f"stage must be 1, 2 or 3, got {stage}")
    tcfg = _train_config(cfg, stage)
    torch.set_num_threads(cfg.get("threads", 1, int))
    if stage == 1:
        hc = HourglassConfig(input_resolution=cfg.get("model.resolution", 64, int),
                             channels=cfg.get("model.channels", [32, 64, 128], "ints"))
        hc.validate()
        train = _sequence_data(cfg, "train_samples", hc.input_resolution)
        val = _sequence_data(cfg, "val_samples", hc.input_resolution, required=False)
        out = _out(cfg)
        _, ckpt, rows = tr.train_hourglass(train, tcfg, hc, val)
    elif stage == 2:
        maps, delta, trans, focal, manifest = syn.load_dataset_arrays(_existing(cfg, "synthetic"))
        cc = ConverterConfig(resolution=maps.shape[-1], channels=cfg.get("converter.channels", [32, 64], "ints"),
                             hidden=cfg.get("converter.hidden", 256, int),
                             image_size=int(manifest["ranges"]["canvas"]))
        val = None
        if cfg.get("val_synthetic"):
            val = tr.ConverterData.from_arrays(*syn.load_dataset_arrays(_existing(cfg, "val_synthetic"))[:4])
        out = _out(cfg)
        _, ckpt, rows = tr.train_converter(tr.ConverterData.from_arrays(maps, delta, trans, focal), tcfg, cc, val,
                                           syn.manifest_hash(cfg.get("synthetic")))
    else:
        hg = _stage_checkpoint(cfg, "hourglass", 1)
        cv = _stage_checkpoint(cfg, "converter", 2)
        size = hg.config["forecaster"]["input_resolution"]
        train = _sequence_data(cfg, "train_samples", size)
        val = _sequence_data(cfg, "val_samples", size, required=False)
        out = _out(cfg)
        _, _, ckpt, rows = tr.train_full(train, hg, cv, tcfg, val)
    tr.write_checkpoint(ckpt, out, rows)
    _finish(cfg, out)
    print(f"stage {stage}: {ckpt.step} steps, final val loss {rows[-1]['val_loss']:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------- forecasting


def _parse_box(text) -> tuple:
    try:
        box = tuple(float(v) for v in str(text).split(","))
    except ValueError as e:
        raise InputError(f"bad crop box {text!r}") from e
    if len(box) != 4 or box[2] <= box[0] or box[3] <= box[1]:
        raise InputError(f"crop box must be x1,y1,x2,y2 with positive size, got {text!r}")
    return box


def cmd_forecast(cfg: RunConfig) -> int:
    ckpt = Checkpoint.load(_existing(cfg, "checkpoint"))
    models = ckpt.load_models()
    converter = models.get("converter")
    if cfg.get("converter"):
        converter = Checkpoint.load(_existing(cfg, "converter")).load_models()["converter"]
    horizon = cfg.get("horizon", sq.SEQ_LEN, int)
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    out = _out(cfg)
    if cfg.get("synthetic"):
        if converter is None:
            raise InputError("lifting synthetic heatmaps needs a converter checkpoint")
        maps = syn.load_dataset_arrays(_existing(cfg, "synthetic"))[0]
        d, t, f = inference.lift(converter, maps)
        inference.write_jsonl(out / "forecast_3d.jsonl",
                              [inference.record_3d(("synthetic", i), d[i:i + 1], t[i:i + 1], f[i:i + 1])
                               for i in range(len(maps))])
        _finish(cfg, out)
        return EXIT_OK
    model = models.get("forecaster")
    if model is None:
        raise InputError("checkpoint has no forecaster")
    size = model.config.input_resolution
    if cfg.get("samples"):
        samples = sq.read_samples(_existing(cfg, "samples"))
    else:
        image = _existing(cfg, "image")
        box = _parse_box(cfg.require("box"))
        samples = [sq.SequenceSample(image.stem, cfg.get("action", "unknown"), 1, box, [1], [], str(image))]
    inputs = torch.from_numpy(np.stack([imaging.load_input(s.image, s.crop_box, size) for s in samples]))
    maps = tr.forecast_heatmaps(model, inputs, horizon)
    p2, p3 = inference.save_forecasts(out, samples, maps, size, converter)
    _finish(cfg, out)
    print(p2 if p3 is None else f"{p2}\n{p3}")
    return EXIT_OK


# ---------------------------------------------------------------- evaluation


def _load_3d(path: Path) -> dict:
    """Key -> ``(T, N, 3)`` centred skeletons from a 3D JSONL file or a synthetic dataset directory."""
    if path.is_dir():
        deltas = syn.load_dataset_arrays(path)[1]
        return {("synthetic", i): d[None] for i, d in enumerate(deltas)}
    out = {}
    for r in inference.read_jsonl(path):
        d = np.asarray(r["delta"], dtype=np.float64)
        out[(str(r["video_id"]), int(r["input_frame_index"]))] = d if d.ndim == 3 else d[None]
    return out


def cmd_eval(cfg: RunConfig) -> int:
    metric = cfg.get("metric", "pck")
    pred_path = _existing(cfg, "predictions")
    target_path = _existing(cfg, "targets")
    out = _out(cfg)
    report = ev.EvalReport()
    if metric == "pck":
        preds = inference.read_predictions(pred_path)
        targets = sq.read_samples(target_path)
        matched = [s for s in targets if (s.video_id, s.input_frame_index) in preds]
        if not matched:
            raise InputError("no prediction matches any target sequence")
        if len(matched) < len(targets):
            log.warning("%d of %d targets have no prediction", len(targets) - len(matched), len(targets))
        p = [preds[(s.video_id, s.input_frame_index)] for s in matched]
        steps = min(len(x) for x in p)
        p = [x[:steps] for x in p]
        t = [s.targets[:steps] for s in matched]
        sizes = [s.crop_size for s in matched]
        threshold = cfg.get("threshold", ev.PCK_THRESHOLD, float)
        report.pck = {threshold: ev.pck(p, t, sizes, threshold)}
        report.counts = {"sequences": len(matched), "steps": steps}
        if cfg.get("by_action", False, bool):
            report.pck_by_action = ev.pck_by_action(p, t, sizes, [s.action for s in matched], threshold)
        curve = ev.pck_curve(p, t, sizes)
        ev.write_pck_curve(out / "pck_curve.csv", curve)
        if cfg.get("plot", False, bool) and not ev.plot_pck_curve(out / "pck_curve.png", curve):
            log.warning("matplotlib not available; skipping plot")
    elif metric == "mpjpe":
        preds, targets = _load_3d(pred_path), _load_3d(target_path)
        keys = [k for k in targets if k in preds]
        if not keys:
            raise InputError("no prediction matches any target skeleton")
        steps = min(min(len(preds[k]), len(targets[k])) for k in keys)
        p = np.concatenate([preds[k][:steps] for k in keys])
        g = np.concatenate([targets[k][:steps] for k in keys])
        per_joint, mean = ev.mpjpe(p, g)
        report.mpjpe_per_joint, report.mpjpe_mean = per_joint, mean
        report.counts = {"skeletons": len(p)}
    else:
        raise ConfigFileError(f"metric must be pck or mpjpe, got {metric!r}")
    report.write(out, cfg.get("label", "model"))
    _finish(cfg, out)
    print(out / "report.json")
    return EXIT_OK


# ---------------------------------------------------------------- baselines


def _scene_embedding(sample) -> np.ndarray:
    return imaging.thumbnail_embedding(sample.image)


def _query_pose(sample) -> Pose2D | None:
    pose = sample.targets[0] if sample.targets else None
    return pose if pose is not None and pose.visible.any() else None


def _run_baseline(kind, queries, index, horizon, tau=None):
    records = []
    for s in queries:
        q = _query_pose(s)
        if q is None:
            log.warning("query %s/%d has no visible keypoint; skipped", s.video_id, s.input_frame_index)
            continue
        if kind == "all":
            seq = bl.nn_all(q, index, horizon)
        elif kind == "context":
            seq = bl.nn_context(q, _scene_embedding(s), index, tau, horizon)
        else:
            seq = bl.nn_oracle(q, s.action, index, horizon)
        records.append(inference.prediction_record(s, seq))
    return records


def _select_tau(index, val, horizon):
    d = np.sqrt(((index.embeddings[None] - np.stack([_scene_embedding(s) for s in val])[:, None]) ** 2).sum(-1))
    candidates = sorted(set(np.quantile(d, np.linspace(0.05, 1.0, 20)).round(9).tolist()))

    def score(tau):
        recs = _run_baseline("context", val, index, horizon, tau)
        preds = {(r["video_id"], r["input_frame_index"]): [Pose2D.from_triples(p) for p in r["poses"]] for r in recs}
        kept = [s for s in val if (s.video_id, s.input_frame_index) in preds]
        return float(np.nanmean(ev.pck([preds[(s.video_id, s.input_frame_index)] for s in kept],
                                       [s.targets[:horizon] for s in kept], [s.crop_size for s in kept])))

    return bl.select_tau(candidates, score)


def cmd_baseline(cfg: RunConfig) -> int:
    kind = cfg.get("kind", "all")
    if kind not in ("all", "context", "oracle"):
        raise ConfigFileError(f"kind must be all, context or oracle, got {kind!r}")
    train = sq.read_samples(_existing(cfg, "index"))
    queries = sq.read_samples(_existing(cfg, "queries"))
    horizon = cfg.get("horizon", sq.SEQ_LEN, int)
    if kind == "oracle":
        unlabeled = [s for s in train + queries if s.action in (None, "", "unknown")]
        if unlabeled:
            raise InputError(f"oracle baseline needs action labels; {len(unlabeled)} samples have none")
    index = bl.NNIndex.from_samples(train, _scene_embedding if kind == "context" else None)
    tau = None
    if kind == "context":
        tau = cfg.get("tau", None, float)
        if tau is None:
            tau = _select_tau(index, sq.read_samples(_existing(cfg, "tau_val")), horizon)
            cfg.resolved["tau"] = tau
    out = _out(cfg)
    records = _run_baseline(kind, queries, index, horizon, tau)
    inference.write_jsonl(out / "forecast_2d.jsonl", records)
    _finish(cfg, out)
    print(out / "forecast_2d.jsonl")
    return EXIT_OK


# ---------------------------------------------------------------- entry


COMMANDS = {"toy": cmd_toy, "synth": cmd_synth, "prepare": cmd_prepare, "train": cmd_train,
            "forecast": cmd_forecast, "eval": cmd_eval, "baseline": cmd_baseline}

# flag name -> config key (flags win over the file and --set)
FLAGS = {
    "toy": {"out": "out", "videos": "videos", "seed": "seed"},
    "synth": {"out": "out", "count": "count", "seed": "seed", "workers": "workers"},
    "prepare": {"annotations": "annotations", "out": "out", "seed": "seed", "train_fraction": "train_fraction"},
    "train": {"stage": "stage", "out": "out", "seed": "seed", "epochs": "epochs", "train_samples": "train_samples",
              "val_samples": "val_samples", "synthetic": "synthetic", "hourglass": "hourglass",
              "converter": "converter"},
    "forecast": {"checkpoint": "checkpoint", "converter": "converter", "samples": "samples", "image": "image",
                 "box": "box", "synthetic": "synthetic", "horizon": "horizon", "out": "out"},
    "eval": {"predictions": "predictions", "targets": "targets", "metric": "metric", "by_action": "by_action",
             "plot": "plot", "threshold": "threshold", "out": "out", "label": "label"},
    "baseline": {"kind": "kind", "index": "index", "queries": "queries", "tau": "tau", "tau_val": "tau_val",
                 "horizon": "horizon", "out": "out"},
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"flat key=value config file (default: ${ENV_VAR})")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="poseforecast", description="Forecast human pose sequences from single images.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("toy", parents=[common], help="write a small synthetic video corpus")
    s.add_argument("--out")
    s.add_argument("--videos", type=int)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic heatmap/3D training pairs")
    s.add_argument("--out")
    s.add_argument("--count", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)

    s = sub.add_parser("prepare", parents=[common], help="turn video annotations into sequence samples")
    s.add_argument("--annotations")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--train-fraction", dest="train_fraction", type=float)

    s = sub.add_parser("train", parents=[common], help="run one training stage")
    s.add_argument("--stage", type=int, choices=(1, 2, 3))
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--train-samples", dest="train_samples")
    s.add_argument("--val-samples", dest="val_samples")
    s.add_argument("--synthetic")
    s.add_argument("--hourglass", help="stage-1 checkpoint directory")
    s.add_argument("--converter", help="stage-2 checkpoint directory")

    s = sub.add_parser("forecast", parents=[common], help="forecast pose sequences from single images")
    s.add_argument("--checkpoint")
    s.add_argument("--converter")
    s.add_argument("--samples")
    s.add_argument("--image")
    s.add_argument("--box", help="x1,y1,x2,y2 crop in image pixels")
    s.add_argument("--synthetic", help="lift a synthetic dataset's heatmaps instead")
    s.add_argument("--horizon", type=int)
    s.add_argument("--out")

    s = sub.add_parser("eval", parents=[common], help="score predictions")
    s.add_argument("--predictions")
    s.add_argument("--targets")
    s.add_argument("--metric", choices=("pck", "mpjpe"))
    s.add_argument("--by-action", dest="by_action", action="store_const", const="true")
    s.add_argument("--plot", action="store_const", const="true")
    s.add_argument("--threshold", type=float)
    s.add_argument("--label")
    s.add_argument("--out")

    s = sub.add_parser("baseline", parents=[common], help="nearest-neighbour forecasts")
    s.add_argument("--kind", choices=("all", "context", "oracle"))
    s.add_argument("--index", help="samples JSONL to search")
    s.add_argument("--queries", help="samples JSONL to forecast")
    s.add_argument("--tau", type=float)
    s.add_argument("--tau-val", dest="tau_val", help="samples JSONL used to pick tau")
    s.add_argument("--horizon", type=int)
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = [f"{key}={getattr(args, attr)}" for attr, key in FLAGS[args.command].items()
             if getattr(args, attr, None) is not None]
    try:
        cfg = RunConfig.load(args.config, list(args.set) + flags)
        return COMMANDS[args.command](cfg)
    except StageOrderError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STAGE
    except tr.NonFiniteGradientError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ConfigFileError, InputError, ConfigError, CheckpointError, sq.AnnotationError, GeometryError,
            syn.SyntheticConfigError, tr.TrainingError, bl.NoPoseError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
