import json

import pytest

from poseforecast import cli, sequences as sq, synthetic as syn
from poseforecast.config import ENV_VAR, RESOLVED_NAME, ConfigFileError, RunConfig, parse

TINY_MODEL = ["--set", "model.resolution=16", "--set", "model.channels=4,4"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["toy", "--out", str(root / "toy"), "--videos", "3", "--seed", "1",
                     "--set", "min_frames=17", "--set", "max_frames=18"]) == 0
    assert cli.main(["prepare", "--annotations", str(root / "toy" / "annotations"), "--out", str(root / "prep"),
                     "--train-fraction", "0.67"]) == 0
    return root


def test_parse_config():
    assert parse("a = 1\n# c\nb.c=x # trailing\n\n") == {"a": "1", "b.c": "x"}
    with pytest.raises(ConfigFileError, match=":2:"):
        parse("a = 1\nnonsense\n", "f")


def test_flags_override_file(tmp_path, monkeypatch):
    f = tmp_path / "c.txt"
    f.write_text("lr = 0.5\nseed = 3\n")
    monkeypatch.setenv(ENV_VAR, str(f))
    cfg = RunConfig.load(None, ["seed=9"])
    assert cfg.get("lr", 0.1, float) == 0.5 and cfg.get("seed", 0, int) == 9
    assert cfg.get("curriculum.lengths", [2, 4], "ints") == [2, 4]
    assert "seed = 9" in cfg.dump()
    with pytest.raises(ConfigFileError):
        RunConfig({"lr": "abc"}).get("lr", 0.1, float)


def test_prepare_counts_and_idempotence(corpus, tmp_path):
    videos = [sq.load_annotation(p) for p in sorted((corpus / "toy" / "annotations").glob("*.json"))]
    lines = (corpus / "prep" / "samples.jsonl").read_text().splitlines()
    assert len(lines) == sum(v.num_frames for v in videos)
    n_split = len((corpus / "prep" / "train.jsonl").read_text().splitlines()) + \
        len((corpus / "prep" / "val.jsonl").read_text().splitlines())
    assert n_split == len(lines)
    before = (corpus / "prep" / "samples.jsonl").read_bytes()
    assert cli.main(["prepare", "--annotations", str(corpus / "toy" / "annotations"), "--out",
                     str(corpus / "prep"), "--train-fraction", "0.67"]) == 0
    assert (corpus / "prep" / "samples.jsonl").read_bytes() == before
    assert "seed = 0" in (corpus / "prep" / RESOLVED_NAME).read_text()


def test_prepare_malformed_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n"video_id": "x",\n"frames": [,]\n}')
    assert cli.main(["prepare", "--annotations", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "bad.json:3" in capsys.readouterr().err


def test_synth(tmp_path):
    args = ["synth", "--count", "5", "--seed", "4", "--set", "resolution=16"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    assert syn.directory_hash(tmp_path / "a") == syn.directory_hash(tmp_path / "b")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["ranges"]["focal_min"] == 350.0
    assert cli.main(["synth", "--count", "0", "--out", str(tmp_path / "c")]) == 2


def test_stage_order_exit_code(corpus, tmp_path):
    code = cli.main(["train", "--stage", "3", "--train-samples", str(corpus / "prep" / "train.jsonl"),
                     "--hourglass", str(tmp_path / "nope"), "--out", str(tmp_path / "s3")])
    assert code == 3


def test_missing_file_exit_code(tmp_path):
    assert cli.main(["eval", "--predictions", str(tmp_path / "x.jsonl"), "--targets", str(tmp_path / "y"),
                     "--out", str(tmp_path / "e")]) == 2


def test_pipeline_end_to_end(corpus, tmp_path):
    prep = corpus / "prep"
    s1, s2, s3 = tmp_path / "s1", tmp_path / "s2", tmp_path / "s3"
    assert cli.main(["train", "--stage", "1", "--train-samples", str(prep / "train.jsonl"), "--epochs", "1",
                     "--out", str(s1)] + TINY_MODEL) == 0
    assert (s1 / "log.csv").read_text().startswith("step,stage,seq_len,train_loss,val_loss")
    assert cli.main(["synth", "--count", "16", "--set", "resolution=16", "--out", str(tmp_path / "syn")]) == 0
    assert cli.main(["train", "--stage", "2", "--synthetic", str(tmp_path / "syn"), "--epochs", "1",
                     "--set", "converter.channels=4", "--set", "converter.hidden=8", "--out", str(s2)]) == 0
    assert cli.main(["train", "--stage", "3", "--train-samples", str(prep / "val.jsonl"), "--hourglass", str(s1),
                     "--converter", str(s2), "--set", "curriculum.max_epochs=1", "--out", str(s3)]) == 0
    assert "loss.lambda_reproj" in (s3 / RESOLVED_NAME).read_text()

    fc = tmp_path / "fc"
    assert cli.main(["forecast", "--checkpoint", str(s3), "--samples", str(prep / "val.jsonl"), "--out", str(fc)]) == 0
    rec = json.loads((fc / "forecast_2d.jsonl").read_text().splitlines()[0])
    assert len(rec["poses"]) == 16 and len(rec["poses"][0]) == 13
    rec3 = json.loads((fc / "forecast_3d.jsonl").read_text().splitlines()[0])
    assert len(rec3["delta"]) == 16

    one = tmp_path / "one"
    assert cli.main(["forecast", "--checkpoint", str(s3), "--samples", str(prep / "val.jsonl"),
                     "--horizon", "1", "--out", str(one)]) == 0
    assert len(json.loads((one / "forecast_2d.jsonl").read_text().splitlines()[0])["poses"]) == 1

    ev_dir = tmp_path / "ev"
    assert cli.main(["eval", "--predictions", str(fc / "forecast_2d.jsonl"), "--targets", str(prep / "val.jsonl"),
                     "--by-action", "--out", str(ev_dir)]) == 0
    assert len((ev_dir / "pck.csv").read_text().splitlines()[0].split(",")) == 17
    assert (ev_dir / "pck_by_action.csv").exists()

    lift = tmp_path / "lift"
    assert cli.main(["forecast", "--checkpoint", str(s2), "--synthetic", str(tmp_path / "syn"),
                     "--out", str(lift)]) == 0
    assert cli.main(["eval", "--metric", "mpjpe", "--predictions", str(lift / "forecast_3d.jsonl"),
                     "--targets", str(tmp_path / "syn"), "--out", str(tmp_path / "ev3")]) == 0
    header = (tmp_path / "ev3" / "mpjpe.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 15


def test_perfect_predictions_and_baselines(corpus, tmp_path):
    prep = corpus / "prep"
    # targets re-used as predictions score 1.0 everywhere
    samples = sq.read_samples(prep / "val.jsonl")
    from poseforecast import inference
    inference.write_jsonl(tmp_path / "gt.jsonl", [inference.prediction_record(s, s.targets) for s in samples])
    assert cli.main(["eval", "--predictions", str(tmp_path / "gt.jsonl"), "--targets", str(prep / "val.jsonl"),
                     "--out", str(tmp_path / "perfect")]) == 0
    row = (tmp_path / "perfect" / "pck.csv").read_text().splitlines()[1].split(",")[1:]
    assert all(v == "1.000000" for v in row)

    for kind, extra in (("all", []), ("oracle", []), ("context", ["--tau-val", str(prep / "val.jsonl")])):
        out = tmp_path / f"bl_{kind}"
        assert cli.main(["baseline", "--kind", kind, "--index", str(prep / "samples.jsonl"),
                         "--queries", str(prep / "val.jsonl"), "--out", str(out)] + extra) == 0
        assert cli.main(["eval", "--predictions", str(out / "forecast_2d.jsonl"), "--targets",
                         str(prep / "val.jsonl"), "--out", str(out / "eval")]) == 0
    assert "tau = " in (tmp_path / "bl_context" / RESOLVED_NAME).read_text()


def test_oracle_needs_labels(corpus, tmp_path):
    samples = sq.read_samples(corpus / "prep" / "val.jsonl")
    for s in samples:
        s.action = "unknown"
    sq.write_samples(tmp_path / "q.jsonl", samples)
    assert cli.main(["baseline", "--kind", "oracle", "--index", str(corpus / "prep" / "train.jsonl"),
                     "--queries", str(tmp_path / "q.jsonl"), "--out", str(tmp_path / "o")]) == 2
