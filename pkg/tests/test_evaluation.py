import json

import numpy as np
import pytest

from poseforecast import evaluation as ev
from poseforecast.geometry import CenteredSkeleton, Pose2D


def seq(points, visible=None, steps=16):
    p = Pose2D(points, np.ones(len(points), bool) if visible is None else visible)
    return [p] * steps


def random_case(rng, m=12, steps=16):
    targets, preds, sizes, actions = [], [], [], []
    for i in range(m):
        t = [Pose2D(rng.uniform(0, 100, (13, 2)), rng.random(13) > 0.2) for _ in range(steps)]
        p = [Pose2D(x.points + rng.normal(0, 6, (13, 2)), np.ones(13, bool)) for x in t]
        targets.append(t)
        preds.append(p)
        sizes.append((rng.uniform(50, 150), rng.uniform(50, 150)))
        actions.append(["run", "jump", "swing"][i % 3])
    return preds, targets, sizes, actions


def test_perfect_predictions():
    rng = np.random.default_rng(0)
    _, targets, sizes, _ = random_case(rng)
    np.testing.assert_array_equal(ev.pck(targets, targets, sizes), np.ones(16))


def test_pck_hand_case():
    target = [Pose2D([[0, 0], [0, 0], [0, 0]], [True, True, False])]
    pred = [Pose2D([[5, 0], [0, 15], [100, 100]], [True, True, True])]
    out = ev.pck([pred], [target], [(100, 200)], 0.05)
    assert out[0] == 0.5


def test_missing_timestep():
    target = [Pose2D([[0, 0]], [False])]
    out = ev.pck([target], [target], [(10, 10)])
    assert np.isnan(out[0])


def test_pck_monotone_in_threshold():
    rng = np.random.default_rng(1)
    preds, targets, sizes, _ = random_case(rng)
    curve = ev.pck_curve(preds, targets, sizes)
    assert (np.diff(curve, axis=0) >= 0).all()
    np.testing.assert_array_equal(ev.pck(preds, targets, sizes, 1e9), np.ones(16))


def test_by_action_reconstructs_global():
    rng = np.random.default_rng(2)
    preds, targets, sizes, actions = random_case(rng, m=20)
    glob = ev.pck(preds, targets, sizes)
    by = ev.pck_by_action(preds, targets, sizes, actions)
    totals = {a: ev.pck_counts([preds[i] for i in range(20) if actions[i] == a],
                               [targets[i] for i in range(20) if actions[i] == a],
                               [sizes[i] for i in range(20) if actions[i] == a], 0.05)[1] for a in by}
    recon = sum(by[a] * totals[a] for a in by) / sum(totals.values())
    np.testing.assert_allclose(recon, glob, atol=1e-12, rtol=0)
    one = ev.pck_by_action(preds, targets, sizes, ["x"] * 20)
    np.testing.assert_array_equal(one["x"], glob)
    assert "unknown" in ev.pck_by_action(preds[:1], targets[:1], sizes[:1], [None])


def test_mpjpe_hand_case():
    tgt = np.zeros((1, 13, 3))
    pred = tgt.copy()
    pred[0, 4] = [3, 0, 4]
    per_joint, avg = ev.mpjpe(pred, tgt)
    assert per_joint[4] == 5.0 and per_joint.sum() == 5.0
    assert avg == pytest.approx(5 / 13)
    zeros, avg0 = ev.mpjpe(tgt, tgt)
    assert avg0 == 0 and not zeros.any()


def test_mpjpe_common_offset_invariance_and_types():
    rng = np.random.default_rng(3)
    p = rng.normal(size=(5, 13, 3))
    g = rng.normal(size=(5, 13, 3))
    off = rng.normal(size=(5, 1, 3)) * 100
    np.testing.assert_allclose(ev.mpjpe(p + off, g + off)[0], ev.mpjpe(p, g)[0], rtol=1e-9)
    cs = [CenteredSkeleton(x, np.zeros(3)) for x in p]
    np.testing.assert_array_equal(ev.mpjpe(cs, g)[0], ev.mpjpe(p, g)[0])
    with pytest.raises(ValueError):
        ev.mpjpe(p[:3], g)


def test_report_outputs(tmp_path):
    rng = np.random.default_rng(4)
    preds, targets, sizes, actions = random_case(rng)
    report = ev.EvalReport(pck={0.05: ev.pck(preds, targets, sizes)},
                           pck_by_action=ev.pck_by_action(preds, targets, sizes, actions),
                           mpjpe_per_joint=np.arange(13.0), mpjpe_mean=6.0)
    report.write(tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert len(data["pck"]["0.05"]) == 16
    header = (tmp_path / "pck.csv").read_text().splitlines()[0].split(",")
    assert header[1:] == [f"t{i}" for i in range(1, 17)]
    mp = (tmp_path / "mpjpe.csv").read_text().splitlines()
    assert mp[0].split(",")[1] == "head" and mp[0].split(",")[-1] == "avg"
    curve = ev.pck_curve(preds, targets, sizes)
    ev.write_pck_curve(tmp_path / "curve.csv", curve)
    assert len((tmp_path / "curve.csv").read_text().splitlines()) == 52
