import json
from fractions import Fraction

import numpy as np
import pytest

from poseforecast import sequences as sq
from poseforecast.geometry import Pose2D


def brute_force_indices(k, s):
    """Enumerate with exact rationals: offset i*(K-1)/15 rounded half-up, clipped at K."""
    out = []
    for i in range(16):
        x = Fraction(i * (k - 1), 15)
        r = int(x) + (1 if x - int(x) >= Fraction(1, 2) else 0)
        out.append(min(k, s + r))
    return out


def make_video(k, vid="v", action="a", boxes=None, seed=0):
    rng = np.random.default_rng(seed)
    frames = []
    for t in range(k):
        box = boxes[t] if boxes else (10.0, 20.0, 110.0, 220.0)
        x1, y1, x2, y2 = box
        pts = np.stack([rng.integers(int(x1), int(x2), 13), rng.integers(int(y1), int(y2), 13)], 1).astype(float)
        vis = rng.random(13) > 0.1
        frames.append(sq.Frame(f"img{t}.png", box, Pose2D(np.where(vis[:, None], pts, 0), vis)))
    return sq.VideoAnnotation(vid, action, frames)


def test_indices_examples():
    assert sq.sequence_indices(16, 1) == list(range(1, 17))
    assert sq.sequence_indices(31, 1) == list(range(1, 32, 2))
    assert sq.sequence_indices(20, 20) == [20] * 16
    assert sq.sequence_indices(1, 1) == [1] * 16


def test_indices_match_brute_force():
    for k in range(1, 61):
        for s in range(1, k + 1):
            idx = sq.sequence_indices(k, s)
            assert idx == brute_force_indices(k, s)
            assert len(idx) == 16 and idx[0] == s
            assert all(a <= b for a, b in zip(idx, idx[1:])) and idx[-1] <= k


def test_start_one_reaches_last_frame():
    for k in range(1, 61):
        assert sq.sequence_indices(k, 1)[-1] == k


def test_union_crop():
    v = make_video(2, boxes=[(0, 0, 10, 10), (5, 5, 20, 15)])
    assert sq.union_crop(v) == (0, 0, 20, 15)
    v = make_video(1, boxes=[(3, 4, 8, 9)])
    assert sq.union_crop(v) == (3, 4, 8, 9)


def test_generate_sequences_counts_and_containment():
    boxes = [(10 + t, 20, 110 + t, 220) for t in range(23)]
    v = make_video(23, boxes=boxes)
    samples = sq.generate_sequences(v)
    assert len(samples) == 23
    crop = sq.union_crop(v)
    h, w = crop[3] - crop[1], crop[2] - crop[0]
    for s in samples:
        assert s.frame_indices[0] == s.input_frame_index
        assert len(s.targets) == 16
        for p in s.targets:
            pts = p.points[p.visible]
            assert (pts >= 0).all() and (pts[:, 0] <= w).all() and (pts[:, 1] <= h).all()


def test_crop_round_trip_exact():
    v = make_video(5)
    crop = sq.union_crop(v)
    for fr in v.frames:
        back = sq.from_crop(sq.to_crop(fr.pose, crop), crop)
        np.testing.assert_array_equal(back.points, fr.pose.points)


def test_invisible_serialised_as_zero_sentinel():
    p = Pose2D([[5, 6], [7, 8]], [True, False])
    assert p.to_triples() == [[5.0, 6.0, 1], [0.0, 0.0, 0]]
    back = Pose2D.from_triples(p.to_triples())
    assert back.visible.tolist() == [True, False]


def test_split():
    videos = [make_video(2, vid=f"v{i}") for i in range(10)]
    tr, va = sq.split(videos, 0.8, seed=3)
    assert len(tr) == 8 and len(va) == 2
    tr2, va2 = sq.split(list(reversed(videos)), 0.8, seed=3)
    assert [v.video_id for v in tr] == [v.video_id for v in tr2]
    assert not {v.video_id for v in tr} & {v.video_id for v in va}
    with pytest.raises(ValueError):
        sq.split([], 0.5, 0)
    with pytest.raises(ValueError):
        sq.split(videos, 1.0, 0)


def test_annotation_io(tmp_path):
    v = make_video(4, vid="abc", action="swing")
    sq.save_annotation(tmp_path / "a.json", v)
    back = sq.load_annotation(tmp_path / "a.json")
    assert back.video_id == "abc" and back.action == "swing" and back.num_frames == 4
    np.testing.assert_array_equal(back.frames[2].pose.points, v.frames[2].pose.points)
    assert back.frames[0].image == str(tmp_path / "img0.png")


def test_malformed_annotation_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n"video_id": "x",\n"frames": [,]\n}')
    with pytest.raises(sq.AnnotationError) as e:
        sq.load_annotation(p)
    assert e.value.line == 3


def test_invalid_box_rejected():
    pose = Pose2D.all_visible(np.zeros((13, 2)))
    with pytest.raises(sq.AnnotationError):
        sq.VideoAnnotation("v", "a", [sq.Frame("", (5, 5, 5, 10), pose)])


def test_samples_jsonl_round_trip(tmp_path):
    samples = sq.generate_sequences(make_video(6))
    sq.write_samples(tmp_path / "s.jsonl", samples)
    back = sq.read_samples(tmp_path / "s.jsonl")
    assert len(back) == 6
    assert back[3].frame_indices == samples[3].frame_indices
    np.testing.assert_array_equal(back[3].targets[5].points, samples[3].targets[5].points)
    rec = json.loads((tmp_path / "s.jsonl").read_text().splitlines()[0])
    assert len(rec["frame_indices"]) == 16


def test_letterbox_is_uniform_and_invertible():
    box = (10.0, 20.0, 60.0, 120.0)
    pts = np.array([[0.0, 0.0], [50.0, 100.0], [25.0, 50.0]])
    grid = sq.crop_to_grid(pts, box, 64)
    np.testing.assert_allclose(grid[1] - grid[0], [32, 64])
    np.testing.assert_allclose(sq.grid_to_crop(grid, box, 64), pts, atol=1e-12)
