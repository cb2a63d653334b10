import math

import numpy as np
import pytest

from poseforecast.geometry import Pose2D
from poseforecast.heatmaps import (HeatmapStack, decode, decode_batch, load_heatmaps, render, render_batch,
                                   save_heatmaps)


def test_render_peak_and_neighbour():
    maps = render(Pose2D.all_visible([[32, 32]]), (64, 64), 1.0).maps
    assert maps[0, 32, 32] == 1.0
    assert maps[0, 32, 33] == pytest.approx(math.exp(-0.5))
    assert maps[0, 33, 32] == pytest.approx(math.exp(-0.5))


def test_invisible_channel_is_zero():
    pose = Pose2D([[10, 10], [20, 20]], [True, False])
    maps = render(pose).maps
    assert not maps[1].any()
    assert maps[0].max() == 1.0


def test_render_rejects_bad_sigma():
    with pytest.raises(ValueError):
        render(Pose2D.all_visible([[1, 1]]), sigma=0)


def test_out_of_canvas_is_truncated():
    maps = render(Pose2D.all_visible([[-2, 30]]), (64, 64)).maps
    assert 0 < maps.max() < 1


def test_decode_single_peak():
    maps = np.zeros((1, 32, 32))
    maps[0, 20, 10] = 0.7
    pose, conf = decode(HeatmapStack(maps))
    np.testing.assert_array_equal(pose.points, [[10, 20]])
    assert conf[0] == 0.7 and pose.visible[0]


def test_decode_zero_channel():
    pose, conf = decode(HeatmapStack(np.zeros((1, 8, 8))))
    np.testing.assert_array_equal(pose.points, [[0, 0]])
    assert conf[0] == 0 and not pose.visible[0]


def test_decode_tie_break_row_major():
    maps = np.zeros((1, 8, 8))
    maps[0, 3, 3] = maps[0, 5, 5] = 1.0
    pose, _ = decode(HeatmapStack(maps))
    np.testing.assert_array_equal(pose.points, [[3, 3]])


def test_render_range_and_unique_peak():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pts = rng.integers(0, 64, size=(13, 2))
        maps = render(Pose2D.all_visible(pts)).maps
        assert maps.min() >= 0 and maps.max() <= 1
        assert all((maps[k] == 1.0).sum() == 1 for k in range(13))


def test_translation_equivariance():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = rng.integers(5, 50, size=(1, 2))
        d = rng.integers(-2, 3, size=2)
        a, _ = decode(render(Pose2D.all_visible(p)))
        b, _ = decode(render(Pose2D.all_visible(p + d)))
        np.testing.assert_array_equal(b.points - a.points, [d])


def test_batch_render_and_decode_agree_with_scalar_versions():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 63, size=(3, 13, 2))
    vis = rng.random((3, 13)) > 0.2
    maps = render_batch(pts, vis)
    for b in range(3):
        ref = render(Pose2D(pts[b], vis[b])).maps
        np.testing.assert_allclose(maps[b], ref, atol=1e-7)
    coords, _ = decode_batch(maps)
    for b in range(3):
        ref, _ = decode(HeatmapStack(maps[b]))
        np.testing.assert_array_equal(coords[b][vis[b]], ref.points[vis[b]])


def test_raw_round_trip(tmp_path):
    stack = render(Pose2D.all_visible([[3, 4], [10, 11]]), (16, 24), 1.5)
    save_heatmaps(tmp_path / "h.f32", stack)
    assert (tmp_path / "h.f32").stat().st_size == 2 * 16 * 24 * 4
    back = load_heatmaps(tmp_path / "h.f32")
    assert back.sigma == 1.5 and back.maps.shape == (2, 16, 24)
    np.testing.assert_array_equal(back.maps, stack.maps.astype(np.float32))
