import numpy as np
import pytest
from scipy import stats

from poseforecast import body, geometry as geo, synthetic as syn
from poseforecast.heatmaps import decode


@pytest.fixture(scope="module")
def pool():
    return syn.MoCapPool(body.bundled_pool(20, 0))


def test_bundled_pool_is_plausible(pool):
    assert len(pool.poses) == 20
    for p in pool.poses:
        assert p.points.shape == (13, 3)
        np.testing.assert_allclose(p.points.mean(axis=0), 0, atol=1e-9)
    upright = body.articulate({})
    head, ankle = upright[0], upright[11]
    assert head[1] < 0 < ankle[1]


def test_degenerate_focal_range():
    r = syn.CameraRanges(focal_min=500, focal_max=500)
    rng = np.random.default_rng(0)
    assert all(syn.sample_camera(rng, r).focal == 500 for _ in range(20))


def test_camera_determinism():
    a = syn.sample_camera(np.random.default_rng(7))
    b = syn.sample_camera(np.random.default_rng(7))
    assert a.focal == b.focal
    np.testing.assert_array_equal(a.rotation, b.rotation)
    np.testing.assert_array_equal(a.world_translation, b.world_translation)


def test_camera_statistics():
    rng = np.random.default_rng(11)
    r = syn.CameraRanges()
    cams = [syn.sample_camera(rng, r) for _ in range(10000)]
    f = np.array([c.focal for c in cams])
    assert f.min() >= r.focal_min and f.max() <= r.focal_max
    # camera-frame direction of the world x axis recovers the azimuth regardless of elevation
    az = np.array([np.arctan2(c.rotation[0, 2], c.rotation[0, 0]) for c in cams]) % (2 * np.pi)
    assert stats.kstest(az / (2 * np.pi), "uniform").pvalue > 0.01
    for c in cams[:200]:
        tx, ty, z = c.world_translation
        assert abs(c.focal * tx / z) <= 0.3 * r.canvas + 1e-9
        assert r.depth_min <= z <= r.depth_max


def test_invalid_ranges():
    with pytest.raises(syn.SyntheticConfigError):
        syn.sample_camera(np.random.default_rng(0), syn.CameraRanges(focal_min=900, focal_max=400))


def test_sample_consistency(pool):
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = syn.make_sample(pool, rng)
        np.testing.assert_allclose(s.target.delta.mean(axis=0), 0, atol=1e-9)
        reproj = geo.project(geo.compose(s.target), s.camera)
        np.testing.assert_array_equal(reproj.points, s.pose2d.points)
        assert (geo.compose(s.target).points[:, 2] > 0).all()


def test_single_pose_round_trip_through_heatmaps():
    one = syn.MoCapPool([body.bundled_pool(1, 5)[0]])
    camera = geo.CameraParams(600.0, 256, 256, geo.rotation_y(0.4), np.array([0.0, 0.0, 5000.0]))
    a = syn.sample_from_camera(one.poses[0], camera)
    b = syn.sample_from_camera(one.poses[0], camera)
    np.testing.assert_array_equal(a.heatmaps.maps, b.heatmaps.maps)
    decoded, _ = decode(a.heatmaps)
    grid = a.pose2d.points * 64 / 256
    assert np.abs(decoded.points - grid).max() <= 0.5 + 1e-9


def test_generation_error_on_bad_ranges(pool):
    # camera inside the body: depth too small for a 1.7 m skeleton at any rotation
    r = syn.CameraRanges(depth_min=1.0, depth_max=2.0)
    with pytest.raises(syn.GenerationError):
        syn.make_sample(pool, np.random.default_rng(0), r)


def test_dataset_determinism_and_count(pool):
    a = syn.make_dataset(pool, 10, seed=1)
    b = syn.make_dataset(pool, 10, seed=1)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.heatmaps.maps, y.heatmaps.maps)
        np.testing.assert_array_equal(x.target.delta, y.target.delta)
    with pytest.raises(syn.SyntheticConfigError):
        syn.make_dataset(pool, 0, seed=1)


def test_dataset_independent_of_worker_count(pool):
    a = syn.make_dataset(pool, 12, seed=4, workers=1)
    b = syn.make_dataset(pool, 12, seed=4, workers=3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.heatmaps.maps, y.heatmaps.maps)
    # sample i does not depend on how many samples are generated
    c = syn.make_dataset(pool, 5, seed=4)
    np.testing.assert_array_equal(c[4].target.delta, a[4].target.delta)


def test_coupon_collector():
    small = syn.MoCapPool(body.bundled_pool(5, 9))
    # cheap draws: only the pose index matters here
    seen = {syn.make_sample(small, syn.sample_rng(2, i), resolution=(4, 4)).pose_index for i in range(10000)}
    assert seen == set(range(5))


def test_save_and_load(tmp_path, pool):
    samples = syn.make_dataset(pool, 4, seed=2)
    h1 = syn.save_dataset(tmp_path / "a", samples, 2, syn.CameraRanges())
    h2 = syn.save_dataset(tmp_path / "b", syn.make_dataset(pool, 4, seed=2), 2, syn.CameraRanges())
    assert h1 == h2
    maps, delta, trans, focal, manifest = syn.load_dataset_arrays(tmp_path / "a")
    assert manifest["count"] == 4 and manifest["ranges"]["focal_min"] == 350.0
    np.testing.assert_array_equal(maps[1], samples[1].heatmaps.maps.astype(np.float32))
    np.testing.assert_allclose(delta[3], samples[3].target.delta)
    assert focal[0] == samples[0].focal
