import numpy as np
import pytest

from lidartwin.errors import SpecInconsistent, ValidationError
from lidartwin.geometry import ROAD, box_mesh, concatenate, plane_mesh, points_to_mesh_distance
from lidartwin.sensor import (
    SceneSnapshot,
    SensorPose,
    SensorSpec,
    build_scan_pattern,
    ray_noise,
    scan_frame,
    units_to_meters,
)


def spec(**kw):
    base = dict(channels=16, horizontal_resolution=1.0, h_fov=(0, 360), v_fov=(-30, -5), range_max=100.0, point_rate=1e6)
    base.update(kw)
    return SensorSpec(**base)


@pytest.fixture(scope="module")
def ground():
    return SceneSnapshot.build(plane_mesh(1e4, semantic_tag=ROAD))


@pytest.mark.parametrize("units,meters", [(100, 1.0), (0, 0.0), (250, 2.5)])
def test_units_to_meters(units, meters):
    assert units_to_meters(units) == meters


def test_pattern_size_64_channel():
    p = build_scan_pattern(spec(channels=64, horizontal_resolution=0.2, v_fov=(-25, 15), point_rate=1.2e6))
    assert len(p) == 64 * 1800 == 115_200


def test_single_channel_flat_fov():
    p = build_scan_pattern(spec(channels=1, v_fov=(0, 0)))
    assert np.all(p.elevation == 0.0)


def test_inclusive_elevations_and_ordering():
    p = build_scan_pattern(spec(channels=3, v_fov=(-10, 10), h_fov=(0, 90), horizontal_resolution=30))
    assert sorted(set(p.elevation.tolist())) == [-10.0, 0.0, 10.0]
    assert p.azimuth.tolist() == [0.0] * 3 + [30.0] * 3 + [60.0] * 3
    assert p.elevation.tolist() == [-10.0, 0.0, 10.0] * 3


def test_point_rate_inconsistency():
    with pytest.raises(SpecInconsistent):
        build_scan_pattern(spec(channels=64, horizontal_resolution=0.2, point_rate=1e5))


def test_pattern_is_deterministic():
    s = spec()
    a, b = build_scan_pattern(s), build_scan_pattern(s)
    assert a.directions().tobytes() == b.directions().tobytes()


@pytest.mark.parametrize(
    "kw",
    [dict(channels=0), dict(horizontal_resolution=0), dict(v_fov=(5, -5)), dict(range_max=0), dict(dropout_prob=1.0)],
)
def test_spec_invariants(kw):
    with pytest.raises(ValidationError):
        spec(**kw)


def test_nadir_beam_over_plane(ground):
    s = spec(channels=1, v_fov=(-90, -90), horizontal_resolution=10)
    f = scan_frame(s, SensorPose((3.0, -4.0, 2.0)), ground, seed=1)
    assert len(f) == 36
    np.testing.assert_allclose(f.true_range, 2.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(f.measured_range, 2.0, rtol=0, atol=1e-12)
    assert set(f.semantic.tolist()) == {ROAD}
    assert set(f.instance.tolist()) == {0}


def test_positive_pitch_tilts_down(ground):
    s = spec(channels=1, v_fov=(0, 0), h_fov=(0, 1), horizontal_resolution=1)
    f = scan_frame(s, SensorPose((0, 0, 5.0), pitch=30.0), ground, seed=0)
    assert f.true_range[0] == pytest.approx(10.0)
    assert f.points[0, 0] > 0


def test_high_dropout_is_reproducible(ground):
    s = spec(dropout_prob=1 - 1e-3)
    a = scan_frame(s, SensorPose((0, 0, 3)), ground, seed=77)
    b = scan_frame(s, SensorPose((0, 0, 3)), ground, seed=77)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.ray_index.tobytes() == b.ray_index.tobytes()


def test_noise_free_returns_lie_on_mesh():
    mesh = concatenate([plane_mesh(60.0), box_mesh((10, 4, 2), (4, 3, 4)), box_mesh((-8, -9, 3), (5, 5, 6), yaw=0.4)])
    snap = SceneSnapshot.build(mesh)
    f = scan_frame(spec(v_fov=(-30, 10)), SensorPose((0, 0, 2.5), yaw=20, pitch=3, roll=-2), snap, seed=5)
    assert len(f) > 1000
    assert points_to_mesh_distance(f.points, snap.static_bvh).max() < 1e-6


def test_point_count_bounds(ground):
    s = spec()
    full = scan_frame(s, SensorPose((0, 0, 3)), ground, seed=1)
    assert len(full) == s.rays_per_frame
    dropped = scan_frame(spec(dropout_prob=0.1), SensorPose((0, 0, 3)), ground, seed=1)
    assert len(dropped) < s.rays_per_frame
    short = scan_frame(spec(range_max=10.0), SensorPose((0, 0, 3)), ground, seed=1)
    assert len(short) < s.rays_per_frame


def test_intensity_model(ground):
    s = spec(channels=1, v_fov=(-90, -90), horizontal_resolution=90, range_max=8.0)
    f = scan_frame(s, SensorPose((0, 0, 2.0)), ground, seed=1)
    np.testing.assert_allclose(f.intensity, 1.0 - 2.0 / 8.0)
    g = scan_frame(spec(v_fov=(-60, -10)), SensorPose((0, 0, 2.0)), ground, seed=1)
    assert np.all((g.intensity >= 0) & (g.intensity <= 1))


def test_noise_depends_only_on_ray_index():
    u1, n1 = ray_noise(9, 3, 0, 100)
    u2, n2 = ray_noise(9, 3, 0, 1000)
    assert u1.tobytes() == u2[:100].tobytes() and n1.tobytes() == n2[:100].tobytes()
    u3, _ = ray_noise(9, 4, 0, 100)
    assert not np.array_equal(u1, u3)


def test_actor_hits_carry_instance_ids(ground):
    car = box_mesh((8, 0, 0.8), (4.5, 1.9, 1.6), semantic_tag=2, object_id=7)
    snap = SceneSnapshot.build(ground.static_mesh, ground.static_bvh, [car])
    f = scan_frame(spec(v_fov=(-20, 5)), SensorPose((0, 0, 2)), snap, seed=1)
    on_car = f.instance == 7
    assert on_car.sum() > 10
    assert set(f.semantic[on_car].tolist()) == {2}
    assert set(f.semantic[~on_car].tolist()) == {ROAD}


def _rigid(yaw_deg, t):
    c, s = np.cos(np.radians(yaw_deg)), np.sin(np.radians(yaw_deg))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]]), np.asarray(t, float)


def test_pose_equivariance():
    mesh = concatenate([plane_mesh(80.0), box_mesh((12, 3, 2), (4, 6, 4)), box_mesh((-5, 14, 4), (8, 3, 8), yaw=0.7)])
    s = spec(v_fov=(-25, 10), noise_sigma=0.05, dropout_prob=0.1)
    pose = SensorPose((1.0, 2.0, 3.0), yaw=15.0, pitch=4.0, roll=1.0)
    rot, t = _rigid(40.0, (100.0, -50.0, 7.0))
    moved_mesh = mesh.transformed(rot, t)
    moved_pose = SensorPose(tuple(rot @ np.array(pose.position) + t), yaw=pose.yaw + 40.0, pitch=pose.pitch, roll=pose.roll)
    a = scan_frame(s, pose, SceneSnapshot.build(mesh), seed=3)
    b = scan_frame(s, moved_pose, SceneSnapshot.build(moved_mesh), seed=3)
    assert np.array_equal(a.ray_index, b.ray_index)
    np.testing.assert_allclose(a.measured_range, b.measured_range, atol=1e-6)
    np.testing.assert_allclose(a.intensity, b.intensity, atol=1e-6)


def test_scan_is_bit_reproducible():
    mesh = concatenate([plane_mesh(50.0), box_mesh((6, 0, 1), (2, 2, 2))])
    s = spec(noise_sigma=0.03, dropout_prob=0.2)
    a = scan_frame(s, SensorPose((0, 0, 2)), SceneSnapshot.build(mesh), seed=11, frame_index=4)
    b = scan_frame(s, SensorPose((0, 0, 2)), SceneSnapshot.build(mesh), seed=11, frame_index=4)
    for name in ("points", "intensity", "semantic", "instance", "ray_index"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_range_noise_and_dropout_statistics(ground):
    s = spec(channels=64, horizontal_resolution=0.2, v_fov=(-60, -20), noise_sigma=0.05, dropout_prob=0.1, point_rate=1.2e6)
    f = scan_frame(s, SensorPose((0, 0, 3)), ground, seed=2024)
    assert len(f) >= 100_000
    err = f.measured_range - f.true_range
    assert abs(err.std() - 0.05) <= 0.05 * 0.05
    assert abs(err.mean()) < 0.05 * 0.05
    dropped = 1 - len(f) / s.rays_per_frame
    assert abs(dropped - 0.1) <= 0.02
