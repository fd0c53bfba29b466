import csv
import io

import numpy as np
import pytest

from lidartwin.errors import DegenerateBaseline, EmptyCloud, ValidationError
from lidartwin.geometry import box_mesh, build_bvh, concatenate, plane_mesh
from lidartwin.metrics import (
    aggregate,
    emit_histograms,
    hausdorff_max,
    hausdorff_p95,
    histogram_csv,
    js_divergence,
    jsd_from_counts,
    nearest_rank,
    p2m_mean,
    percent_reduction,
)
from oracles import brute_force_p2m, hausdorff_p95_oracle, jsd_oracle, p2m_oracle, random_soup


def cloud(rng, n, spread=5.0):
    return rng.normal(0, spread, (n, 3))


def test_identical_clouds_have_zero_distance(rng):
    a = cloud(rng, 200)
    assert hausdorff_p95(a, a) == 0.0
    assert js_divergence(a, a) == 0.0


def test_single_pair():
    assert hausdorff_p95([(0, 0, 0)], [(3, 4, 0)]) == 5.0


def test_empty_cloud_rejected():
    with pytest.raises(EmptyCloud):
        hausdorff_p95(np.zeros((0, 3)), [(0, 0, 0)])
    with pytest.raises(EmptyCloud):
        js_divergence([(0, 0, 0)], np.zeros((0, 3)))


@pytest.mark.parametrize("n,expected", [(1, 1), (19, 19), (20, 19), (21, 20), (100, 95)])
def test_nearest_rank(n, expected):
    assert nearest_rank(np.arange(1, n + 1)[::-1], 95) == expected


def test_hausdorff_matches_brute_force(rng):
    for _ in range(10):
        a = cloud(rng, int(rng.integers(1, 500)))
        b = cloud(rng, int(rng.integers(1, 500))) + rng.normal(0, 1, 3)
        assert abs(hausdorff_p95(a, b) - hausdorff_p95_oracle(a, b)) <= 1e-9


def test_hausdorff_is_symmetric_and_bounded_by_max(rng):
    a, b = cloud(rng, 300), cloud(rng, 150, 3.0)
    assert hausdorff_p95(a, b) == hausdorff_p95(b, a)
    assert hausdorff_p95(a, b) <= hausdorff_max(a, b)


def test_jsd_disjoint_supports_is_one():
    a = np.zeros((10, 3))
    assert js_divergence(a, a + 10.0, 0.5) == 1.0


def test_jsd_two_cell_case():
    assert jsd_from_counts(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(0.31128, abs=1e-5)
    a = [(0.1, 0.1, 0.1), (0.2, 0.2, 0.2)]
    b = [(0.1, 0.1, 0.1), (0.7, 0.1, 0.1)]
    assert js_divergence(a, b, 0.5) == pytest.approx(0.31128, abs=1e-5)


def test_jsd_matches_dictionary_oracle(rng):
    for voxel in (0.25, 0.5, 1.3):
        a = cloud(rng, int(rng.integers(1, 500)), 2.0)
        b = cloud(rng, int(rng.integers(1, 500)), 2.5) + 0.3
        got = js_divergence(a, b, voxel)
        assert abs(got - jsd_oracle(a, b, voxel)) <= 1e-12
        assert 0.0 <= got <= 1.0
        assert got == js_divergence(b, a, voxel)


def test_jsd_integer_voxel_translation_is_exact(rng):
    a = np.round(cloud(rng, 300, 3.0), 3)
    b = np.round(cloud(rng, 200, 3.0), 3)
    shift = np.array([4.0, -2.0, 7.0])  # whole 0.5 m voxels
    assert js_divergence(a + shift, b + shift, 0.5) == js_divergence(a, b, 0.5)


def test_jsd_rejects_bad_voxel():
    with pytest.raises(ValidationError):
        js_divergence([(0, 0, 0)], [(1, 1, 1)], 0.0)


def test_p2m_on_surface_and_at_height(rng):
    mesh = plane_mesh(20.0)
    on = np.column_stack([rng.uniform(-19, 19, (100, 2)), np.zeros(100)])
    assert p2m_mean(on, mesh)[0] <= 1e-9
    mean, d = p2m_mean(on + [0, 0, 1.25], mesh)
    assert mean == pytest.approx(1.25, abs=1e-12)
    assert len(d) == 100


def test_p2m_matches_brute_force(rng):
    mesh = random_soup(rng, 300)
    pts = rng.uniform(-1, 11, (500, 3))
    mean, d = p2m_mean(pts, mesh)
    ref = brute_force_p2m(pts, mesh)
    assert np.array_equal(d, ref)
    assert mean == float(ref.mean())


def _rotation(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.linalg.det(q))


def test_rigid_invariance(rng):
    a, b = cloud(rng, 200), cloud(rng, 250)
    rot, t = _rotation(rng), rng.normal(0, 50, 3)
    assert hausdorff_p95(a @ rot.T + t, b @ rot.T + t) == pytest.approx(hausdorff_p95(a, b), abs=1e-9)
    mesh = concatenate([plane_mesh(10.0), box_mesh((2, 1, 1), (2, 2, 2), yaw=0.3)])
    pts = rng.uniform(-8, 8, (200, 3))
    moved = mesh.transformed(rot, t)
    assert p2m_mean(pts @ rot.T + t, moved)[0] == pytest.approx(p2m_mean(pts, mesh)[0], abs=1e-9)


def test_monotone_degradation():
    sigmas = [0.02, 0.1, 0.5]
    hd = {s: [] for s in sigmas}
    pm = {s: [] for s in sigmas}
    mesh = plane_mesh(30.0)
    bvh = build_bvh(mesh)
    for seed in range(12):
        r = np.random.default_rng(seed)
        a = np.column_stack([r.uniform(-25, 25, (400, 2)), np.zeros(400)])
        for s in sigmas:
            noisy = a + r.normal(0, s, a.shape)
            hd[s].append(hausdorff_p95(a, noisy))
            pm[s].append(p2m_mean(noisy, mesh, bvh)[0])
    for lo, hi in zip(sigmas, sigmas[1:]):
        # paired differences: one-sided 95% bound stays above zero
        for vals in (hd, pm):
            diff = np.array(vals[hi]) - np.array(vals[lo])
            assert diff.mean() - 1.8 * diff.std(ddof=1) / np.sqrt(len(diff)) > 0


@pytest.mark.parametrize(
    "x,y,expected,tol",
    [(3.645, 12.237, 70.2, 0.0), (0.184, 0.505, 63.6, 0.2), (0.795, 2.648, 70.0, 0.2), (1.0, 1.0, 0.0, 0.0)],
)
def test_percent_reduction(x, y, expected, tol):
    assert abs(percent_reduction(x, y) - expected) <= tol + 1e-12


def test_zero_baseline_is_degenerate():
    with pytest.raises(DegenerateBaseline):
        percent_reduction(1.0, 0.0)
    assert percent_reduction(0.0, 0.0) == 0.0


def test_aggregate_means_and_identity():
    x = [{"hausdorff_p95": 3.0, "jsd": 0.1, "p2m_mean": 1.0}, {"hausdorff_p95": 5.0, "jsd": 0.3, "p2m_mean": 3.0}]
    rep = aggregate(x, x)
    assert rep.means_x == {"hausdorff_p95": 4.0, "jsd": 0.2, "p2m_mean": 2.0}
    assert set(rep.reductions.values()) == {0.0}
    rep = aggregate({"hausdorff_p95": [3.645]}, {"pairs": [{"hausdorff_p95": 12.237}]})
    assert rep.summary_lines() == ["P95 Hausdorff: -70.2%"]
    assert rep.reductions["jsd"] is None


def test_aggregate_needs_pairs():
    with pytest.raises(ValidationError):
        aggregate([], [{"jsd": 0.1}])


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_histogram_constant_multiset():
    rows = _rows(histogram_csv([1.0, 1.0, 1.0], []))
    assert len(rows) == 50
    populated = [r for r in rows if int(r["count_dt"]) > 0]
    assert len(populated) == 1 and int(populated[0]["count_dt"]) == 3


def test_histogram_conservation_and_range(rng):
    a, b = rng.exponential(1.0, 137), rng.exponential(3.0, 91)
    rows = _rows(histogram_csv(a, b))
    assert sum(int(r["count_dt"]) for r in rows) == 137
    assert sum(int(r["count_other"]) for r in rows) == 91
    assert float(rows[0]["bin_left"]) == min(a.min(), b.min())
    assert float(rows[-1]["bin_right"]) == max(a.max(), b.max())


def test_emit_histograms_is_deterministic(tmp_path):
    rep = aggregate({"hausdorff_p95": [1.0, 2.0], "jsd": [0.1, 0.2], "p2m_mean": [0.3, 0.4]}, {"hausdorff_p95": [5.0], "jsd": [0.5], "p2m_mean": [2.0]})
    first = [p.read_bytes() for p in emit_histograms(rep, tmp_path / "a")]
    second = [p.read_bytes() for p in emit_histograms(rep, tmp_path / "b")]
    assert first == second
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["hausdorff_p95.csv", "jsd.csv", "p2m_mean.csv"]


def test_p2m_matches_projection_oracle(rng):
    mesh = random_soup(rng, 200)
    pts = rng.uniform(-1, 11, (300, 3))
    np.testing.assert_allclose(p2m_mean(pts, mesh)[1], p2m_oracle(pts, mesh), rtol=0, atol=1e-9)
