import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidartwin.errors import DegenerateTriangle, EmptyMesh, ObjParseError
from lidartwin.geometry import (
    Ray,
    TriangleMesh,
    box_mesh,
    build_bvh,
    cast_rays,
    intersect,
    load_obj,
    plane_mesh,
    point_to_mesh_distance,
    point_to_triangle_distance,
    points_to_mesh_distance,
    save_obj,
)
from oracles import brute_force_p2m, brute_force_rays, grid_triangle_distance, random_rays, random_soup


def test_single_triangle_bvh_is_one_leaf(unit_tri):
    bvh = build_bvh(TriangleMesh(unit_tri, [[0, 1, 2]]))
    assert bvh.n_nodes == 1
    assert bvh.leaves() == [0]
    assert bvh.leaf_triangles(0).tolist() == [0]


def test_sixteen_triangles_split_into_small_leaves():
    tris = [[[2 * i, 0, 0], [2 * i + 1, 0, 0], [2 * i, 1, 0]] for i in range(16)]
    mesh = TriangleMesh(np.array(tris).reshape(-1, 3), np.arange(48).reshape(-1, 3))
    bvh = build_bvh(mesh)
    assert bvh.depth() >= 1
    assert all(bvh.count[leaf] <= 8 for leaf in bvh.leaves())


def test_bvh_invariants(rng):
    mesh = random_soup(rng, 1000)
    bvh = build_bvh(mesh)
    owned = np.concatenate([bvh.leaf_triangles(leaf) for leaf in bvh.leaves()])
    assert sorted(owned.tolist()) == list(range(1000))
    tv = mesh.triangle_vertices()

    def descendants(node):
        if bvh.left[node] < 0:
            return bvh.leaf_triangles(node)
        return np.concatenate([descendants(bvh.left[node]), descendants(bvh.right[node])])

    for node in range(bvh.n_nodes):
        pts = tv[descendants(node)].reshape(-1, 3)
        assert np.all(pts >= bvh.lo[node]) and np.all(pts <= bvh.hi[node])


def test_bvh_build_is_deterministic(rng):
    mesh = random_soup(rng, 300)
    a, b = build_bvh(mesh), build_bvh(mesh)
    for name in ("lo", "hi", "left", "right", "start", "count", "order"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_empty_mesh_rejected():
    with pytest.raises(EmptyMesh):
        build_bvh(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))


def test_degenerate_triangle_rejected():
    with pytest.raises(DegenerateTriangle):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(DegenerateTriangle):
        point_to_triangle_distance((0, 0, 1), [[0, 0, 0], [1, 1, 1], [2, 2, 2]])


def test_axis_aligned_hit(unit_tri):
    mesh = TriangleMesh(unit_tri, [[0, 1, 2]])
    bvh = build_bvh(mesh)
    hit = intersect(Ray((0.25, 0.25, 1.0), (0.0, 0.0, -1.0)), bvh, mesh)
    assert hit.t == 1.0
    np.testing.assert_array_equal(hit.point, [0.25, 0.25, 0.0])
    assert hit.triangle_index == 0 and hit.object_id == 0


def test_range_clipping(unit_tri):
    mesh = TriangleMesh(unit_tri, [[0, 1, 2]])
    assert intersect(Ray((0.25, 0.25, 1.0), (0.0, 0.0, -1.0), t_max=0.5), build_bvh(mesh), mesh) is None


def test_ray_validation():
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 2))
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 1), t_max=0)


def test_traversal_matches_brute_force_1000_triangles(rng):
    mesh = random_soup(rng, 1000)
    origins, dirs = random_rays(rng, 100)
    t, idx = cast_rays(origins, dirs, np.inf, build_bvh(mesh))
    bt, bi = brute_force_rays(origins, dirs, np.inf, mesh.triangle_vertices())
    assert np.array_equal(idx >= 0, bi >= 0)
    assert (idx >= 0).sum() > 30
    np.testing.assert_allclose(t[idx >= 0], bt[bi >= 0], rtol=0, atol=1e-9)


def test_nearest_hit_matches_brute_force_200_triangles(rng):
    mesh = random_soup(rng, 200)
    origins, dirs = random_rays(rng, 1000)
    t, idx = cast_rays(origins, dirs, 12.0, build_bvh(mesh))
    bt, bi = brute_force_rays(origins, dirs, 12.0, mesh.triangle_vertices())
    assert np.array_equal(idx, bi)
    np.testing.assert_allclose(t[idx >= 0], bt[bi >= 0], rtol=0, atol=1e-9)


def test_hit_point_lies_on_ray(rng):
    mesh = random_soup(rng, 200)
    bvh = build_bvh(mesh)
    origins, dirs = random_rays(rng, 50)
    for o, d in zip(origins, dirs):
        hit = intersect(Ray(tuple(o), tuple(d)), bvh, mesh)
        if hit is not None:
            assert 0 < hit.t
            np.testing.assert_allclose(hit.point, o + hit.t * d, atol=1e-6)


def test_shared_edge_tie_prefers_lower_index():
    mesh = plane_mesh(1.0)
    bvh = build_bvh(mesh)
    # the diagonal (0,0)-(1,1) is shared by both triangles
    hit = intersect(Ray((0.5, 0.5, 1.0), (0.0, 0.0, -1.0)), bvh, mesh)
    assert hit.triangle_index == 0


def test_point_triangle_distance_regions(unit_tri):
    assert point_to_triangle_distance((0, 0, 1), unit_tri) == 1.0
    assert point_to_triangle_distance((2, 0, 0), unit_tri) == 1.0
    assert point_to_triangle_distance((0.5, 0.5, 0), unit_tri) == 0.0
    assert point_to_triangle_distance((1.0, 1.0, 0), unit_tri) == pytest.approx(np.sqrt(0.5))
    assert point_to_triangle_distance((-1.0, 0.5, 0), unit_tri) == pytest.approx(1.0)


def test_point_triangle_distance_matches_grid_search(rng):
    for _ in range(40):
        tri = rng.uniform(-1, 1, (3, 3))
        p = rng.uniform(-2, 2, 3)
        assert point_to_triangle_distance(p, tri) == pytest.approx(grid_triangle_distance(p, tri), abs=1e-3)


def test_point_on_vertex_has_zero_distance(rng):
    mesh = random_soup(rng, 50)
    bvh = build_bvh(mesh)
    assert point_to_mesh_distance(mesh.vertices[17], bvh, mesh) == 0.0


def test_height_above_large_plane():
    mesh = plane_mesh(500.0, semantic_tag=0)
    assert point_to_mesh_distance((3.0, -7.0, 0.795), build_bvh(mesh), mesh) == pytest.approx(0.795, abs=1e-12)


def test_p2m_matches_brute_force_exactly(rng):
    mesh = random_soup(rng, 300)
    pts = rng.uniform(-2, 12, (500, 3))
    got = points_to_mesh_distance(pts, build_bvh(mesh))
    assert np.array_equal(got, brute_force_p2m(pts, mesh))


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    shift=st.tuples(*[st.floats(-100, 100)] * 3),
)
def test_translation_leaves_distances_unchanged(seed, shift):
    rng = np.random.default_rng(seed)
    mesh = random_soup(rng, 40)
    pts = rng.uniform(-2, 12, (20, 3))
    moved = TriangleMesh(mesh.vertices + shift, mesh.triangles)
    a = points_to_mesh_distance(pts, build_bvh(mesh))
    b = points_to_mesh_distance(pts + shift, build_bvh(moved))
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9 * (1 + np.abs(shift).max()))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 100))
def test_uniform_scaling_scales_distances(seed, scale):
    rng = np.random.default_rng(seed)
    mesh = random_soup(rng, 40)
    pts = rng.uniform(-2, 12, (20, 3))
    a = points_to_mesh_distance(pts, build_bvh(mesh))
    b = points_to_mesh_distance(pts * scale, build_bvh(TriangleMesh(mesh.vertices * scale, mesh.triangles)))
    np.testing.assert_allclose(b, a * scale, rtol=1e-9)


def test_repeat_queries_are_bit_identical(rng):
    mesh = random_soup(rng, 500)
    origins, dirs = random_rays(rng, 300)
    a = cast_rays(origins, dirs, np.inf, build_bvh(mesh))
    b = cast_rays(origins, dirs, np.inf, build_bvh(mesh))
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_box_mesh_is_closed():
    box = box_mesh((0, 0, 1), (4, 2, 2), yaw=0.3)
    assert box.n_triangles == 12
    assert box.areas().sum() == pytest.approx(2 * (8 + 8 + 4))
    bvh = build_bvh(box)
    t, _ = cast_rays(np.array([[0.0, 0.0, 10.0]]), np.array([[0.0, 0.0, -1.0]]), np.inf, bvh)
    assert t[0] == pytest.approx(8.0)


class TestObj:
    def test_round_trip_with_semantics(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n# semantic:road\nf 1 2 3\n# semantic:building\nf 2 4 3\n"
        )
        mesh = load_obj(path)
        assert mesh.semantic_tag.tolist() == [1, 0]
        save_obj(mesh, tmp_path / "out.obj")
        again = load_obj(tmp_path / "out.obj")
        assert again.equals(mesh)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 4\n", 4),
            ("v 0 0\n", 1),
            ("v 0 0 0\nvn 0 0 1\n", 2),
            ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", 4),
            ("v 0 0 x\n", 1),
        ],
    )
    def test_malformed_lines_report_line_number(self, tmp_path, text, line):
        path = tmp_path / "bad.obj"
        path.write_text(text)
        with pytest.raises(ObjParseError) as exc:
            load_obj(path)
        assert exc.value.line_no == line
