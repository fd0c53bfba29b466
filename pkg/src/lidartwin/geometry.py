"""Triangle meshes, a median-split BVH, ray casting and point-to-mesh distance.

All geometry is float64. The hot loops are numba kernels operating on flat
arrays; the dataclasses around them only hold and validate those arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numba import njit

from .errors import DegenerateTriangle, EmptyMesh, ObjParseError, ValidationError

MIN_TRIANGLE_AREA = 1e-12
DET_EPSILON = 1e-9
LEAF_SIZE = 8

BACKGROUND = 0
ROAD = 1
DEFAULT_STATIC_TAGS = {"background": BACKGROUND, "road": ROAD}


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    tri = vertices[triangles]
    return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle soup with a semantic tag and object id per triangle.

    ``object_id`` is 0 for static scene geometry and the actor track id for
    dynamic geometry.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    semantic_tag: Optional[np.ndarray] = None
    object_id: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = len(t)
        tags = np.zeros(n, np.int32) if self.semantic_tag is None else np.asarray(self.semantic_tag, np.int32)
        oid = np.zeros(n, np.int32) if self.object_id is None else np.asarray(self.object_id, np.int32)
        if tags.shape != (n,) or oid.shape != (n,):
            raise ValidationError("semantic_tag and object_id need one entry per triangle")
        if not np.all(np.isfinite(v)):
            raise ValidationError("mesh has non-finite vertex coordinates")
        if n and (t.min() < 0 or t.max() >= len(v)):
            raise ValidationError("triangle index out of range")
        if n:
            areas = triangle_areas(v, t)
            bad = np.flatnonzero(areas <= MIN_TRIANGLE_AREA)
            if len(bad):
                raise DegenerateTriangle(f"triangle {int(bad[0])} has area {areas[bad[0]]:.3g} m^2")
        for name, arr in (("vertices", v), ("triangles", t), ("semantic_tag", tags), ("object_id", oid)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_vertices(self) -> np.ndarray:
        """(m, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, rotation: np.ndarray, translation) -> "TriangleMesh":
        v = self.vertices @ np.asarray(rotation, float).T + np.asarray(translation, float)
        return TriangleMesh(v, self.triangles, self.semantic_tag, self.object_id)

    def equals(self, other: "TriangleMesh") -> bool:
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.semantic_tag, other.semantic_tag)
            and np.array_equal(self.object_id, other.object_id)
        )


def concatenate(meshes) -> TriangleMesh:
    meshes = [m for m in meshes if m.n_triangles]
    if not meshes:
        raise EmptyMesh("nothing to concatenate")
    offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
    return TriangleMesh(
        np.concatenate([m.vertices for m in meshes]),
        np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)]),
        np.concatenate([m.semantic_tag for m in meshes]),
        np.concatenate([m.object_id for m in meshes]),
    )


def box_mesh(center, dims, yaw: float = 0.0, semantic_tag: int = 0, object_id: int = 0) -> TriangleMesh:
    """Closed 12-triangle box, rotated by ``yaw`` (radians) about +z."""
    dx, dy, dz = (float(d) for d in dims)
    corners = np.array(
        [[sx * dx / 2, sy * dy / 2, sz * dz / 2] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)]
    )
    faces = np.array(
        [
            [0, 2, 1], [1, 2, 3],  # bottom
            [4, 5, 6], [5, 7, 6],  # top
            [0, 1, 4], [1, 5, 4],  # -y
            [2, 6, 3], [3, 6, 7],  # +y
            [0, 4, 2], [2, 4, 6],  # -x
            [1, 3, 5], [3, 7, 5],  # +x
        ]
    )
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return TriangleMesh(
        corners @ rot.T + np.asarray(center, float),
        faces,
        np.full(12, semantic_tag),
        np.full(12, object_id),
    )


def plane_mesh(half_size: float, z: float = 0.0, semantic_tag: int = ROAD, center=(0.0, 0.0)) -> TriangleMesh:
    cx, cy = center
    h = float(half_size)
    v = [[cx - h, cy - h, z], [cx + h, cy - h, z], [cx + h, cy + h, z], [cx - h, cy + h, z]]
    return TriangleMesh(np.array(v), np.array([[0, 1, 2], [0, 2, 3]]), np.full(2, semantic_tag))


# ---------------------------------------------------------------------------
# OBJ subset I/O


def load_obj(path, tags: Optional[dict] = None) -> TriangleMesh:
    """Read ``v``/``f`` lines of an ASCII OBJ file.

    A ``# semantic:<name>`` comment sets the tag for the faces that follow.
    Names are looked up in ``tags`` (default: background=0, road=1); names
    not in the table are tagged background.
    """
    tags = DEFAULT_STATIC_TAGS if tags is None else tags
    vertices, faces, face_tags, face_lines = [], [], [], []
    current = BACKGROUND
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("semantic:"):
                    current = int(tags.get(body[len("semantic:"):].strip(), BACKGROUND))
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise ObjParseError(path, line_no, "vertex needs exactly 3 coordinates")
                try:
                    xyz = [float(p) for p in parts[1:]]
                except ValueError:
                    raise ObjParseError(path, line_no, f"bad vertex coordinate in {line!r}") from None
                if not all(np.isfinite(xyz)):
                    raise ObjParseError(path, line_no, "non-finite vertex coordinate")
                vertices.append(xyz)
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ObjParseError(path, line_no, "only triangulated faces are accepted")
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError:
                    raise ObjParseError(path, line_no, f"bad face index in {line!r}") from None
                if min(idx) < 1:
                    raise ObjParseError(path, line_no, "face indices are 1-based and positive")
                faces.append([i - 1 for i in idx])
                face_tags.append(current)
                face_lines.append(line_no)
            else:
                raise ObjParseError(path, line_no, f"unsupported OBJ statement {parts[0]!r}")
    for f, line_no in zip(faces, face_lines):
        if max(f) >= len(vertices):
            raise ObjParseError(path, line_no, "face references an undefined vertex")
    if not faces:
        raise EmptyMesh(f"{path} contains no faces")
    return TriangleMesh(np.array(vertices), np.array(faces), np.array(face_tags))


def save_obj(mesh: TriangleMesh, path, tag_names: Optional[dict] = None) -> None:
    """Write ``mesh`` as OBJ, grouping consecutive faces by semantic tag."""
    names = {v: k for k, v in (tag_names or DEFAULT_STATIC_TAGS).items()}
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    current = None
    for (i, j, k), tag in zip(mesh.triangles.tolist(), mesh.semantic_tag.tolist()):
        if tag != current:
            lines.append(f"# semantic:{names.get(tag, tag)}")
            current = tag
        lines.append(f"f {i + 1} {j + 1} {k + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# BVH


@dataclass(frozen=True, eq=False)
class Bvh:
    """Flat binary tree; node 0 is the root.

    Leaves have ``left == -1`` and own ``order[start:start + count]``.
    """

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    tri_verts: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def leaves(self):
        return [int(i) for i in np.flatnonzero(self.left < 0)]

    def leaf_triangles(self, node: int) -> np.ndarray:
        s = self.start[node]
        return self.order[s : s + self.count[node]]

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> Bvh:
    """Median split on the longest axis of each node's box."""
    if mesh.n_triangles == 0:
        raise EmptyMesh("cannot build a BVH over an empty mesh")
    tv = np.ascontiguousarray(mesh.triangle_vertices())
    tri_lo, tri_hi = tv.min(axis=1), tv.max(axis=1)
    centroids = tv.mean(axis=1)
    order = np.arange(mesh.n_triangles, dtype=np.int64)

    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(s, n):
        idx = order[s : s + n]
        lo.append(tri_lo[idx].min(axis=0))
        hi.append(tri_hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(n)
        return len(left) - 1

    stack = [new_node(0, mesh.n_triangles)]
    while stack:
        node = stack.pop()
        s, n = start[node], count[node]
        if n <= leaf_size:
            continue
        axis = int(np.argmax(hi[node] - lo[node]))
        idx = order[s : s + n]
        order[s : s + n] = idx[np.argsort(centroids[idx, axis], kind="stable")]
        half = n // 2
        left[node] = new_node(s, half)
        right[node] = new_node(s + half, n - half)
        count[node] = 0
        stack += [right[node], left[node]]
    return Bvh(
        lo=np.array(lo),
        hi=np.array(hi),
        left=np.array(left, np.int64),
        right=np.array(right, np.int64),
        start=np.array(start, np.int64),
        count=np.array(count, np.int64),
        order=order,
        tri_verts=tv,
    )


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _ray_triangle(ox, oy, oz, dx, dy, dz, tri):
    # Moller-Trumbore; returns t or -1.0 on miss
    e1x = tri[1, 0] - tri[0, 0]
    e1y = tri[1, 1] - tri[0, 1]
    e1z = tri[1, 2] - tri[0, 2]
    e2x = tri[2, 0] - tri[0, 0]
    e2y = tri[2, 1] - tri[0, 1]
    e2z = tri[2, 2] - tri[0, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < DET_EPSILON:
        return -1.0
    inv = 1.0 / det
    tx = ox - tri[0, 0]
    ty = oy - tri[0, 1]
    tz = oz - tri[0, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= 0.0:
        return -1.0
    return t


@njit(cache=True)
def _closest_distance(px, py, pz, tri):
    # closest point on a closed triangle by Voronoi region (Ericson)
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    abx, aby, abz = tri[1, 0] - ax, tri[1, 1] - ay, tri[1, 2] - az
    acx, acy, acz = tri[2, 0] - ax, tri[2, 1] - ay, tri[2, 2] - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx, bpy, bpz = px - tri[1, 0], py - tri[1, 1], pz - tri[1, 2]
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        cpx, cpy, cpz = px - tri[2, 0], py - tri[2, 1], pz - tri[2, 2]
        d5 = abx * cpx + aby * cpy + abz * cpz
        d6 = acx * cpx + acy * cpy + acz * cpz
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = tri[1, 0], tri[1, 1], tri[1, 2]
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            w = d1 / (d1 - d3)
            qx, qy, qz = ax + w * abx, ay + w * aby, az + w * abz
        elif d6 >= 0.0 and d5 <= d6:
            qx, qy, qz = tri[2, 0], tri[2, 1], tri[2, 2]
        elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            w = d2 / (d2 - d6)
            qx, qy, qz = ax + w * acx, ay + w * acy, az + w * acz
        elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
            qx = tri[1, 0] + w * (tri[2, 0] - tri[1, 0])
            qy = tri[1, 1] + w * (tri[2, 1] - tri[1, 1])
            qz = tri[1, 2] + w * (tri[2, 2] - tri[1, 2])
        else:
            denom = 1.0 / (va + vb + vc)
            v = vb * denom
            w = vc * denom
            qx = ax + abx * v + acx * w
            qy = ay + aby * v + acy * w
            qz = az + abz * v + acz * w
    ex, ey, ez = px - qx, py - qy, pz - qz
    return np.sqrt(ex * ex + ey * ey + ez * ez)


@njit(cache=True)
def _cast_rays(origins, dirs, t_max, lo, hi, left, right, start, count, order, tri_verts):
    n = origins.shape[0]
    out_t = np.full(n, np.inf)
    out_tri = np.full(n, -1, np.int64)
    stack = np.empty(128, np.int64)
    for r in range(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        ix = 1.0 / dx if dx != 0.0 else np.inf
        iy = 1.0 / dy if dy != 0.0 else np.inf
        iz = 1.0 / dz if dz != 0.0 else np.inf
        best = t_max[r]
        best_tri = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            t0 = 0.0
            t1 = best
            for ax in range(3):
                if ax == 0:
                    o, inv, d = ox, ix, dx
                elif ax == 1:
                    o, inv, d = oy, iy, dy
                else:
                    o, inv, d = oz, iz, dz
                if d == 0.0:
                    if o < lo[node, ax] or o > hi[node, ax]:
                        t0 = 1.0
                        t1 = 0.0
                    continue
                ta = (lo[node, ax] - o) * inv
                tb = (hi[node, ax] - o) * inv
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
            if t0 > t1 * (1.0 + 1e-12) + 1e-12:
                continue
            if left[node] < 0:
                s = start[node]
                for k in range(s, s + count[node]):
                    tri = order[k]
                    t = _ray_triangle(ox, oy, oz, dx, dy, dz, tri_verts[tri])
                    if t > 0.0 and (t < best or (t == best and (best_tri < 0 or tri < best_tri))):
                        best = t
                        best_tri = tri
            else:
                stack[sp] = right[node]
                stack[sp + 1] = left[node]
                sp += 2
        if best_tri >= 0:
            out_t[r] = best
            out_tri[r] = best_tri
    return out_t, out_tri


@njit(cache=True)
def _box_distance(px, py, pz, lo, hi, node):
    d2 = 0.0
    p = (px, py, pz)
    for ax in range(3):
        v = p[ax]
        if v < lo[node, ax]:
            e = lo[node, ax] - v
            d2 += e * e
        elif v > hi[node, ax]:
            e = v - hi[node, ax]
            d2 += e * e
    return np.sqrt(d2)


@njit(cache=True)
def _points_to_mesh(points, lo, hi, left, right, start, count, order, tri_verts):
    n = points.shape[0]
    out = np.empty(n)
    stack = np.empty(128, np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            # slack keeps rounding in the box bound from pruning the true minimum
            if _box_distance(px, py, pz, lo, hi, node) > best * (1.0 + 1e-9) + 1e-12:
                continue
            if left[node] < 0:
                s = start[node]
                for k in range(s, s + count[node]):
                    d = _closest_distance(px, py, pz, tri_verts[order[k]])
                    if d < best:
                        best = d
            else:
                a = left[node]
                b = right[node]
                # visit the nearer child first
                if _box_distance(px, py, pz, lo, hi, a) <= _box_distance(px, py, pz, lo, hi, b):
                    stack[sp] = b
                    stack[sp + 1] = a
                else:
                    stack[sp] = a
                    stack[sp + 1] = b
                sp += 2
        out[i] = best
    return out


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class Ray:
    origin: tuple
    direction: tuple
    t_max: float = np.inf

    def __post_init__(self):
        d = np.asarray(self.direction, float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValidationError("ray direction must be unit length")
        if not self.t_max > 0:
            raise ValidationError("t_max must be positive")


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    triangle_index: int
    object_id: int = 0
    semantic_tag: int = 0


def ray_triangle_intersect(origin, direction, triangle) -> Optional[float]:
    """Distance along ``direction`` to ``triangle`` (3x3), or None on a miss."""
    o = np.asarray(origin, float)
    d = np.asarray(direction, float)
    t = _ray_triangle(o[0], o[1], o[2], d[0], d[1], d[2], np.asarray(triangle, float))
    return None if t < 0 else float(t)


def cast_rays(origins: np.ndarray, directions: np.ndarray, t_max, bvh: Bvh):
    """Nearest hit for each ray.

    Returns ``(t, triangle_index)``; misses have ``t = inf`` and index -1.
    Equal-distance hits resolve to the lowest triangle index.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    t_max = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, float), (len(origins),)))
    return _cast_rays(
        origins, directions, t_max, bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order, bvh.tri_verts
    )


def intersect(ray: Ray, bvh: Bvh, mesh: TriangleMesh) -> Optional[Hit]:
    t, tri = cast_rays(np.asarray(ray.origin, float), np.asarray(ray.direction, float), ray.t_max, bvh)
    if tri[0] < 0:
        return None
    k = int(tri[0])
    point = np.asarray(ray.origin, float) + t[0] * np.asarray(ray.direction, float)
    return Hit(float(t[0]), point, k, int(mesh.object_id[k]), int(mesh.semantic_tag[k]))


def point_to_triangle_distance(p, triangle) -> float:
    tri = np.ascontiguousarray(triangle, dtype=np.float64)
    area = 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    if not area > MIN_TRIANGLE_AREA:
        raise DegenerateTriangle(f"triangle area {area:.3g} m^2 is below {MIN_TRIANGLE_AREA}")
    p = np.asarray(p, float)
    return float(_closest_distance(p[0], p[1], p[2], tri))


def points_to_mesh_distance(points: np.ndarray, bvh: Bvh) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    return _points_to_mesh(pts, bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order, bvh.tri_verts)


def point_to_mesh_distance(p, bvh: Bvh, mesh: TriangleMesh) -> float:
    if mesh.n_triangles == 0:
        raise EmptyMesh("point_to_mesh_distance needs a non-empty mesh")
    return float(points_to_mesh_distance(np.asarray(p, float), bvh)[0])
