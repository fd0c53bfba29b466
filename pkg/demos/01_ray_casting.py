"""Cast rays into a small box scene and measure distances to it."""

import numpy as np

from lidartwin.geometry import Ray, box_mesh, build_bvh, cast_rays, concatenate, intersect, plane_mesh, points_to_mesh_distance

# a 40 m ground plane with one 4 m cube on it
scene = concatenate([plane_mesh(20.0), box_mesh((6.0, 0.0, 2.0), (4.0, 4.0, 4.0), object_id=1, semantic_tag=2)])
bvh = build_bvh(scene)
print(f"{scene.n_triangles} triangles, BVH with {bvh.n_nodes} nodes, depth {bvh.depth()}")

# one ray at a time gives the full hit record
hit = intersect(Ray((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)), bvh, scene)
print("hit at t =", hit.t, "point", hit.point, "object", hit.object_id, "tag", hit.semantic_tag)

# a fan of rays in one call; misses come back as inf / -1
angles = np.radians(np.arange(-30, 31, 10))
dirs = np.stack([np.cos(angles), np.sin(angles), np.full_like(angles, -0.05)], axis=1)
dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
t, tri = cast_rays(np.tile([0.0, 0.0, 1.0], (len(dirs), 1)), dirs, 50.0, bvh)
for a, ti, k in zip(np.degrees(angles), t, tri):
    print(f"  azimuth {a:+5.0f} deg -> range {ti:6.2f} m (triangle {k})")

# distances from a few points to the closest surface
pts = np.array([[0.0, 0.0, 0.795], [6.0, 0.0, 5.0], [9.0, 0.0, 2.0]])
print("point-to-mesh:", points_to_mesh_distance(pts, bvh))
