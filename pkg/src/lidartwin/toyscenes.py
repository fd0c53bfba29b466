"""Small synthetic scenes for demos and tests: gridded ground, box buildings, square loops."""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np

from .geometry import BACKGROUND, ROAD, TriangleMesh, box_mesh, concatenate
from .scenario import ActorCatalogEntry, PathLoop

DEFAULT_CATALOG = (
    ActorCatalogEntry("car", (4.5, 1.9, 1.6), 10.0, 2),
    ActorCatalogEntry("truck", (8.0, 2.5, 3.2), 8.0, 3),
    ActorCatalogEntry("bus", (12.0, 2.6, 3.4), 7.0, 4),
    ActorCatalogEntry("bicycle", (1.8, 0.6, 1.7), 5.0, 5),
    ActorCatalogEntry("pedestrian", (0.6, 0.6, 1.8), 1.4, 6),
)


def ground_grid(half_size: float, cell: float, road_half_width: float = 0.0, road_ring: float = 0.0) -> TriangleMesh:
    """Flat z=0 ground split into ``cell``-sized squares.

    With ``road_ring > 0`` cells whose center lies within ``road_half_width``
    of the square ring of half-extent ``road_ring`` are tagged road.
    """
    n = int(round(2 * half_size / cell))
    xs = np.linspace(-half_size, half_size, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    tris, tags = [], []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b, c, d = a + (n + 1), a + (n + 1) + 1, a + 1
            cx, cy = (xs[i] + xs[i + 1]) / 2, (xs[j] + xs[j + 1]) / 2
            ring_dist = abs(max(abs(cx), abs(cy)) - road_ring)
            tag = ROAD if road_ring > 0 and ring_dist <= road_half_width else BACKGROUND
            tris += [[a, b, c], [a, c, d]]
            tags += [tag, tag]
    return TriangleMesh(verts, np.array(tris), np.array(tags))


def block_scene(
    buildings: Iterable[Tuple[Sequence[float], Sequence[float]]],
    half_size: float = 40.0,
    cell: float = 4.0,
    road_ring: float = 15.0,
    road_half_width: float = 4.0,
) -> TriangleMesh:
    """Ground grid with a ring road plus box buildings standing on it.

    ``buildings`` holds ``((x, y), (dx, dy, dz))`` pairs.
    """
    parts = [ground_grid(half_size, cell, road_half_width, road_ring)]
    for (x, y), (dx, dy, dz) in buildings:
        parts.append(box_mesh((x, y, dz / 2), (dx, dy, dz), semantic_tag=BACKGROUND))
    return concatenate(parts)


def square_loop(path_id: str, half_extent: float, speed_limit: float = 13.9, z: float = 0.0, clockwise=False) -> PathLoop:
    h = float(half_extent)
    pts = [(-h, -h), (h, -h), (h, h), (-h, h)]
    if clockwise:
        pts = pts[::-1]
    wp = [(x, y, z) for x, y in pts] + [(pts[0][0], pts[0][1], z)]
    return PathLoop(path_id, np.array(wp), speed_limit)
