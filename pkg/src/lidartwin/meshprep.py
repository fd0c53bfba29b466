"""Reconstruction cleanup: ROI crop, floating-component removal, unit rescale."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyResult, InvalidScale, ValidationError
from .geometry import TriangleMesh

DEFAULT_MIN_COMPONENT_AREA = 1.0


@dataclass(frozen=True)
class RoiBox:
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3 or not all(a < b for a, b in zip(lo, hi)):
            raise ValidationError(f"ROI min {lo} must be below max {hi} on every axis")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def parse(cls, text: str) -> "RoiBox":
        """From ``xmin,ymin,zmin,xmax,ymax,zmax``."""
        try:
            vals = [float(v) for v in text.split(",")]
        except ValueError:
            raise ValidationError(f"ROI {text!r} is not six comma-separated numbers") from None
        if len(vals) != 6:
            raise ValidationError(f"ROI {text!r} is not six comma-separated numbers")
        return cls(tuple(vals[:3]), tuple(vals[3:]))

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, float)
        return np.all((p >= self.min) & (p <= self.max), axis=-1)


@dataclass(frozen=True)
class PrepConfig:
    """Cleanup parameters. ``roi`` is in meters, i.e. after rescaling."""

    roi: RoiBox
    scale: float = 1.0
    min_component_area: float = DEFAULT_MIN_COMPONENT_AREA

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidScale(f"scale must be positive, got {self.scale}")
        if not self.min_component_area >= 0:
            raise ValidationError("min_component_area must be >= 0")


def submesh(mesh: TriangleMesh, keep: np.ndarray) -> TriangleMesh:
    """Triangles selected by ``keep``; unreferenced vertices are dropped in order."""
    keep = np.asarray(keep, bool)
    tris = mesh.triangles[keep]
    used = np.zeros(len(mesh.vertices), bool)
    used[tris.ravel()] = True
    remap = np.cumsum(used) - 1
    return TriangleMesh(mesh.vertices[used], remap[tris], mesh.semantic_tag[keep], mesh.object_id[keep])


def crop_to_roi(mesh: TriangleMesh, roi: RoiBox) -> TriangleMesh:
    """Keep triangles whose centroid lies in the closed ROI box."""
    inside = roi.contains(mesh.triangle_vertices().mean(axis=1))
    if not inside.any():
        raise EmptyResult(f"no triangle centroid lies inside ROI min={roi.min} max={roi.max}")
    return submesh(mesh, inside)


def triangle_components(mesh: TriangleMesh):
    """Label triangles by edge-connected component.

    Returns ``(n_components, labels)``. Two triangles are adjacent when they
    share both vertices of an edge.
    """
    m = mesh.n_triangles
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    edges.sort(axis=1)
    owner = np.tile(np.arange(m), 3)
    _, edge_id = np.unique(edges, axis=0, return_inverse=True)
    edge_id = edge_id.ravel()
    # bipartite triangle/edge graph: triangles sharing an edge node are connected
    n_edges = edge_id.max() + 1
    graph = coo_matrix((np.ones(len(owner)), (owner, m + edge_id)), shape=(m + n_edges, m + n_edges))
    _, labels = connected_components(graph, directed=False)
    tri_labels = labels[:m]
    _, tri_labels = np.unique(tri_labels, return_inverse=True)
    return int(tri_labels.max()) + 1, tri_labels


def remove_floating_components(mesh: TriangleMesh, min_component_area: float) -> TriangleMesh:
    """Delete components with total area below the threshold.

    The largest component by area survives whatever the threshold.
    """
    if min_component_area < 0:
        raise ValidationError("min_component_area must be >= 0")
    n, labels = triangle_components(mesh)
    comp_area = np.bincount(labels, weights=mesh.areas(), minlength=n)
    keep_comp = comp_area >= min_component_area
    keep_comp[int(np.argmax(comp_area))] = True
    keep = keep_comp[labels]
    if keep.all():
        return mesh
    return submesh(mesh, keep)


def rescale(mesh: TriangleMesh, scale: float) -> TriangleMesh:
    if not (np.isfinite(scale) and scale > 0):
        raise InvalidScale(f"scale must be positive, got {scale}")
    return TriangleMesh(mesh.vertices * scale, mesh.triangles, mesh.semantic_tag, mesh.object_id)


def prepare(mesh: TriangleMesh, config: PrepConfig):
    """Rescale to meters, crop, then drop floating geometry.

    Returns ``(mesh, components_removed)``.
    """
    out = crop_to_roi(rescale(mesh, config.scale), config.roi)
    before, _ = triangle_components(out)
    out = remove_floating_components(out, config.min_component_area)
    after, _ = triangle_components(out)
    return out, before - after
