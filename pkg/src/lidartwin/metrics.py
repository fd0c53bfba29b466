"""Synthetic-vs-reference fidelity metrics.

* ``hausdorff_p95``: nearest-rank 95th percentile of the pooled
  bidirectional nearest-neighbor distances.
* ``js_divergence``: base-2 Jensen-Shannon divergence between voxel
  occupancy distributions on a shared grid, in [0, 1].
* ``p2m_mean``: mean point-to-mesh distance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, DegenerateBaseline, EmptyCloud, ValidationError
from .geometry import Bvh, TriangleMesh, build_bvh, points_to_mesh_distance

METRICS = ("hausdorff_p95", "jsd", "p2m_mean")
METRIC_LABELS = {"hausdorff_p95": "P95 Hausdorff", "jsd": "JS Divergence", "p2m_mean": "P2M"}
DEFAULT_VOXEL_SIZE = 0.5
HIST_BINS = 50


def as_cloud(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] < 3:
        p = p.reshape(-1, 3)
    p = np.ascontiguousarray(p[:, :3])
    if len(p) == 0:
        raise EmptyCloud("point cloud is empty")
    if not np.all(np.isfinite(p)):
        raise ValidationError("point cloud has non-finite coordinates")
    return p


def nearest_distances(a, b) -> np.ndarray:
    """For each point of ``a`` the distance to its nearest point of ``b`` (exact k-d tree)."""
    a, b = as_cloud(a), as_cloud(b)
    d, _ = cKDTree(b).query(a, k=1, eps=0.0)
    return d


def nearest_rank(values, q: int = 95) -> float:
    """Value at 1-based rank ceil(q/100 * n) of the sorted values."""
    v = np.sort(np.asarray(values, float))
    if len(v) == 0:
        raise EmptyCloud("no values")
    rank = (q * len(v) + 99) // 100
    return float(v[max(rank, 1) - 1])


def bidirectional_distances(a, b) -> np.ndarray:
    return np.concatenate([nearest_distances(a, b), nearest_distances(b, a)])


def hausdorff_p95(a, b) -> float:
    return nearest_rank(bidirectional_distances(a, b), 95)


def hausdorff_max(a, b) -> float:
    return float(bidirectional_distances(a, b).max())


@dataclass(frozen=True, eq=False)
class VoxelHistogram:
    origin: np.ndarray
    voxel_size: float
    cells: np.ndarray  # (k, 3) int64, lexicographically sorted
    counts: np.ndarray  # (k,) int64, all >= 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def probabilities(self) -> np.ndarray:
        return self.counts / self.total


def shared_origin(a: np.ndarray, b: np.ndarray, voxel_size: float) -> np.ndarray:
    lo = np.minimum(a.min(axis=0), b.min(axis=0))
    return np.floor(lo / voxel_size) * voxel_size


def voxelize(points, origin, voxel_size: float) -> VoxelHistogram:
    p = as_cloud(points)
    idx = np.floor((p - origin) / voxel_size).astype(np.int64)
    cells, counts = np.unique(idx, axis=0, return_counts=True)
    return VoxelHistogram(np.asarray(origin, float), float(voxel_size), cells, counts)


def jsd_from_counts(p_counts: np.ndarray, q_counts: np.ndarray) -> float:
    """Base-2 JSD of two aligned count vectors (zeros allowed)."""
    p = p_counts / p_counts.sum()
    q = q_counts / q_counts.sum()
    m = 0.5 * (p + q)
    kp = np.sum(p[p > 0] * np.log2(p[p > 0] / m[p > 0]))
    kq = np.sum(q[q > 0] * np.log2(q[q > 0] / m[q > 0]))
    return float(min(max(0.5 * kp + 0.5 * kq, 0.0), 1.0))


def js_divergence(a, b, voxel_size: float = DEFAULT_VOXEL_SIZE) -> float:
    if not voxel_size > 0:
        raise ValidationError("voxel_size must be positive")
    a, b = as_cloud(a), as_cloud(b)
    origin = shared_origin(a, b, voxel_size)
    ha, hb = voxelize(a, origin, voxel_size), voxelize(b, origin, voxel_size)
    cells, inverse = np.unique(np.concatenate([ha.cells, hb.cells]), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    pc = np.zeros(len(cells))
    qc = np.zeros(len(cells))
    pc[inverse[: len(ha.cells)]] = ha.counts
    qc[inverse[len(ha.cells):]] = hb.counts
    return jsd_from_counts(pc, qc)


def p2m_distances(points, mesh: TriangleMesh, bvh: Optional[Bvh] = None) -> np.ndarray:
    p = as_cloud(points)
    bvh = bvh if bvh is not None else build_bvh(mesh)
    return points_to_mesh_distance(p, bvh)


def p2m_mean(points, mesh: TriangleMesh, bvh: Optional[Bvh] = None):
    """Returns ``(mean, distances)``."""
    d = p2m_distances(points, mesh, bvh)
    return float(d.mean()), d


# ---------------------------------------------------------------------------
# reports


def percent_reduction(candidate_mean: float, baseline_mean: float) -> float:
    """(1 - candidate/baseline) * 100, rounded to one decimal.

    Equal means give 0.0 even when both are zero.
    """
    if candidate_mean == baseline_mean:
        return 0.0
    if baseline_mean == 0:
        raise DegenerateBaseline("baseline mean is zero; reduction undefined")
    return round((1.0 - candidate_mean / baseline_mean) * 100.0, 1)


@dataclass
class FidelityReport:
    """Two datasets compared metric by metric.

    ``values_x``/``values_y`` hold the per-pair values of each metric; the
    histograms are drawn from these.
    """

    values_x: Dict[str, List[float]]
    values_y: Dict[str, List[float]]
    means_x: Dict[str, Optional[float]] = field(default_factory=dict)
    means_y: Dict[str, Optional[float]] = field(default_factory=dict)
    reductions: Dict[str, Optional[float]] = field(default_factory=dict)
    label_x: str = "dt"
    label_y: str = "other"

    def to_dict(self) -> dict:
        return {
            "labels": {"x": self.label_x, "y": self.label_y},
            "means_x": self.means_x,
            "means_y": self.means_y,
            "reductions_percent": self.reductions,
            "values_x": self.values_x,
            "values_y": self.values_y,
        }

    def table(self) -> str:
        lines = [f"{'metric':<16}{self.label_x:>14}{self.label_y:>14}{'change':>10}"]
        for m in METRICS:
            if self.reductions.get(m) is None:
                continue
            lines.append(
                f"{METRIC_LABELS[m]:<16}{self.means_x[m]:>14.4f}{self.means_y[m]:>14.4f}{-self.reductions[m]:>9.1f}%"
            )
        return "\n".join(lines)

    def summary_lines(self) -> List[str]:
        return [f"{METRIC_LABELS[m]}: {-self.reductions[m]:.1f}%" for m in METRICS if self.reductions.get(m) is not None]


def _values(side) -> Dict[str, List[float]]:
    """Accept an evaluation-report dict, a list of per-pair dicts, or a metric->values mapping.

    A report with ``means`` but no ``pairs`` counts as one pair per metric.
    """
    if isinstance(side, dict) and "pairs" in side:
        side = side["pairs"]
    elif isinstance(side, dict) and "means" in side:
        side = [{m: v for m, v in side["means"].items() if m in METRICS}]
    if isinstance(side, dict):
        return {m: [float(v) for v in side.get(m, []) if v is not None] for m in METRICS}
    return {m: [float(p[m]) for p in side if p.get(m) is not None] for m in METRICS}


def aggregate(reports_x, reports_y, label_x: str = "dt", label_y: str = "other") -> FidelityReport:
    vx, vy = _values(reports_x), _values(reports_y)
    if not any(vx.values()) or not any(vy.values()):
        raise ValidationError("aggregate needs at least one pair on each side")
    rep = FidelityReport(vx, vy, label_x=label_x, label_y=label_y)
    for m in METRICS:
        if vx[m] and vy[m]:
            rep.means_x[m] = float(np.mean(vx[m]))
            rep.means_y[m] = float(np.mean(vy[m]))
            rep.reductions[m] = percent_reduction(rep.means_x[m], rep.means_y[m])
        else:
            rep.means_x[m] = float(np.mean(vx[m])) if vx[m] else None
            rep.means_y[m] = float(np.mean(vy[m])) if vy[m] else None
            rep.reductions[m] = None
    return rep


def histogram_csv(values_dt: Sequence[float], values_other: Sequence[float], bins: int = HIST_BINS) -> str:
    a = np.asarray(values_dt, float)
    b = np.asarray(values_other, float)
    pooled = np.concatenate([a, b])
    if len(pooled) == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
    else:
        edges = np.histogram_bin_edges(pooled, bins=bins, range=(pooled.min(), pooled.max()))
    ca, _ = np.histogram(a, edges)
    cb, _ = np.histogram(b, edges)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_left", "bin_right", "count_dt", "count_other"])
    for lo, hi, x, y in zip(edges[:-1], edges[1:], ca, cb):
        w.writerow([repr(float(lo)), repr(float(hi)), int(x), int(y)])
    return buf.getvalue()


def emit_histograms(report: FidelityReport, out_dir, bins: int = HIST_BINS) -> List[Path]:
    """One ``<metric>.csv`` per metric in ``out_dir``."""
    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for m in METRICS:
            path = out_dir / f"{m}.csv"
            path.write_text(histogram_csv(report.values_x.get(m, []), report.values_y.get(m, []), bins), encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise DataError(f"writing histograms to {out_dir}: {exc}") from exc
    return written
