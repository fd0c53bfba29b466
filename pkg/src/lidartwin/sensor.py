"""Parametric spinning LiDAR: scan pattern, pose, noise and per-frame scanning."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import SpecInconsistent, ValidationError
from .geometry import Bvh, TriangleMesh, build_bvh, cast_rays, concatenate

UNITS_PER_METER = 100.0


def units_to_meters(v):
    """Simulator length units to meters (100 units = 1 m)."""
    return v / UNITS_PER_METER


def meters_to_units(v):
    return v * UNITS_PER_METER


@dataclass(frozen=True)
class SensorSpec:
    channels: int
    horizontal_resolution: float  # degrees per azimuth step
    h_fov: Tuple[float, float]
    v_fov: Tuple[float, float]
    range_max: float
    point_rate: float
    rotation_rate: float = 10.0
    noise_sigma: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "h_fov", tuple(float(v) for v in self.h_fov))
        object.__setattr__(self, "v_fov", tuple(float(v) for v in self.v_fov))
        problems = []
        if int(self.channels) != self.channels or self.channels < 1:
            problems.append("channels must be an integer >= 1")
        if not 0 < self.horizontal_resolution <= 360:
            problems.append("horizontal_resolution must be in (0, 360]")
        if not 0 < self.h_fov_span <= 360:
            problems.append(f"h_fov span must be in (0, 360], got {self.h_fov}")
        if self.v_fov[0] > self.v_fov[1] or not -90 <= self.v_fov[0] <= self.v_fov[1] <= 90:
            problems.append(f"v_fov must be ordered within [-90, 90], got {self.v_fov}")
        if not self.range_max > 0:
            problems.append("range_max must be positive")
        if not self.point_rate > 0 or not self.rotation_rate > 0:
            problems.append("point_rate and rotation_rate must be positive")
        if not self.noise_sigma >= 0:
            problems.append("noise_sigma must be >= 0")
        if not 0 <= self.dropout_prob < 1:
            problems.append("dropout_prob must be in [0, 1)")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def h_fov_span(self) -> float:
        return self.h_fov[1] - self.h_fov[0]

    @property
    def azimuth_steps(self) -> int:
        return int(np.floor(self.h_fov_span / self.horizontal_resolution + 1e-9))

    @property
    def rays_per_frame(self) -> int:
        return int(self.channels) * self.azimuth_steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["h_fov"] = list(self.h_fov)
        d["v_fov"] = list(self.v_fov)
        return d


@dataclass(frozen=True)
class SensorPose:
    """World placement. Angles in degrees, applied yaw -> pitch -> roll (intrinsic, z-up).

    Positive pitch tilts the sensor's +x axis downward.
    """

    position: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if not all(np.isfinite(v) for v in (*self.position, self.yaw, self.pitch, self.roll)):
            raise ValidationError("sensor pose must be finite")

    def rotation(self) -> np.ndarray:
        """Sensor-to-world rotation matrix."""
        y, p, r = np.radians([self.yaw, self.pitch, self.roll])
        cz, sz = np.cos(y), np.sin(y)
        cy, sy = np.cos(p), np.sin(p)
        cx, sx = np.cos(r), np.sin(r)
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1.0]])
        ry = np.array([[cy, 0, sy], [0, 1.0, 0], [-sy, 0, cy]])
        rx = np.array([[1.0, 0, 0], [0, cx, -sx], [0, sx, cx]])
        return rz @ ry @ rx

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, float) @ self.rotation().T + np.asarray(self.position)

    def to_sensor(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, float) - np.asarray(self.position)) @ self.rotation()

    def to_dict(self) -> dict:
        return {"position": list(self.position), "yaw": self.yaw, "pitch": self.pitch, "roll": self.roll}


@dataclass(frozen=True, eq=False)
class ScanPattern:
    """Ray angles in degrees, azimuth-major then channel."""

    azimuth: np.ndarray
    elevation: np.ndarray

    def __len__(self):
        return len(self.azimuth)

    def directions(self) -> np.ndarray:
        az = np.radians(self.azimuth)
        el = np.radians(self.elevation)
        return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)


def check_point_rate(spec: SensorSpec) -> None:
    demanded = spec.channels * (spec.h_fov_span / spec.horizontal_resolution) * spec.rotation_rate
    if demanded > spec.point_rate * (1 + 1e-12):
        raise SpecInconsistent(
            f"{spec.channels} channels x {spec.h_fov_span / spec.horizontal_resolution:g} steps x "
            f"{spec.rotation_rate:g} Hz = {demanded:g} points/s exceeds point_rate {spec.point_rate:g}"
        )


def build_scan_pattern(spec: SensorSpec) -> ScanPattern:
    check_point_rate(spec)
    steps = spec.azimuth_steps
    az = spec.h_fov[0] + spec.horizontal_resolution * np.arange(steps)
    el = np.linspace(spec.v_fov[0], spec.v_fov[1], int(spec.channels))
    return ScanPattern(np.repeat(az, len(el)), np.tile(el, steps))


# ---------------------------------------------------------------------------
# scanning


@dataclass(frozen=True, eq=False)
class SceneSnapshot:
    """Static twin geometry plus actor geometry frozen at one simulation time."""

    static_mesh: TriangleMesh
    static_bvh: Bvh
    time: float = 0.0
    dynamic_mesh: Optional[TriangleMesh] = None
    dynamic_bvh: Optional[Bvh] = None

    @classmethod
    def build(cls, static_mesh, static_bvh=None, actor_meshes: Sequence[TriangleMesh] = (), time: float = 0.0):
        static_bvh = static_bvh if static_bvh is not None else build_bvh(static_mesh)
        actor_meshes = [m for m in actor_meshes if m.n_triangles]
        if not actor_meshes:
            return cls(static_mesh, static_bvh, time)
        dyn = concatenate(actor_meshes)
        return cls(static_mesh, static_bvh, time, dyn, build_bvh(dyn))


@dataclass(frozen=True, eq=False)
class RawFrame:
    """Returns of one sweep, world frame.

    ``true_range`` is the noise-free hit distance; ``points`` carry the
    range noise. ``candidates`` counts rays that hit before dropout.
    """

    frame_index: int
    time: float
    points: np.ndarray
    true_range: np.ndarray
    measured_range: np.ndarray
    intensity: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    ray_index: np.ndarray
    n_rays: int
    candidates: int

    def __len__(self):
        return len(self.points)


def ray_noise(seed: int, frame_index: int, sensor_index: int, n_rays: int):
    """Per-ray ``(uniform, standard_normal)`` pairs keyed on (seed, sensor, frame, ray).

    Ray ``i`` always consumes Philox outputs ``3i .. 3i+2``, so its values
    depend only on the key and ``i``.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (sensor_index << 32) | (frame_index & 0xFFFFFFFF)], dtype=np.uint64)
    u = np.random.Generator(np.random.Philox(key=key)).random((n_rays, 3))
    normal = np.sqrt(-2.0 * np.log1p(-u[:, 1])) * np.cos(2.0 * np.pi * u[:, 2])
    return u[:, 0], normal


def scan_frame(
    spec: SensorSpec,
    pose: SensorPose,
    snapshot: SceneSnapshot,
    seed: int,
    frame_index: int = 0,
    sensor_index: int = 0,
    pattern: Optional[ScanPattern] = None,
) -> RawFrame:
    pattern = pattern if pattern is not None else build_scan_pattern(spec)
    n = len(pattern)
    rot = pose.rotation()
    dirs = pattern.directions() @ rot.T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(np.asarray(pose.position), (n, 3))

    t, tri = cast_rays(origins, dirs, spec.range_max, snapshot.static_bvh)
    tri_verts = snapshot.static_bvh.tri_verts[np.maximum(tri, 0)]
    semantic = snapshot.static_mesh.semantic_tag[np.maximum(tri, 0)]
    instance = snapshot.static_mesh.object_id[np.maximum(tri, 0)]
    if snapshot.dynamic_bvh is not None:
        t_dyn, tri_dyn = cast_rays(origins, dirs, spec.range_max, snapshot.dynamic_bvh)
        closer = t_dyn < t
        t = np.where(closer, t_dyn, t)
        tri = np.where(closer, tri_dyn, tri)
        k = np.maximum(tri_dyn, 0)
        tri_verts = np.where(closer[:, None, None], snapshot.dynamic_bvh.tri_verts[k], tri_verts)
        semantic = np.where(closer, snapshot.dynamic_mesh.semantic_tag[k], semantic)
        instance = np.where(closer, snapshot.dynamic_mesh.object_id[k], instance)

    hit = tri >= 0
    uniform, normal = ray_noise(seed, frame_index, sensor_index, n)
    keep = hit & (uniform >= spec.dropout_prob)
    idx = np.flatnonzero(keep)

    r = t[idx]
    d = dirs[idx]
    measured = r + spec.noise_sigma * normal[idx] if spec.noise_sigma > 0 else r.copy()
    tv = tri_verts[idx]
    nrm = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cos_inc = np.abs(np.einsum("ij,ij->i", nrm, d))
    intensity = np.clip(cos_inc * (1.0 - r / spec.range_max), 0.0, 1.0)

    return RawFrame(
        frame_index=frame_index,
        time=snapshot.time,
        points=origins[idx] + measured[:, None] * d,
        true_range=r,
        measured_range=measured,
        intensity=intensity,
        semantic=semantic[idx].astype(np.uint32),
        instance=instance[idx].astype(np.uint32),
        ray_index=idx.astype(np.int64),
        n_rays=n,
        candidates=int(hit.sum()),
    )
