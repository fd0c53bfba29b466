"""Scene-config JSON document.

Every section is checked strictly: unknown keys are errors, and all
problems are gathered and raised together as one :class:`ConfigError`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ConfigError, LidarTwinError
from .meshprep import DEFAULT_MIN_COMPONENT_AREA, RoiBox
from .scenario import (
    DEFAULT_DT,
    ActorCatalogEntry,
    ClassDistribution,
    PathLoop,
    SignalController,
    SpawnPoint,
    TrafficParams,
    World,
    spawn_actors,
)
from .sensor import SensorPose, SensorSpec, check_point_rate

TOP_LEVEL_KEYS = {
    "mesh", "sensors", "paths", "spawn_points", "distribution", "catalog", "signals", "seed", "frames", "dt",
    "warmup_steps", "traffic",
}
REQUIRED_KEYS = {"mesh", "sensors", "paths", "spawn_points", "distribution", "catalog", "seed", "frames"}


@dataclass(frozen=True)
class MeshSection:
    path: Path
    roi: Optional[RoiBox] = None
    scale: float = 1.0
    min_component_area: Optional[float] = None


@dataclass(frozen=True)
class SensorConfig:
    name: str
    spec: SensorSpec
    pose: SensorPose


@dataclass(eq=False)
class SceneConfig:
    mesh: MeshSection
    sensors: List[SensorConfig]
    paths: Dict[str, PathLoop]
    spawn_points: List[SpawnPoint]
    distribution: ClassDistribution
    actor_count: int
    catalog: Dict[str, ActorCatalogEntry]
    signals: List[SignalController] = field(default_factory=list)
    seed: int = 0
    frames: int = 1
    dt: float = DEFAULT_DT
    warmup_steps: int = 0
    params: TrafficParams = field(default_factory=TrafficParams)
    checksum: str = ""

    def initial_world(self) -> World:
        actors = spawn_actors(self.spawn_points, self.distribution, self.catalog, self.actor_count, self.seed, self.paths)
        return World(self.paths, self.catalog, tuple(actors), tuple(self.signals), 0.0, self.params)


class _Checker:
    def __init__(self):
        self.problems: List[str] = []

    def keys(self, obj, where, allowed, required=()):
        if not isinstance(obj, dict):
            self.problems.append(f"{where}: expected an object")
            return False
        for k in sorted(set(obj) - set(allowed)):
            self.problems.append(f"{where}: unknown key {k!r}")
        for k in sorted(set(required) - set(obj)):
            self.problems.append(f"{where}: missing key {k!r}")
        return True

    def build(self, where, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (LidarTwinError, TypeError, ValueError, KeyError) as exc:
            self.problems.append(f"{where}: {exc}")
            return None

    def number(self, obj, key, where, default=None, integer=False):
        v = obj.get(key, default)
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            self.problems.append(f"{where}.{key}: expected {'an integer' if integer else 'a number'}, got {v!r}")
            return default
        return v


def _listed(obj, key, check: _Checker):
    v = obj.get(key, [])
    if not isinstance(v, list):
        check.problems.append(f"{key}: expected a list")
        return []
    return v


def parse_scene_config(doc: dict, base_dir=".", checksum: str = "") -> SceneConfig:
    check = _Checker()
    if not check.keys(doc, "config", TOP_LEVEL_KEYS, REQUIRED_KEYS):
        raise ConfigError(check.problems)
    base_dir = Path(base_dir)

    mesh = None
    m = doc.get("mesh", {})
    if check.keys(m, "mesh", {"path", "roi", "scale", "min_component_area"}, {"path"}):
        roi = None
        if "roi" in m:
            r = m["roi"]
            if isinstance(r, list) and len(r) == 6:
                roi = check.build("mesh.roi", RoiBox, tuple(r[:3]), tuple(r[3:]))
            else:
                check.problems.append("mesh.roi: expected [xmin, ymin, zmin, xmax, ymax, zmax]")
        scale = check.number(m, "scale", "mesh", 1.0)
        if scale is not None and not scale > 0:
            check.problems.append("mesh.scale: must be positive")
        mca = m.get("min_component_area")
        if mca is not None:
            mca = check.number(m, "min_component_area", "mesh", DEFAULT_MIN_COMPONENT_AREA)
        if isinstance(m.get("path"), str):
            mesh = MeshSection(base_dir / m["path"], roi, float(scale or 1.0), mca)
        elif "path" in m:
            check.problems.append("mesh.path: expected a string")

    sensors = []
    raw_sensors = _listed(doc, "sensors", check)
    if "sensors" in doc and not raw_sensors:
        check.problems.append("sensors: at least one sensor is required")
    for i, s in enumerate(raw_sensors):
        where = f"sensors[{i}]"
        if not check.keys(s, where, {"name", "spec", "pose"}, {"spec"}):
            continue
        spec_d = s.get("spec", {})
        spec = None
        if check.keys(spec_d, f"{where}.spec", set(SensorSpec.__dataclass_fields__)):
            spec = check.build(f"{where}.spec", lambda d: SensorSpec(**d), spec_d)
            if spec is not None:
                check.build(f"{where}.spec", check_point_rate, spec)
        pose_d = s.get("pose", {})
        pose = None
        if check.keys(pose_d, f"{where}.pose", {"position", "yaw", "pitch", "roll"}):
            pose = check.build(f"{where}.pose", lambda d: SensorPose(**d), pose_d)
        if spec is not None and pose is not None:
            sensors.append(SensorConfig(str(s.get("name", f"lidar{i}")), spec, pose))
    names = [s.name for s in sensors]
    if len(set(names)) != len(names):
        check.problems.append(f"sensors: names must be unique, got {names}")

    paths = {}
    for i, p in enumerate(_listed(doc, "paths", check)):
        where = f"paths[{i}]"
        if check.keys(p, where, {"id", "waypoints", "speed_limit"}, {"id", "waypoints", "speed_limit"}):
            loop = check.build(where, lambda q: PathLoop(str(q["id"]), q["waypoints"], float(q["speed_limit"])), p)
            if loop is not None:
                if loop.id in paths:
                    check.problems.append(f"{where}: duplicate path id {loop.id!r}")
                paths[loop.id] = loop

    spawn_points = []
    for i, sp in enumerate(_listed(doc, "spawn_points", check)):
        where = f"spawn_points[{i}]"
        if check.keys(sp, where, {"path_id", "arc_offset"}, {"path_id", "arc_offset"}):
            spawn_points.append(SpawnPoint(str(sp["path_id"]), float(check.number(sp, "arc_offset", where, 0.0))))

    distribution, count = None, 0
    d = doc.get("distribution", {})
    if check.keys(d, "distribution", {"weights", "count"}, {"weights", "count"}):
        if isinstance(d.get("weights"), dict):
            distribution = check.build("distribution.weights", ClassDistribution, dict(d["weights"]))
        else:
            check.problems.append("distribution.weights: expected an object")
        count = check.number(d, "count", "distribution", 0, integer=True)
        if count is not None and count < 0:
            check.problems.append("distribution.count: must be >= 0")
        if count is not None and count > len(spawn_points):
            check.problems.append(f"distribution.count: {count} actors but only {len(spawn_points)} spawn points")

    catalog = {}
    for i, c in enumerate(_listed(doc, "catalog", check)):
        where = f"catalog[{i}]"
        if check.keys(c, where, {"class", "dims", "cruise_speed", "semantic_id"}, {"class", "dims", "cruise_speed", "semantic_id"}):
            entry = check.build(
                where,
                lambda q: ActorCatalogEntry(str(q["class"]), tuple(q["dims"]), float(q["cruise_speed"]), int(q["semantic_id"])),
                c,
            )
            if entry is not None:
                catalog[entry.cls] = entry
    sem_ids = [e.semantic_id for e in catalog.values()]
    if len(set(sem_ids)) != len(sem_ids):
        check.problems.append(f"catalog: semantic ids must be unique, got {sem_ids}")
    if distribution is not None:
        for cls, w in sorted(distribution.weights.items()):
            if w > 0 and cls not in catalog:
                check.problems.append(f"distribution.weights: class {cls!r} has no catalog entry")

    signals = []
    for i, s in enumerate(_listed(doc, "signals", check)):
        where = f"signals[{i}]"
        if check.keys(s, where, {"path_id", "arc_position", "green", "red", "offset"}, {"path_id", "arc_position"}):
            sig = check.build(where, lambda d: SignalController(**d), s)
            if sig is not None:
                signals.append(sig)

    params = TrafficParams()
    t = doc.get("traffic", {})
    if check.keys(t, "traffic", {"min_gap", "stop_distance"}):
        params = TrafficParams(
            float(check.number(t, "min_gap", "traffic", params.min_gap)),
            float(check.number(t, "stop_distance", "traffic", params.stop_distance)),
        )

    seed = check.number(doc, "seed", "config", 0, integer=True)
    if seed is not None and not 0 <= seed < 2**64:
        check.problems.append("config.seed: must fit in 64 unsigned bits")
    frames = check.number(doc, "frames", "config", 1, integer=True)
    if frames is not None and frames < 0:
        check.problems.append("config.frames: must be >= 0")
    dt = check.number(doc, "dt", "config", DEFAULT_DT)
    if dt is not None and not dt > 0:
        check.problems.append("config.dt: must be positive")
    warmup = check.number(doc, "warmup_steps", "config", 0, integer=True)
    if warmup is not None and warmup < 0:
        check.problems.append("config.warmup_steps: must be >= 0")

    if check.problems:
        raise ConfigError(check.problems)
    return SceneConfig(
        mesh=mesh,
        sensors=sensors,
        paths=paths,
        spawn_points=spawn_points,
        distribution=distribution,
        actor_count=count,
        catalog=catalog,
        signals=signals,
        seed=seed,
        frames=frames,
        dt=float(dt),
        warmup_steps=warmup,
        params=params,
        checksum=checksum,
    )


def load_scene_config(path) -> SceneConfig:
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid UTF-8 JSON ({exc})") from None
    return parse_scene_config(doc, path.parent, hashlib.sha256(raw).hexdigest())


def palette_for(catalog: Dict[str, ActorCatalogEntry]) -> Dict[str, int]:
    out = {"background": 0, "road": 1}
    for cls, entry in sorted(catalog.items(), key=lambda kv: kv[1].semantic_id):
        out[cls] = entry.semantic_id
    return out


def scene_config_dict(
    mesh_path, sensors, paths, spawn_points, weights, count, catalog, seed, frames, dt=DEFAULT_DT, signals=(), **extra
) -> dict:
    """Assemble a config document from plain values (the inverse of parsing)."""
    doc = {
        "mesh": {"path": str(mesh_path)},
        "sensors": [
            {"name": name, "spec": spec.to_dict(), "pose": pose.to_dict()} for name, spec, pose in sensors
        ],
        "paths": [p.to_dict() if isinstance(p, PathLoop) else p for p in paths],
        "spawn_points": [{"path_id": s.path_id, "arc_offset": s.arc_offset} for s in spawn_points],
        "distribution": {"weights": dict(weights), "count": count},
        "catalog": [
            {"class": e.cls, "dims": list(e.dims), "cruise_speed": e.cruise_speed, "semantic_id": e.semantic_id}
            for e in catalog
        ],
        "signals": [
            {"path_id": s.path_id, "arc_position": s.arc_position, "green": s.green, "red": s.red, "offset": s.offset}
            for s in signals
        ],
        "seed": seed,
        "frames": frames,
        "dt": dt,
    }
    doc.update(extra)
    return doc
