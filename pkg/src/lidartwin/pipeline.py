"""End-to-end runs: scene config -> labeled datasets, datasets -> fidelity report."""

from __future__ import annotations

import shutil
import tempfile
import time
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from . import CONFIG_SCHEMA_VERSION, __version__
from .config import SceneConfig
from .dataset import SemanticPalette, dataset_pose, dumps_json, label_frame, load_manifest, read_dataset, replace_dir, write_dataset
from .errors import DataError, ValidationError
from .geometry import DEFAULT_STATIC_TAGS, TriangleMesh, build_bvh, load_obj
from .meshprep import crop_to_roi, remove_floating_components, rescale
from .metrics import DEFAULT_VOXEL_SIZE, METRICS, hausdorff_max, hausdorff_p95, js_divergence, p2m_mean
from .scenario import step, validate_scenario
from .sensor import SceneSnapshot, build_scan_pattern, scan_frame


def load_scene_mesh(config: SceneConfig) -> TriangleMesh:
    m = config.mesh
    mesh = load_obj(m.path, DEFAULT_STATIC_TAGS)
    if m.scale != 1.0:
        mesh = rescale(mesh, m.scale)
    if m.roi is not None:
        mesh = crop_to_roi(mesh, m.roi)
    if m.min_component_area is not None:
        mesh = remove_floating_components(mesh, m.min_component_area)
    return mesh


def run_frames(config: SceneConfig, mesh: TriangleMesh, frames: Optional[int] = None):
    """Simulate and label. Returns ``{sensor name: [LabeledFrame, ...]}``."""
    frames = config.frames if frames is None else frames
    static_bvh = build_bvh(mesh)
    patterns = [build_scan_pattern(s.spec) for s in config.sensors]
    world = config.initial_world()
    for _ in range(config.warmup_steps):
        world = step(world, config.dt)
    out: Dict[str, list] = {s.name: [] for s in config.sensors}
    for f in range(frames):
        snap = SceneSnapshot.build(mesh, static_bvh, world.actor_meshes(), world.time)
        for si, (sensor, pattern) in enumerate(zip(config.sensors, patterns)):
            raw = scan_frame(sensor.spec, sensor.pose, snap, config.seed, f, si, pattern)
            out[sensor.name].append(label_frame(raw, world, sensor.pose))
        world = step(world, config.dt)
    return out


def simulate(config: SceneConfig, out_dir, frames: Optional[int] = None) -> dict:
    """Write one dataset per sensor plus ``run_manifest.json`` under ``out_dir``.

    Everything is written to a temporary sibling and renamed into place.
    """
    static = validate_scenario(config, warmup_steps=0)
    if not static.ok:
        raise ValidationError("; ".join(f.message for f in static.findings))
    out_dir = Path(out_dir)
    frames = config.frames if frames is None else frames
    timings = {}
    t0 = time.perf_counter()
    mesh = load_scene_mesh(config)
    timings["load_mesh_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    labeled = run_frames(config, mesh, frames)
    timings["simulate_s"] = time.perf_counter() - t0

    palette = SemanticPalette.from_catalog(config.catalog)
    t0 = time.perf_counter()
    try:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.tmp-", dir=out_dir.parent))
    except OSError as exc:
        raise DataError(f"cannot create output next to {out_dir}: {exc}") from exc
    try:
        outputs = []
        for sensor in config.sensors:
            echo = {"name": sensor.name, "spec": sensor.spec.to_dict(), "pose": sensor.pose.to_dict()}
            write_dataset(labeled[sensor.name], tmp / sensor.name, palette, echo, atomic=False)
            outputs.append(str(out_dir / sensor.name))
        timings["write_s"] = time.perf_counter() - t0
        run_manifest = {
            "tool_version": __version__,
            "config_schema_version": CONFIG_SCHEMA_VERSION,
            "config_sha256": config.checksum,
            "seed": config.seed,
            "frames": frames,
            "sensors": [s.name for s in config.sensors],
            "outputs": outputs,
            "timings": timings,
        }
        (tmp / "run_manifest.json").write_bytes(dumps_json(run_manifest))
        replace_dir(tmp, out_dir)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise DataError(f"writing {out_dir}: {exc}") from exc
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return run_manifest


# ---------------------------------------------------------------------------
# evaluation


def world_points(frame, pose) -> np.ndarray:
    return pose.to_world(frame.points[:, :3].astype(np.float64))


def evaluate(
    candidate_dir,
    reference=None,
    mesh: Optional[TriangleMesh] = None,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    verbose: bool = False,
) -> dict:
    """Per-frame metrics of a candidate dataset.

    ``reference`` is another dataset directory (frames paired by position)
    or ``None``. Hausdorff and JSD need a reference dataset; P2M needs
    ``mesh``. Clouds are compared in world coordinates. The raw (max)
    Hausdorff distance is only included with ``verbose``.
    """
    cand_manifest = load_manifest(candidate_dir)
    cand_pose = dataset_pose(cand_manifest)
    cand = read_dataset(candidate_dir)
    ref = ref_pose = None
    if reference is not None:
        ref_pose = dataset_pose(load_manifest(reference))
        ref = read_dataset(reference)
    bvh = build_bvh(mesh) if mesh is not None else None

    n = len(cand) if ref is None else min(len(cand), len(ref))
    pairs, skipped = [], []
    for i in range(n):
        a = world_points(cand[i], cand_pose)
        row = {"frame": cand[i].frame_index}
        if len(a) == 0 or (ref is not None and len(ref[i].points) == 0):
            skipped.append(cand[i].frame_index)
            continue
        if ref is not None:
            b = world_points(ref[i], ref_pose)
            row["reference_frame"] = ref[i].frame_index
            row["hausdorff_p95"] = hausdorff_p95(a, b)
            if verbose:
                row["hausdorff_max"] = hausdorff_max(a, b)
            row["jsd"] = js_divergence(a, b, voxel_size)
        if bvh is not None:
            row["p2m_mean"] = p2m_mean(a, mesh, bvh)[0]
        pairs.append(row)
    means = {}
    for m in METRICS + (("hausdorff_max",) if verbose else ()):
        vals = [p[m] for p in pairs if m in p]
        means[m] = float(np.mean(vals)) if vals else None
    return {
        "candidate": str(candidate_dir),
        "reference": None if reference is None else str(reference),
        "voxel_size": voxel_size,
        "pairs": pairs,
        "skipped_frames": skipped,
        "means": means,
    }
