"""Ground-truth labeling and the OpenPCDet-style dataset layout.

Layout of one dataset directory (one per sensor)::

    points/NNNNNN.bin    float32 LE records (x, y, z, intensity), sensor frame
    semantic/NNNNNN.bin  uint32 LE semantic id per point
    instance/NNNNNN.bin  uint32 LE instance id per point (0 = static scene)
    labels/NNNNNN.txt    class cx cy cz dx dy dz yaw track_id num_points
    manifest.json        palette, sensor spec and pose, frame list with CRC32s
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import CorruptDataset, DataError, IncompleteDataset, SnapshotMismatch, ValidationError
from .scenario import World
from .sensor import RawFrame, SensorPose

FORMAT_NAME = "lidartwin-openpcdet"
FORMAT_VERSION = 1
POINT_DTYPE = np.dtype("<f4")
ID_DTYPE = np.dtype("<u4")


@dataclass(frozen=True)
class SemanticPalette:
    ids: Dict[str, int]

    def __post_init__(self):
        vals = list(self.ids.values())
        if len(set(vals)) != len(vals):
            raise ValidationError(f"palette ids must be unique: {self.ids}")
        if self.ids.get("background") != 0 or self.ids.get("road") != 1:
            raise ValidationError("palette must map background=0 and road=1")
        if any(v < 2 for k, v in self.ids.items() if k not in ("background", "road")):
            raise ValidationError("foreground ids must be >= 2")

    @classmethod
    def from_catalog(cls, catalog) -> "SemanticPalette":
        ids = {"background": 0, "road": 1}
        for entry in sorted(catalog.values(), key=lambda e: e.semantic_id):
            ids[entry.cls] = entry.semantic_id
        return cls(ids)


@dataclass(frozen=True)
class Box3D:
    cx: float
    cy: float
    cz: float
    dx: float
    dy: float
    dz: float
    yaw: float
    cls: str
    track_id: int
    num_points: int = 0

    def contains(self, points: np.ndarray, eps: float = 1e-6) -> np.ndarray:
        """Oriented containment test (rotation about the box's local z only)."""
        p = np.asarray(points, float)[:, :3] - (self.cx, self.cy, self.cz)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        local = np.stack([c * p[:, 0] + s * p[:, 1], -s * p[:, 0] + c * p[:, 1], p[:, 2]], axis=1)
        return np.all(np.abs(local) <= np.array([self.dx, self.dy, self.dz]) / 2 + eps, axis=1)

    def to_line(self) -> str:
        vals = " ".join(repr(float(v)) for v in (self.cx, self.cy, self.cz, self.dx, self.dy, self.dz, self.yaw))
        return f"{self.cls} {vals} {self.track_id} {self.num_points}"

    @classmethod
    def from_line(cls, line: str) -> "Box3D":
        parts = line.split()
        if len(parts) != 10:
            raise ValueError(f"expected 10 fields, got {len(parts)}")
        f = [float(v) for v in parts[1:8]]
        return cls(*f, cls=parts[0], track_id=int(parts[8]), num_points=int(parts[9]))


@dataclass(eq=False)
class LabeledFrame:
    frame_index: int
    points: np.ndarray  # (n, 4) float32: x, y, z, intensity in the sensor frame
    semantic: np.ndarray
    instance: np.ndarray
    boxes: List[Box3D] = field(default_factory=list)
    time: float = 0.0

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float32).reshape(-1, 4)
        self.semantic = np.ascontiguousarray(self.semantic, dtype=np.uint32).reshape(-1)
        self.instance = np.ascontiguousarray(self.instance, dtype=np.uint32).reshape(-1)
        if not len(self.points) == len(self.semantic) == len(self.instance):
            raise ValidationError("points, semantic and instance must have equal length")

    def same_as(self, other: "LabeledFrame") -> bool:
        """Field-for-field equality, bit-exact on floats."""
        return (
            self.frame_index == other.frame_index
            and np.float64(self.time).tobytes() == np.float64(other.time).tobytes()
            and self.points.tobytes() == other.points.tobytes()
            and self.semantic.tobytes() == other.semantic.tobytes()
            and self.instance.tobytes() == other.instance.tobytes()
            and [b.to_line() for b in self.boxes] == [b.to_line() for b in other.boxes]
        )


def label_frame(raw: RawFrame, world: World, pose: SensorPose) -> LabeledFrame:
    """Attach labels to a scan taken of ``world`` and move everything to the sensor frame.

    Every live actor gets a box, including those with no returns.
    """
    if raw.time != world.time:
        raise SnapshotMismatch(f"frame taken at t={raw.time!r} but actors are at t={world.time!r}")
    rot = pose.rotation()
    xyz = pose.to_sensor(raw.points)
    pts = np.concatenate([xyz, raw.intensity[:, None]], axis=1)
    counts = np.bincount(raw.instance.astype(np.int64), minlength=1)
    boxes = []
    for actor in world.actors:
        center, dims, heading = world.actor_box(actor)
        c = pose.to_sensor(center[None])[0]
        h = rot.T @ np.array([np.cos(heading), np.sin(heading), 0.0])
        n = int(counts[actor.track_id]) if actor.track_id < len(counts) else 0
        boxes.append(Box3D(*c.tolist(), *dims, float(np.arctan2(h[1], h[0])), actor.cls, actor.track_id, n))
    return LabeledFrame(raw.frame_index, pts, raw.semantic, raw.instance, boxes, raw.time)


# ---------------------------------------------------------------------------
# I/O


def _crc(data: bytes) -> str:
    return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"


def frame_files(frame: LabeledFrame) -> Dict[str, bytes]:
    name = f"{frame.frame_index:06d}"
    labels = "".join(b.to_line() + "\n" for b in frame.boxes)
    return {
        f"points/{name}.bin": frame.points.astype(POINT_DTYPE).tobytes(),
        f"semantic/{name}.bin": frame.semantic.astype(ID_DTYPE).tobytes(),
        f"instance/{name}.bin": frame.instance.astype(ID_DTYPE).tobytes(),
        f"labels/{name}.txt": labels.encode("utf-8"),
    }


def dumps_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def replace_dir(tmp: Path, out_dir: Path) -> None:
    """Move a fully written ``tmp`` directory into place at ``out_dir``."""
    if out_dir.exists():
        old = out_dir.with_name(f".{out_dir.name}.old-{os.getpid()}")
        os.replace(out_dir, old)
        os.replace(tmp, out_dir)
        shutil.rmtree(old)
    else:
        os.replace(tmp, out_dir)


def write_dataset(
    frames: Sequence[LabeledFrame],
    out_dir,
    palette: Optional[SemanticPalette] = None,
    sensor: Optional[dict] = None,
    atomic: bool = True,
) -> dict:
    """Write the dataset directory and return its manifest.

    With ``atomic`` the directory is assembled in a sibling temp directory
    and renamed into place, so a failure leaves no partial output.
    """
    out_dir = Path(out_dir)
    palette = palette or SemanticPalette({"background": 0, "road": 1})
    target = out_dir
    try:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        if atomic:
            target = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.tmp-", dir=out_dir.parent))
        for sub in ("points", "semantic", "instance", "labels"):
            (target / sub).mkdir(parents=True, exist_ok=True)
        entries = []
        for frame in frames:
            files = {}
            for rel, data in frame_files(frame).items():
                (target / rel).write_bytes(data)
                files[rel.split("/")[0]] = {"path": rel, "crc32": _crc(data), "bytes": len(data)}
            entries.append(
                {
                    "id": f"{frame.frame_index:06d}",
                    "frame_index": frame.frame_index,
                    "time": frame.time,
                    "num_points": len(frame.points),
                    "num_boxes": len(frame.boxes),
                    "files": files,
                }
            )
        manifest = {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "palette": dict(palette.ids),
            "sensor": sensor or {},
            "frames": entries,
        }
        (target / "manifest.json").write_bytes(dumps_json(manifest))
        if atomic:
            replace_dir(target, out_dir)
    except OSError as exc:
        if atomic and target != out_dir:
            shutil.rmtree(target, ignore_errors=True)
        raise DataError(f"writing dataset {out_dir}: {exc}") from exc
    return manifest


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.is_file():
        raise IncompleteDataset(f"missing manifest {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptDataset(f"unreadable manifest {path}: {exc}") from None
    if manifest.get("format") != FORMAT_NAME:
        raise CorruptDataset(f"{path} is not a {FORMAT_NAME} manifest")
    return manifest


def _read_checked(root: Path, entry: dict) -> bytes:
    path = root / entry["path"]
    if not path.is_file():
        raise IncompleteDataset(f"missing file {path}")
    data = path.read_bytes()
    if _crc(data) != entry["crc32"]:
        raise CorruptDataset(f"checksum mismatch for {path}: expected {entry['crc32']}, got {_crc(data)}")
    return data


def read_dataset(dataset_dir) -> List[LabeledFrame]:
    root = Path(dataset_dir)
    manifest = load_manifest(root)
    frames = []
    for entry in manifest["frames"]:
        files = entry["files"]
        raw = {k: _read_checked(root, files[k]) for k in ("points", "semantic", "instance", "labels")}
        if len(raw["points"]) % 16:
            raise CorruptDataset(f"{root / files['points']['path']}: size is not a multiple of 16 bytes")
        pts = np.frombuffer(raw["points"], POINT_DTYPE).reshape(-1, 4)
        sem = np.frombuffer(raw["semantic"], ID_DTYPE)
        inst = np.frombuffer(raw["instance"], ID_DTYPE)
        if not len(pts) == len(sem) == len(inst):
            raise CorruptDataset(f"frame {entry['id']}: point, semantic and instance counts differ")
        try:
            boxes = [Box3D.from_line(l) for l in raw["labels"].decode("utf-8").splitlines() if l.strip()]
        except ValueError as exc:
            raise CorruptDataset(f"{root / files['labels']['path']}: {exc}") from None
        frames.append(LabeledFrame(int(entry["frame_index"]), pts.astype(np.float32), sem.astype(np.uint32), inst.astype(np.uint32), boxes, float(entry["time"])))
    return frames


def dataset_pose(manifest: dict) -> SensorPose:
    pose = manifest.get("sensor", {}).get("pose")
    return SensorPose(**pose) if pose else SensorPose()
