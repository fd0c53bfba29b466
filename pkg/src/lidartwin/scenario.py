"""Closed-loop traffic: waypoint loops, weighted spawning, headway and signal gating.

Actors move along closed polylines at constant cruise speed. A follower is
slowed so that its center-to-center gap to the leader never drops below the
headway, and an actor never advances past a stop node while its signal is
red (it halts ``stop_distance`` short of the node).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidDistribution, TooManyActors, ValidationError
from .geometry import TriangleMesh, box_mesh

DEFAULT_DT = 0.1
DEFAULT_MIN_GAP = 2.0
DEFAULT_STOP_DISTANCE = 3.0
DEFAULT_GREEN = 20.0
DEFAULT_RED = 20.0
DEFAULT_STALL_TIME = 60.0

GREEN = "green"
RED = "red"


@dataclass(frozen=True, eq=False)
class PathLoop:
    id: str
    waypoints: np.ndarray
    speed_limit: float

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 3)
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)
        seg = np.linalg.norm(np.diff(w, axis=0), axis=1) if len(w) > 1 else np.zeros(0)
        object.__setattr__(self, "_seg", seg)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    def problems(self) -> List[str]:
        out = []
        w = self.waypoints
        if len(w) < 3:
            out.append(f"path {self.id!r} has {len(w)} waypoints, needs >= 3")
        elif not np.array_equal(w[0], w[-1]):
            out.append(f"path {self.id!r} is not closed: first waypoint {w[0].tolist()} != last {w[-1].tolist()}")
        if not self.length > 0:
            out.append(f"path {self.id!r} has zero length")
        if not self.speed_limit > 0:
            out.append(f"path {self.id!r} speed_limit must be positive")
        return out

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def wrap(self, s):
        return np.mod(s, self.length)

    def pose_at(self, s):
        """Position and heading (radians, from the polyline tangent) at arc length ``s``."""
        s = self.wrap(np.asarray(s, float))
        nz = np.flatnonzero(self._seg > 0)
        seg = nz[np.clip(np.searchsorted(self._cum[nz + 1], s, side="right"), 0, len(nz) - 1)]
        frac = (s - self._cum[seg]) / self._seg[seg]
        a = self.waypoints[seg]
        b = self.waypoints[seg + 1]
        pos = a + frac[..., None] * (b - a)
        heading = np.arctan2(b[..., 1] - a[..., 1], b[..., 0] - a[..., 0])
        return pos, heading

    def to_dict(self) -> dict:
        return {"id": self.id, "waypoints": self.waypoints.tolist(), "speed_limit": self.speed_limit}


@dataclass(frozen=True)
class SpawnPoint:
    path_id: str
    arc_offset: float


@dataclass(frozen=True)
class ClassDistribution:
    weights: Dict[str, float]

    def __post_init__(self):
        if any(not (w >= 0 and np.isfinite(w)) for w in self.weights.values()):
            raise InvalidDistribution("class weights must be finite and non-negative")
        if not any(w > 0 for w in self.weights.values()):
            raise InvalidDistribution("at least one class weight must be positive")

    def normalized(self) -> Tuple[List[str], np.ndarray]:
        names = sorted(self.weights)
        w = np.array([self.weights[k] for k in names], float)
        return names, w / w.sum()


@dataclass(frozen=True)
class ActorCatalogEntry:
    cls: str
    dims: Tuple[float, float, float]  # length (along heading), width, height
    cruise_speed: float
    semantic_id: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValidationError(f"catalog entry {self.cls!r}: dimensions must be three positive numbers")
        if self.cruise_speed < 0:
            raise ValidationError(f"catalog entry {self.cls!r}: cruise_speed must be >= 0")
        if self.semantic_id < 2:
            raise ValidationError(f"catalog entry {self.cls!r}: semantic_id must be >= 2 (0, 1 are reserved)")


@dataclass(frozen=True)
class SignalController:
    path_id: str
    arc_position: float
    green: float = DEFAULT_GREEN
    red: float = DEFAULT_RED
    offset: float = 0.0

    def __post_init__(self):
        if not self.green > 0 or not self.red >= 0:
            raise ValidationError("signal needs green > 0 and red >= 0")


def signal_phase(controller: SignalController, t: float) -> str:
    cycle = controller.green + controller.red
    return GREEN if (t + controller.offset) % cycle < controller.green else RED


@dataclass(frozen=True)
class ActorState:
    track_id: int
    cls: str
    path_id: str
    s: float
    speed: float = 0.0


@dataclass(frozen=True)
class TrafficParams:
    min_gap: float = DEFAULT_MIN_GAP
    stop_distance: float = DEFAULT_STOP_DISTANCE


@dataclass(frozen=True, eq=False)
class World:
    paths: Dict[str, PathLoop]
    catalog: Dict[str, ActorCatalogEntry]
    actors: Tuple[ActorState, ...]
    signals: Tuple[SignalController, ...] = ()
    time: float = 0.0
    params: TrafficParams = field(default_factory=TrafficParams)

    def actor_pose(self, actor: ActorState):
        pos, heading = self.paths[actor.path_id].pose_at(actor.s)
        return pos, float(heading)

    def actor_box(self, actor: ActorState):
        """``(center, dims, yaw)`` of the actor's box in world coordinates."""
        entry = self.catalog[actor.cls]
        pos, heading = self.actor_pose(actor)
        center = pos + np.array([0.0, 0.0, entry.dims[2] / 2])
        return center, entry.dims, heading

    def actor_meshes(self) -> List[TriangleMesh]:
        out = []
        for a in self.actors:
            center, dims, yaw = self.actor_box(a)
            out.append(box_mesh(center, dims, yaw, self.catalog[a.cls].semantic_id, a.track_id))
        return out

    def headway(self, follower: ActorState, leader: ActorState) -> float:
        lf = self.catalog[follower.cls].dims[0]
        ll = self.catalog[leader.cls].dims[0]
        return self.params.min_gap + 0.5 * (lf + ll)


def spawn_actors(
    spawn_points: Sequence[SpawnPoint],
    distribution: ClassDistribution,
    catalog: Dict[str, ActorCatalogEntry],
    n: int,
    seed: int,
    paths: Optional[Dict[str, PathLoop]] = None,
) -> List[ActorState]:
    """Draw ``n`` actors onto distinct spawn points.

    Classes are i.i.d. from the normalized weights. Track ids run 1..n in
    spawn-point order.
    """
    if n > len(spawn_points):
        raise TooManyActors(f"{n} actors requested but only {len(spawn_points)} spawn points")
    names, probs = distribution.normalized()
    missing = [c for c, p in zip(names, probs) if p > 0 and c not in catalog]
    if missing:
        raise InvalidDistribution(f"classes {missing} have weight but no catalog entry")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.permutation(len(spawn_points))[:n])
    classes = rng.choice(len(names), size=n, p=probs)
    actors = []
    for tid, (sp_idx, c) in enumerate(zip(chosen, classes), 1):
        sp = spawn_points[sp_idx]
        cls = names[c]
        speed = catalog[cls].cruise_speed
        if paths is not None:
            speed = min(speed, paths[sp.path_id].speed_limit)
        actors.append(ActorState(tid, cls, sp.path_id, float(sp.arc_offset), float(speed)))
    return actors


def step(world: World, dt: float = DEFAULT_DT) -> World:
    if not dt > 0:
        raise ValidationError("dt must be positive")
    new_actors = {}
    for pid, path in world.paths.items():
        on_path = sorted((a for a in world.actors if a.path_id == pid), key=lambda a: (a.s, a.track_id))
        if not on_path:
            continue
        L = path.length
        n = len(on_path)
        advance = np.empty(n)
        red_nodes = [sig.arc_position for sig in world.signals if sig.path_id == pid and signal_phase(sig, world.time) == RED]
        for i, a in enumerate(on_path):
            adv = min(world.catalog[a.cls].cruise_speed, path.speed_limit) * dt
            for node in red_nodes:
                g = (node - a.s) % L
                adv = 0.0 if g <= world.params.stop_distance else min(adv, g - world.params.stop_distance)
            advance[i] = adv
        if n > 1:
            gaps = np.array([(on_path[(i + 1) % n].s - on_path[i].s) % L for i in range(n)])
            heads = np.array([world.headway(on_path[i], on_path[(i + 1) % n]) for i in range(n)])
            # clamps only ever shrink advances, so this converges; leader-first order makes it fast
            for _ in range(4 * n + 4):
                changed = False
                for i in reversed(range(n)):
                    lim = max(0.0, gaps[i] + advance[(i + 1) % n] - heads[i])
                    if advance[i] > lim:
                        advance[i] = lim
                        changed = True
                if not changed:
                    break
        for a, adv in zip(on_path, advance):
            new_actors[a.track_id] = replace(a, s=float((a.s + adv) % L), speed=float(adv / dt))
    actors = tuple(new_actors.get(a.track_id, a) for a in world.actors)
    return replace(world, actors=actors, time=world.time + dt)


# ---------------------------------------------------------------------------
# validation run


@dataclass(frozen=True)
class Finding:
    kind: str
    message: str


@dataclass
class ScenarioReport:
    findings: List[Finding] = field(default_factory=list)
    steps_run: int = 0

    @property
    def ok(self) -> bool:
        return not self.findings

    def kinds(self) -> List[str]:
        return [f.kind for f in self.findings]


def _spawn_overlaps(spawn_points, paths, min_sep) -> List[Finding]:
    out = []
    by_path: Dict[str, List[float]] = {}
    for sp in spawn_points:
        by_path.setdefault(sp.path_id, []).append(sp.arc_offset)
    for pid, offs in by_path.items():
        L = paths[pid].length if pid in paths else None
        offs = sorted(offs)
        for i in range(len(offs)):
            for j in range(i + 1, len(offs)):
                d = offs[j] - offs[i]
                if L is not None:
                    d = min(d, L - d)
                if d < min_sep:
                    out.append(
                        Finding("overlapping spawn points", f"path {pid!r}: spawn points at {offs[i]:g} and {offs[j]:g} m are {d:g} m apart")
                    )
    return out


def validate_scenario(
    config,
    warmup_steps: int = 600,
    dt: Optional[float] = None,
    stall_time: float = DEFAULT_STALL_TIME,
) -> ScenarioReport:
    """Static checks plus a headless warm-up run.

    ``config`` is a :class:`lidartwin.config.SceneConfig`. An actor standing
    still for longer than ``stall_time`` seconds is reported as a deadlock:
    with the default it cannot be explained by waiting out a normal red phase.
    """
    report = ScenarioReport()
    paths = config.paths
    for p in paths.values():
        report.findings += [Finding("loop closure", m) for m in p.problems()]
    for sp in config.spawn_points:
        if sp.path_id not in paths:
            report.findings.append(Finding("unknown path", f"spawn point references unknown path {sp.path_id!r}"))
        elif not 0 <= sp.arc_offset < paths[sp.path_id].length:
            report.findings.append(
                Finding("spawn offset", f"spawn point at {sp.arc_offset:g} m lies outside path {sp.path_id!r}")
            )
    for sig in config.signals:
        if sig.path_id not in paths:
            report.findings.append(Finding("unknown path", f"signal references unknown path {sig.path_id!r}"))
    report.findings += _spawn_overlaps(config.spawn_points, paths, config.params.min_gap)
    if not report.ok:
        return report

    world = config.initial_world()
    dt = config.dt if dt is None else dt
    still = {a.track_id: 0.0 for a in world.actors}
    flagged = set()
    for k in range(warmup_steps):
        world = step(world, dt)
        for a in world.actors:
            still[a.track_id] = still[a.track_id] + dt if a.speed == 0.0 else 0.0
            if still[a.track_id] > stall_time and a.track_id not in flagged:
                flagged.add(a.track_id)
                report.findings.append(
                    Finding(
                        "deadlock",
                        f"actor {a.track_id} ({a.cls}) on path {a.path_id!r} stalled > {stall_time:g} s at s={a.s:.2f} m",
                    )
                )
        report.steps_run = k + 1
    return report
