"""Closed-loop traffic with weighted spawning, car following and a signal."""

from lidartwin.scenario import ClassDistribution, SignalController, SpawnPoint, World, signal_phase, spawn_actors, step
from lidartwin.toyscenes import DEFAULT_CATALOG, square_loop

catalog = {e.cls: e for e in DEFAULT_CATALOG}
loop = square_loop("ring", 20.0, speed_limit=12.0)
print(f"loop length {loop.length:.0f} m")

spawns = [SpawnPoint("ring", 10.0 * i) for i in range(8)]
actors = spawn_actors(spawns, ClassDistribution({"car": 0.7, "truck": 0.3}), catalog, 5, seed=3, paths={"ring": loop})
for a in actors:
    print(f"  track {a.track_id}: {a.cls:5s} at s={a.s:5.1f} m, {a.speed:.1f} m/s")

signal = SignalController("ring", 45.0, green=10.0, red=10.0)
world = World({"ring": loop}, catalog, tuple(actors), (signal,))

# one minute of simulated time, reported every 10 s
for k in range(1, 601):
    world = step(world, 0.1)
    if k % 100 == 0:
        phase = signal_phase(signal, world.time)
        stopped = sum(a.speed == 0.0 for a in world.actors)
        print(f"t={world.time:5.1f} s  signal {phase:5s}  stopped {stopped}  positions", [round(a.s, 1) for a in world.actors])
