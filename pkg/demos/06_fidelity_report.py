"""Compare a digital-twin dataset and an arbitrary one against a reference capture.

This drives the same steps as the CLI: simulate three datasets, evaluate
two of them against the third, then aggregate the reductions.
"""

import json
import tempfile
from pathlib import Path

from lidartwin.config import load_scene_config, scene_config_dict
from lidartwin.geometry import save_obj
from lidartwin.metrics import aggregate
from lidartwin.pipeline import evaluate, simulate
from lidartwin.scenario import SpawnPoint
from lidartwin.sensor import SensorPose, SensorSpec
from lidartwin.toyscenes import DEFAULT_CATALOG, block_scene, square_loop

reality = block_scene([((-6.0, 8.0), (8.0, 6.0, 9.0)), ((9.0, 3.0), (5.0, 10.0, 6.0)), ((-4.0, -8.0), (10.0, 5.0, 12.0))])
elsewhere = block_scene([((5.0, 9.0), (6.0, 6.0, 4.0)), ((-9.0, 2.0), (4.0, 12.0, 15.0)), ((6.0, -7.0), (14.0, 4.0, 7.0))])
spec = SensorSpec(32, 0.4, (0.0, 360.0), (-25.0, 10.0), 60.0, 1e6, noise_sigma=0.02, dropout_prob=0.05)
loop = square_loop("ring", 15.0, speed_limit=12.0)
spawns = [SpawnPoint("ring", 12.0 * i) for i in range(10)]


def scene(tmp, name, mesh, weights, seed):
    save_obj(mesh, tmp / f"{name}.obj", {0: "background", 1: "road"})
    doc = scene_config_dict(f"{name}.obj", [("lidar", spec, SensorPose((0, 0, 2.5)))], [loop], spawns, weights, 6, DEFAULT_CATALOG, seed, 5)
    (tmp / f"{name}.json").write_text(json.dumps(doc))
    return load_scene_config(tmp / f"{name}.json")


with tempfile.TemporaryDirectory() as d:
    tmp = Path(d)
    mix = {"car": 0.7, "truck": 0.2, "bus": 0.1}
    simulate(scene(tmp, "real", reality, mix, 900), tmp / "real")
    simulate(scene(tmp, "twin", reality, mix, 17), tmp / "twin")
    simulate(scene(tmp, "arbitrary", elsewhere, {"bicycle": 1, "pedestrian": 1}, 17), tmp / "arbitrary")

    twin = evaluate(tmp / "twin" / "lidar", tmp / "real" / "lidar", reality)
    arbitrary = evaluate(tmp / "arbitrary" / "lidar", tmp / "real" / "lidar", reality)
    report = aggregate(twin, arbitrary, "twin", "arbitrary")
    print(report.table())
    print("\n".join(report.summary_lines()))
