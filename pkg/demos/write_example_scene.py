"""Write a ready-to-run scene (OBJ in centimeters plus scene.json) for trying the CLI.

    python3 demos/write_example_scene.py work/
"""

import json
import sys
from pathlib import Path

from lidartwin.config import scene_config_dict
from lidartwin.geometry import box_mesh, concatenate, save_obj
from lidartwin.meshprep import rescale
from lidartwin.scenario import SignalController, SpawnPoint
from lidartwin.sensor import SensorPose, SensorSpec
from lidartwin.toyscenes import DEFAULT_CATALOG, block_scene, square_loop

out = Path(sys.argv[1] if len(sys.argv) > 1 else "work")
out.mkdir(parents=True, exist_ok=True)

scene = block_scene([((-6.0, 8.0), (8.0, 6.0, 9.0)), ((9.0, 3.0), (5.0, 10.0, 6.0)), ((-4.0, -8.0), (10.0, 5.0, 12.0))])
shard = box_mesh((0.0, 0.0, 25.0), (0.3, 0.3, 0.3))
raw = rescale(concatenate([scene, shard]), 100.0)  # meters -> engine units
save_obj(raw, out / "raw_cm.obj", {0: "background", 1: "road"})

spec = SensorSpec(32, 0.4, (0.0, 360.0), (-25.0, 10.0), 60.0, 1e6, noise_sigma=0.02, dropout_prob=0.05)
doc = scene_config_dict(
    "scene.obj",
    [("lidar", spec, SensorPose((0.0, 0.0, 2.5), pitch=1.0))],
    [square_loop("ring", 15.0, speed_limit=12.0)],
    [SpawnPoint("ring", 12.0 * i) for i in range(10)],
    {"car": 0.7, "truck": 0.2, "bus": 0.1},
    6,
    DEFAULT_CATALOG,
    seed=17,
    frames=10,
    signals=[SignalController("ring", 30.0, green=20.0, red=20.0)],
)
(out / "scene.json").write_text(json.dumps(doc, indent=2))
print(f"wrote {out / 'raw_cm.obj'} and {out / 'scene.json'}")
