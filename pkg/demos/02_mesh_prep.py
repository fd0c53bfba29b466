"""Clean a photogrammetry-style mesh: rescale to meters, crop to a ROI, drop floating shards."""

import tempfile
from pathlib import Path

from lidartwin.geometry import box_mesh, concatenate, load_obj, plane_mesh, save_obj
from lidartwin.meshprep import PrepConfig, RoiBox, prepare, triangle_components

# the raw model is in centimeters: 1 m of ground is 100 units
raw = concatenate(
    [
        plane_mesh(3000.0),  # 60 m x 60 m ground
        box_mesh((500.0, 500.0, 400.0), (800.0, 600.0, 800.0)),  # a building
        box_mesh((-900.0, 200.0, 1500.0), (20.0, 20.0, 20.0)),  # a small shard in mid air
        box_mesh((20000.0, 0.0, 0.0), (500.0, 500.0, 500.0)),  # far outside the area we care about
    ]
)
n, _ = triangle_components(raw)
print(f"raw: {raw.n_triangles} triangles in {n} components")

cfg = PrepConfig(RoiBox((-25.0, -25.0, -1.0), (25.0, 25.0, 30.0)), scale=0.01, min_component_area=1.0)
clean, removed = prepare(raw, cfg)
print(f"clean: {clean.n_triangles} triangles, {removed} floating component(s) removed")
print("bounds (m):", clean.bounds())

# OBJ round trip, the same format the CLI `prep` subcommand reads and writes
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "clean.obj"
    save_obj(clean, path)
    print("reloaded equal:", load_obj(path).equals(clean))
