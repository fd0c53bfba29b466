"""``lidartwin`` command line: prep, validate, simulate, evaluate, report.

Exit codes: 0 success, 1 I/O or data error, 2 validation error. Human
output goes to stderr; JSON goes to files, or stdout with ``--stdout``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import CONFIG_SCHEMA_VERSION, __version__
from .config import load_scene_config
from .dataset import dumps_json
from .errors import ConfigError, DataError, ValidationError
from .geometry import load_obj, save_obj
from .meshprep import PrepConfig, RoiBox, prepare
from .metrics import DEFAULT_VOXEL_SIZE, METRICS, FidelityReport, aggregate, emit_histograms
from .pipeline import evaluate, simulate
from .scenario import validate_scenario

EXIT_OK, EXIT_IO, EXIT_VALIDATION = 0, 1, 2


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cmd_prep(args) -> int:
    roi = RoiBox.parse(args.roi)
    cfg = PrepConfig(roi, args.scale, args.min_component_area)
    mesh = load_obj(args.inp)
    try:
        out, removed = prepare(mesh, cfg)
    except ValidationError as exc:
        raise ValidationError(f"{exc} (ROI {args.roi})") from None
    tmp = Path(args.out).with_name(f".{Path(args.out).name}.tmp")
    save_obj(out, tmp)
    os.replace(tmp, args.out)
    _err(f"triangles: {mesh.n_triangles}→{out.n_triangles}, components removed: {removed}")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = load_scene_config(args.scene)
    report = validate_scenario(config, warmup_steps=args.steps)
    for f in report.findings:
        _err(f"{f.kind}: {f.message}")
    _err(f"{len(report.findings)} finding(s) after {report.steps_run} warm-up steps")
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_simulate(args) -> int:
    config = load_scene_config(args.scene)
    manifest = simulate(config, args.out, args.frames)
    _err(f"wrote {manifest['frames']} frame(s) for {len(manifest['sensors'])} sensor(s) to {args.out}")
    return EXIT_OK


def _emit(args, payload: dict) -> None:
    data = dumps_json(payload)
    if args.out:
        atomic_write(args.out, data)
    if args.stdout:
        sys.stdout.write(data.decode("utf-8"))


def cmd_evaluate(args) -> int:
    reference = Path(args.reference) if args.reference else None
    mesh_path = Path(args.mesh) if args.mesh else None
    if reference is not None and reference.suffix.lower() == ".obj":
        mesh_path, reference = reference, None
    if reference is None and mesh_path is None:
        raise ValidationError("evaluate needs --reference and/or --mesh")
    mesh = load_obj(mesh_path) if mesh_path is not None else None
    report = evaluate(args.candidate, reference, mesh, args.voxel_size, args.verbose)
    _emit(args, report)
    if args.hist_dir:
        values = {m: [p[m] for p in report["pairs"] if m in p] for m in METRICS}
        emit_histograms(FidelityReport(values, {m: [] for m in METRICS}), args.hist_dir)
    for m in METRICS:
        if report["means"][m] is not None:
            _err(f"{m}: {report['means'][m]:.6g}")
    return EXIT_OK


def _load_report(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing report {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"unreadable report {path}: {exc}") from None


def cmd_report(args) -> int:
    x, y = _load_report(args.candidate), _load_report(args.baseline)
    rep = aggregate(x, y, args.label_candidate, args.label_baseline)
    _err(rep.table())
    for line in rep.summary_lines():
        _err(line)
    _emit(args, rep.to_dict())
    if args.hist_dir:
        emit_histograms(rep, args.hist_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lidartwin", description="Digital-twin LiDAR simulation and fidelity metrics.")
    p.add_argument("--version", action="version", version=f"lidartwin {__version__} (config schema {CONFIG_SCHEMA_VERSION})")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prep", help="crop, clean and rescale a reconstructed OBJ mesh")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--roi", required=True, help="xmin,ymin,zmin,xmax,ymax,zmax in meters")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--min-component-area", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("validate", help="static checks and a headless warm-up of the traffic scenario")
    s.add_argument("--scene", required=True)
    s.add_argument("--steps", type=int, default=600)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", help="generate labeled datasets from a scene config")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=None, help="override the config frame count")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", help="fidelity metrics of a dataset against a reference")
    s.add_argument("--candidate", required=True)
    s.add_argument("--reference", help="reference dataset directory or mesh .obj")
    s.add_argument("--mesh", help="reference mesh for P2M when --reference is a dataset")
    s.add_argument("--voxel-size", type=float, default=DEFAULT_VOXEL_SIZE)
    s.add_argument("--out")
    s.add_argument("--hist-dir")
    s.add_argument("--verbose", action="store_true", help="also report the raw (max) Hausdorff distance")
    s.add_argument("--stdout", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="aggregate comparison of two evaluate reports")
    s.add_argument("candidate", help="report.json of the digital-twin dataset")
    s.add_argument("baseline", help="report.json of the dataset compared against")
    s.add_argument("--label-candidate", default="dt")
    s.add_argument("--label-baseline", default="other")
    s.add_argument("--out")
    s.add_argument("--hist-dir")
    s.add_argument("--stdout", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            _err(f"config error: {problem}")
        return EXIT_VALIDATION
    except ValidationError as exc:
        _err(f"error: {exc}")
        return EXIT_VALIDATION
    except (DataError, OSError) as exc:
        _err(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
