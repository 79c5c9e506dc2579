"""Command-line interface.

Subcommands: `scene render`, `carve`, `mask`, `run`, `eval`, `export-mesh`.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .carving import carve, load_grid, save_grid
from .dataset import load as load_dataset
from .geometry import CameraPose, Intrinsics
from .mesh import export_mesh
from .pipeline import PipelineConfig, acquire_outpaint_masks, mask_iou, psnr, run
from .scene import AnalyticSurface, render_color, render_view
from .schedule import check_intervals, default_schedule, load_schedule, prefix
from . import imgio


def _add_common_scene(p):
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--img-size", type=int, default=384)


def _schedule_from_args(args):
    if getattr(args, "schedule", None):
        return load_schedule(args.schedule)
    return default_schedule()


def _render_views(scene, schedule, img_size):
    K = Intrinsics.from_fov(img_size, img_size, schedule[0].fov_deg)
    surface = AnalyticSurface(scene)
    views = []
    for pose in schedule.poses:
        _d, _n, mask = render_view(surface, pose, K)
        views.append((mask, pose, K))
    return views, surface, K


def cmd_scene_render(args) -> int:
    scene = imgio.load_scene(args.scene)
    pose = CameraPose(polar_deg=args.polar, azimuth_deg=args.azimuth,
                      radius=args.radius, fov_deg=args.fov)
    K = Intrinsics.from_fov(args.img_size, args.img_size, pose.fov_deg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    depth, normal, mask = render_view(AnalyticSurface(scene), pose, K)
    color = render_color(scene, pose, K)
    imgio.write_color_png(color, out / "color.png")
    imgio.write_depth_cpd(depth, out / "depth.cpd")
    imgio.write_normal_cpn(normal, out / "normal.cpn")
    imgio.write_mask_png(mask, out / "mask.png")
    print(f"rendered pose ({pose.polar_deg}, {pose.azimuth_deg}) into {out}")
    return 0


def cmd_carve(args) -> int:
    scene = imgio.load_scene(args.scene)
    schedule = _schedule_from_args(args)
    if args.num_views is not None:
        schedule = prefix(schedule, args.num_views - 1)
    views, surface, _K = _render_views(scene, schedule, args.img_size)
    grid = carve(views, surface, args.grid_res)
    save_grid(grid, args.out)
    print(f"carved {len(views)} views at R={args.grid_res}: "
          f"{grid.occupied_count()} occupied voxels -> {args.out}")
    return 0


def cmd_mask(args) -> int:
    scene = imgio.load_scene(args.scene)
    schedule = _schedule_from_args(args)
    i = args.target_index
    if not 1 <= i < len(schedule):
        raise SystemExit(f"--target-index must be in [1, {len(schedule) - 1}]")
    seen = prefix(schedule, i - 1)
    views, surface, K = _render_views(scene, seen, args.img_size)
    grid = carve(views, surface, args.grid_res)

    # the lift step needs dataset-like records
    from types import SimpleNamespace
    records = []
    for idx, pose in enumerate(seen.poses):
        depth, normal, mask = render_view(surface, pose, K)
        records.append(SimpleNamespace(mask=mask, pose=pose, view_index=idx,
                                       depth=depth, normal=normal))
    dataset = SimpleNamespace(records=records)
    m_vh, m_fg, m_out = acquire_outpaint_masks(
        dataset, surface, grid, schedule[i], K, args.upscale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imgio.write_mask_png(m_vh, out / "vhmask.png")
    imgio.write_mask_png(m_fg, out / "fgmask.png")
    imgio.write_mask_png(m_out, out / "outmask.png")
    print(f"pose {i}: hull {m_vh.area()} px, foreground {m_fg.area()} px, "
          f"outpaint {m_out.area()} px -> {out}")
    return 0


def cmd_run(args) -> int:
    schedule = _schedule_from_args(args)
    for warning in check_intervals(schedule):
        print(f"warning: {warning}", file=sys.stderr)
    stage_commands = {}
    for spec in args.stage or []:
        kind, sep, cmd = spec.partition("=")
        if not sep:
            raise SystemExit(f"--stage expects kind=command, got {spec!r}")
        stage_commands[kind] = cmd
    config = PipelineConfig(
        schedule=schedule,
        grid_resolution=args.grid_res,
        image_size=args.img_size,
        upscale=args.upscale,
        out_dir=Path(args.out),
        seed=args.seed,
        object_tag=args.tag,
        class_word=args.class_word,
        stage_commands=stage_commands,
    )
    scene = imgio.load_scene(args.scene) if args.scene else None
    dataset, grid, report = run(config, scene=scene,
                                initial_view_dir=args.initial_view,
                                resume=args.resume)
    print(f"run complete: {len(dataset)} views, "
          f"{grid.occupied_count()} occupied voxels, report in {config.out_dir}")
    return 0


def cmd_eval(args) -> int:
    scene = imgio.load_scene(args.scene)
    dataset = load_dataset(args.dataset)
    K = Intrinsics.from_fov(dataset[0].mask.width, dataset[0].mask.height,
                            dataset[0].pose.fov_deg)
    surface = AnalyticSurface(scene)
    rows = []
    for rec in dataset.records:
        _d, _n, true_mask = render_view(surface, rec.pose, K)
        true_color = render_color(scene, rec.pose, K)
        p = psnr(rec.color, true_color)
        rows.append({
            "view_index": rec.view_index,
            "mask_iou": mask_iou(rec.mask, true_mask),
            "psnr_db": None if p == float("inf") else p,
            "identical_color": p == float("inf"),
        })
    doc = {"views": rows}
    if args.grid:
        grid = load_grid(args.grid)
        dataset_views = [(r.mask, r.pose, K) for r in dataset.records]
        oracle_grid = carve(dataset_views, surface, grid.resolution)
        inter = int(np.logical_and(grid.occupancy, oracle_grid.occupancy).sum())
        union = int(np.logical_or(grid.occupancy, oracle_grid.occupancy).sum())
        doc["grid_iou_vs_oracle_carve"] = inter / union if union else 1.0
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_export_mesh(args) -> int:
    grid = load_grid(args.grid)
    vertices, faces = export_mesh(grid, args.out)
    print(f"exported {len(vertices)} vertices / {len(faces)} faces -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carvepipe",
        description="Progressive space-carved outpainting pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_scene = sub.add_parser("scene", help="synthetic scene utilities")
    scene_sub = p_scene.add_subparsers(dest="scene_command", required=True)
    p_render = scene_sub.add_parser("render", help="render one pose of a scene")
    _add_common_scene(p_render)
    p_render.add_argument("--polar", type=float, default=90.0)
    p_render.add_argument("--azimuth", type=float, default=0.0)
    p_render.add_argument("--radius", type=float, default=3.0)
    p_render.add_argument("--fov", type=float, default=60.0)
    p_render.add_argument("--out", required=True)
    p_render.set_defaults(func=cmd_scene_render)

    p_carve = sub.add_parser("carve", help="carve a hull from oracle views")
    _add_common_scene(p_carve)
    p_carve.add_argument("--schedule", help="schedule JSON (default: built-in)")
    p_carve.add_argument("--num-views", type=int, default=None)
    p_carve.add_argument("--grid-res", type=int, default=128)
    p_carve.add_argument("--out", required=True, help="output grid file")
    p_carve.set_defaults(func=cmd_carve)

    p_mask = sub.add_parser("mask", help="emit hull/foreground/outpainting masks")
    _add_common_scene(p_mask)
    p_mask.add_argument("--schedule")
    p_mask.add_argument("--target-index", type=int, required=True)
    p_mask.add_argument("--grid-res", type=int, default=128)
    p_mask.add_argument("--upscale", type=int, default=8)
    p_mask.add_argument("--out", required=True)
    p_mask.set_defaults(func=cmd_mask)

    p_run = sub.add_parser("run", help="run the full progressive loop")
    p_run.add_argument("--scene", help="synthetic scene JSON (oracle stages)")
    p_run.add_argument("--initial-view", help="directory with color.png of the input view")
    p_run.add_argument("--schedule")
    p_run.add_argument("--grid-res", type=int, default=128)
    p_run.add_argument("--img-size", type=int, default=384)
    p_run.add_argument("--upscale", type=int, default=8)
    p_run.add_argument("--stage", action="append", metavar="KIND=COMMAND",
                       help="external command for a stage kind (repeatable)")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--tag", default="sks")
    p_run.add_argument("--class-word", default="object")
    p_run.add_argument("--resume", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="IoU/PSNR report for a dataset")
    p_eval.add_argument("--scene", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--grid", help="optional grid to compare against an oracle carve")
    p_eval.add_argument("--out", help="write JSON here instead of stdout")
    p_eval.set_defaults(func=cmd_eval)

    p_mesh = sub.add_parser("export-mesh", help="OBJ mesh from a grid file")
    p_mesh.add_argument("--grid", required=True)
    p_mesh.add_argument("--out", required=True)
    p_mesh.set_defaults(func=cmd_export_mesh)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
