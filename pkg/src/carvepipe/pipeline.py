"""The progressive loop: initialize, update camera, acquire outpainting
mask, generate pseudo-ground-truth, update the 3D model.

Each iteration carves the visual hull from the views seen so far,
projects its silhouette at the new pose, subtracts the warped seen
foreground to get the outpainting mask, drives the outpaint / superres /
segment / depth / normal stages, appends the resulting view record, and
re-runs the reconstruct stage. State (dataset + latest grid) is persisted
after every iteration so runs are resumable.
"""

from __future__ import annotations

import json
import math
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .carving import DEFAULT_GRID_RESOLUTION, VoxelGrid, VoxelSurface, carve, hull_silhouette, load_grid
from .dataset import PseudoDataset, ViewRecord, append, init_dataset, load as load_dataset, save as save_dataset
from .errors import PipelineInvariantError, StageError
from .geometry import DEFAULT_IMAGE_SIZE, CameraPose, Intrinsics, angular_distance_deg, pose_to_extrinsics, project_points
from .rasters import MaskImage, NormalMap, RgbImage
from .scene import BACKGROUND_COLOR, SdfScene, Surface, render_color
from .schedule import CameraSchedule, default_schedule
from .stages import (
    GRID_FILE,
    RECONSTRUCT_PARAMS_FILE,
    STAGE_KINDS,
    ExternalStage,
    OracleStages,
    StageRequest,
    build_prompt,
    run_stage,
    write_pose_file,
)
from .warping import LiftedPixels, cull_backpoints, lift_view, outpaint_mask, warp_to_mask
from . import imgio


@dataclass
class PipelineConfig:
    schedule: CameraSchedule = field(default_factory=default_schedule)
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    image_size: int = DEFAULT_IMAGE_SIZE
    upscale: int = 8
    out_dir: Path = Path("out")
    seed: int = 0
    object_tag: str = "sks"
    class_word: str = "object"
    stage_commands: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        for kind in self.stage_commands:
            if kind not in STAGE_KINDS:
                raise ValueError(f"unknown stage kind {kind!r} in stage_commands")

    def intrinsics(self) -> Intrinsics:
        return Intrinsics.from_fov(self.image_size, self.image_size,
                                   self.schedule[0].fov_deg)


@dataclass
class IterationRecord:
    view_index: int
    vh_area: int
    fg_area: int
    outpaint_area: int
    voxel_count: int
    timings: dict

    def to_dict(self) -> dict:
        return {
            "view_index": self.view_index,
            "vh_area": self.vh_area,
            "fg_area": self.fg_area,
            "outpaint_area": self.outpaint_area,
            "voxel_count": self.voxel_count,
            "timings": self.timings,
        }


@dataclass
class RunReport:
    iterations: list = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "iterations": [r.to_dict() for r in self.iterations],
                "final_metrics": self.final_metrics,
            },
            indent=2,
            sort_keys=True,
        )


def mask_iou(a: MaskImage, b: MaskImage) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("mask dimensions disagree")
    inter = int(np.count_nonzero((a.data == 1) & (b.data == 1)))
    union = int(np.count_nonzero((a.data == 1) | (b.data == 1)))
    if union == 0:
        return 1.0
    return inter / union


def psnr(a: RgbImage, b: RgbImage) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError("image dimensions disagree")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def render_model_view(surface: Surface, dataset: PseudoDataset, pose: CameraPose,
                      K: Intrinsics) -> RgbImage:
    """Render the current surface at a pose, coloring each hit by
    back-projecting into the dataset view with the smallest angular
    distance whose mask covers it; uncovered pixels stay background."""
    from .geometry import pixel_grid_directions

    E = pose_to_extrinsics(pose)
    dirs = pixel_grid_directions(K, E, 1)
    hb = surface.hit_batch(pose.center, dirs)
    img = np.full((len(dirs), 3), BACKGROUND_COLOR, dtype=np.uint8)
    remaining = hb.hit.copy()
    order = sorted(range(len(dataset)),
                   key=lambda j: (angular_distance_deg(dataset[j].pose, pose), j))
    for j in order:
        if not remaining.any():
            break
        rec = dataset[j]
        rows = np.nonzero(remaining)[0]
        uv, _z, valid = project_points(K, pose_to_extrinsics(rec.pose), hb.points[rows])
        px = np.floor(uv[:, 0]).astype(np.int64)
        py = np.floor(uv[:, 1]).astype(np.int64)
        ok = valid & (px >= 0) & (px < K.width) & (py >= 0) & (py < K.height)
        ok[ok] = rec.mask.data[py[ok], px[ok]] == 1
        img[rows[ok]] = rec.color.data[py[ok], px[ok]]
        remaining[rows[ok]] = False
    return RgbImage(img.reshape(K.height, K.width, 3))


def acquire_outpaint_masks(dataset: PseudoDataset, surface: Surface,
                           grid: VoxelGrid, pose: CameraPose, K: Intrinsics,
                           upscale: int) -> tuple[MaskImage, MaskImage, MaskImage]:
    """(hull silhouette, warped foreground, outpainting mask) at a pose."""
    m_vh = hull_silhouette(grid, pose, K)
    lifted = LiftedPixels.concatenate(
        [lift_view(rec, surface, K, upscale) for rec in dataset.records]
    )
    kept = cull_backpoints(lifted, pose)
    m_fg = warp_to_mask(kept, pose, K)
    m_out = outpaint_mask(m_vh, m_fg)
    return m_vh, m_fg, m_out


def _check_mask_algebra(m_vh: MaskImage, m_fg: MaskImage, m_out: MaskImage,
                        view_index: int) -> None:
    if np.any((m_out.data == 1) & (m_fg.data == 1)):
        raise PipelineInvariantError(
            f"iteration {view_index}: outpainting mask overlaps the warped foreground"
        )
    if not m_out.is_subset_of(m_vh):
        raise PipelineInvariantError(
            f"iteration {view_index}: outpainting mask leaves the hull silhouette"
        )


class _StageRunner:
    def __init__(self, config: PipelineConfig, scene: SdfScene | None):
        self._backends = {}
        oracle = OracleStages(scene) if scene is not None else None
        missing = []
        for kind in STAGE_KINDS:
            cmd = config.stage_commands.get(kind)
            if cmd is not None:
                argv0 = cmd.split()[0]
                if shutil.which(argv0) is None and not Path(argv0).exists():
                    raise StageError(
                        f"stage command for {kind!r} is not resolvable: {argv0!r}"
                    )
                self._backends[kind] = ExternalStage(cmd)
            elif oracle is not None:
                self._backends[kind] = oracle
            else:
                missing.append(kind)
        if missing:
            raise StageError(
                f"no backend for stages {missing}: provide --stage commands or "
                f"a synthetic scene"
            )

    def run(self, kind: str, input_dir: Path, params: dict | None = None,
            timings: dict | None = None) -> None:
        t0 = time.perf_counter()
        run_stage(StageRequest(kind=kind, input_dir=input_dir, params=params or {}),
                  self._backends[kind])
        if timings is not None:
            timings[kind] = time.perf_counter() - t0


def _assemble_record(work: Path, pose: CameraPose, index: int) -> ViewRecord:
    color = imgio.read_color_png(work / "color.png")
    mask = imgio.read_mask_png(work / "mask.png")
    depth = imgio.read_depth_cpd(work / "depth.cpd")
    normal = imgio.read_normal_cpn(work / "normal.cpn")
    # Clamp to the record contract: no-hit sentinel outside the mask, unit
    # (or zero) normals. Metric predictors may emit dense maps.
    background = mask.data == 0
    d = np.array(depth.data)
    d[background] = np.inf
    n = np.array(normal.data, dtype=np.float64)
    n[background] = 0.0
    norms = np.linalg.norm(n, axis=2)
    fix = norms > 1e-6
    scale = np.abs(norms - 1.0) > 1e-6
    renorm = fix & scale
    n[renorm] /= norms[renorm][:, None]
    return ViewRecord(
        color=color,
        depth=type(depth)(d),
        normal=NormalMap(n.astype(np.float32)),
        mask=mask,
        pose=pose,
        view_index=index,
    )


def run(config: PipelineConfig, scene: SdfScene | None = None,
        initial_view_dir=None,
        resume: bool = False) -> tuple[PseudoDataset, VoxelGrid, RunReport]:
    """Execute the full loop over the configured camera schedule."""
    if scene is None and initial_view_dir is None:
        raise ValueError("run needs a synthetic scene or an initial view directory")
    K = config.intrinsics()
    runner = _StageRunner(config, scene)
    out = config.out_dir
    dataset_dir = out / "dataset"
    work_root = out / "work"
    work_root.mkdir(parents=True, exist_ok=True)
    report = RunReport()

    grid_path = dataset_dir / GRID_FILE

    if resume and (dataset_dir / "manifest.json").is_file():
        dataset = load_dataset(dataset_dir)
        grid = load_grid(grid_path)
        surface: Surface = VoxelSurface(grid)
        report_path = out / "report.json"
        if report_path.is_file():
            doc = json.loads(report_path.read_text(encoding="utf-8"))
            for row in doc.get("iterations", []):
                if row["view_index"] < len(dataset):
                    report.iterations.append(IterationRecord(**row))
    else:
        dataset, grid, surface = _bootstrap(config, scene, initial_view_dir,
                                            runner, K, dataset_dir, work_root)

    schedule = config.schedule
    for i in range(len(dataset), len(schedule)):
        pose = schedule[i]
        timings: dict = {}

        t0 = time.perf_counter()
        views = [(rec.mask, rec.pose, K) for rec in dataset.records]
        vh_grid = carve(views, surface, config.grid_resolution)
        m_vh, m_fg, m_out = acquire_outpaint_masks(
            dataset, surface, vh_grid, pose, K, config.upscale)
        _check_mask_algebra(m_vh, m_fg, m_out, i)
        timings["mask_acquisition"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        render = render_model_view(surface, dataset, pose, K)
        timings["render"] = time.perf_counter() - t0

        work = work_root / f"view_{i:03d}"
        work.mkdir(exist_ok=True)
        write_pose_file(work / "pose.json", pose, K.width, K.height)
        imgio.write_color_png(render, work / "render.png")
        imgio.write_mask_png(m_out, work / "outmask.png")
        imgio.write_mask_png(m_fg, work / "fgmask.png")
        imgio.write_mask_png(m_vh, work / "vhmask.png")
        prompt = build_prompt(config.object_tag, config.class_word, pose.azimuth_deg)
        (work / "prompt.txt").write_text(prompt + "\n", encoding="utf-8")

        runner.run("outpaint", work, timings=timings)
        shutil.copyfile(work / "outpainted.png", work / "color.png")
        runner.run("superres", work, timings=timings)
        runner.run("segment", work, timings=timings)
        runner.run("depth", work, timings=timings)
        runner.run("normal", work, timings=timings)

        record = _assemble_record(work, pose, i)
        dataset = append(dataset, record)
        save_dataset(dataset, dataset_dir)

        t0 = time.perf_counter()
        (dataset_dir / RECONSTRUCT_PARAMS_FILE).write_text(
            json.dumps({"resolution": config.grid_resolution}), encoding="utf-8")
        runner.run("reconstruct", dataset_dir,
                   params={"resolution": config.grid_resolution})
        grid = load_grid(grid_path)
        surface = VoxelSurface(grid)
        timings["reconstruct"] = time.perf_counter() - t0

        report.iterations.append(IterationRecord(
            view_index=i,
            vh_area=m_vh.area(),
            fg_area=m_fg.area(),
            outpaint_area=m_out.area(),
            voxel_count=grid.occupied_count(),
            timings=timings,
        ))
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")

    report.final_metrics = {
        "views": len(dataset),
        "occupied_voxels": grid.occupied_count(),
        "grid_resolution": grid.resolution,
    }
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    return dataset, grid, report


def _bootstrap(config: PipelineConfig, scene, initial_view_dir, runner,
               K: Intrinsics, dataset_dir: Path, work_root: Path):
    """Process the input view into record 0 and train the initial model."""
    pose0 = config.schedule[0]
    work = work_root / "view_000"
    work.mkdir(exist_ok=True)
    write_pose_file(work / "pose.json", pose0, K.width, K.height)
    if initial_view_dir is not None:
        src = Path(initial_view_dir) / "color.png"
        shutil.copyfile(src, work / "color.png")
    else:
        imgio.write_color_png(render_color(scene, pose0, K), work / "color.png")

    runner.run("segment", work)
    runner.run("depth", work)
    runner.run("normal", work)
    record0 = _assemble_record(work, pose0, 0)
    dataset = init_dataset(record0, config.object_tag, config.class_word)
    save_dataset(dataset, dataset_dir)

    (dataset_dir / RECONSTRUCT_PARAMS_FILE).write_text(
        json.dumps({"resolution": config.grid_resolution}), encoding="utf-8")
    runner.run("reconstruct", dataset_dir,
               params={"resolution": config.grid_resolution})
    grid = load_grid(dataset_dir / GRID_FILE)
    return dataset, grid, VoxelSurface(grid)


def residual_outpaint_ratios(dataset: PseudoDataset, surface: Surface,
                             grid: VoxelGrid, K: Intrinsics,
                             upscale: int = 8) -> list[float]:
    """Fraction of image area still marked for outpainting at each dataset
    pose after a completed run (all views warp into each target).

    Lifting is target-independent, so every view is lifted once against
    the final surface and only culling/warping runs per pose.
    """
    lifted = LiftedPixels.concatenate(
        [lift_view(rec, surface, K, upscale) for rec in dataset.records]
    )
    ratios = []
    total = K.width * K.height
    for rec in dataset.records:
        m_vh = hull_silhouette(grid, rec.pose, K)
        kept = cull_backpoints(lifted, rec.pose)
        m_fg = warp_to_mask(kept, rec.pose, K)
        m_out = outpaint_mask(m_vh, m_fg)
        ratios.append(m_out.area() / total)
    return ratios
