"""The pluggable external-stage protocol and the built-in oracle stages.

Stages are separate processes exchanging files; a stage command receives
its input directory as the sole argument, exits 0 on success, and its
outputs are validated by the core before the pipeline continues. The
built-in oracle backends are perfect predictors rendered from the
ground-truth analytic scene.

Per-view stage workspace (``view_XXX`` directory):

    pose.json        camera pose + image size           (written by core)
    color.png        the image the predictors run on    (written by core)
    render.png       model render at the new view       (outpaint input)
    outmask.png      outpainting mask                   (outpaint input)
    fgmask.png       warped foreground mask             (confinement check)
    prompt.txt       single-line UTF-8 text condition   (outpaint input)
    outpainted.png   <- outpaint stage
    upscaled.png     <- superres stage (2x each dimension)
    mask.png         <- segment stage (binary)
    depth.cpd        <- depth stage
    normal.cpn       <- normal stage

The reconstruct stage instead receives the dataset directory (with
``reconstruct.json`` naming the grid resolution) and writes
``grid.rle.json``, loadable as a VoxelSurface.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .carving import VoxelSurface, carve, load_grid, save_grid
from .dataset import PseudoDataset, load as load_dataset
from .errors import StageError, StageValidationError
from .geometry import CameraPose, Intrinsics, project_points, pose_to_extrinsics
from .scene import AnalyticSurface, Hit, HitBatch, SdfScene, Surface, render_color, render_view
from . import imgio

STAGE_KINDS = ("segment", "depth", "normal", "outpaint", "superres", "reconstruct")

DEFAULT_STAGE_TIMEOUT = 600.0
TIMEOUT_ENV = "CARVEPIPE_STAGE_TIMEOUT"

GRID_FILE = "grid.rle.json"
RECONSTRUCT_PARAMS_FILE = "reconstruct.json"

_DIRECTIONS = ("front", "right", "left", "behind")


def direction_for_azimuth(azimuth_deg: float) -> str:
    """Quadrant mapping of azimuth to a view keyword; boundary ties go to
    the smaller-|azimuth| class."""
    if not -180.0 < azimuth_deg <= 180.0:
        raise ValueError(f"azimuth must be in (-180, 180], got {azimuth_deg}")
    a = azimuth_deg
    if abs(a) <= 45.0:
        return "front"
    if 45.0 < a <= 135.0:
        return "right"
    if -135.0 <= a < -45.0:
        return "left"
    return "behind"


def build_prompt(tag: str, class_word: str, azimuth_deg: float) -> str:
    d = direction_for_azimuth(azimuth_deg)
    return f"A photo of {tag} {class_word} in a white background, seen from {d}"


@dataclass(frozen=True)
class PromptSpec:
    tag: str
    class_word: str
    direction: str

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}")

    @property
    def text(self) -> str:
        return (f"A photo of {self.tag} {self.class_word} in a white "
                f"background, seen from {self.direction}")


@dataclass
class StageRequest:
    kind: str
    input_dir: Path
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STAGE_KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        self.input_dir = Path(self.input_dir)


def write_pose_file(path, pose: CameraPose, width: int, height: int) -> None:
    doc = {"pose": pose.to_dict(), "width": width, "height": height}
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def read_pose_file(path) -> tuple[CameraPose, Intrinsics]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    pose = CameraPose.from_dict(doc["pose"])
    K = Intrinsics.from_fov(int(doc["width"]), int(doc["height"]), pose.fov_deg)
    return pose, K


def stage_timeout() -> float:
    raw = os.environ.get(TIMEOUT_ENV)
    if raw is None:
        return DEFAULT_STAGE_TIMEOUT
    try:
        return float(raw)
    except ValueError as e:
        raise StageError(f"invalid {TIMEOUT_ENV} value {raw!r}") from e


class OracleStages:
    """Perfect-predictor backends rendered from the true scene. Each stage
    is a pure function of (scene, pose, intrinsics)."""

    def __init__(self, scene: SdfScene):
        self.scene = scene
        self._surface = None

    def run(self, request: StageRequest) -> None:
        d = request.input_dir
        if request.kind == "reconstruct":
            self._reconstruct(request)
            return
        pose, K = read_pose_file(d / "pose.json")
        if request.kind == "segment":
            _depth, _normal, mask = render_view(self._analytic(), pose, K)
            imgio.write_mask_png(mask, d / "mask.png")
        elif request.kind == "depth":
            depth, _normal, _mask = render_view(self._analytic(), pose, K)
            imgio.write_depth_cpd(depth, d / "depth.cpd")
        elif request.kind == "normal":
            _depth, normal, _mask = render_view(self._analytic(), pose, K)
            imgio.write_normal_cpn(normal, d / "normal.cpn")
        elif request.kind == "outpaint":
            render = imgio.read_color_png(d / "render.png")
            outmask = imgio.read_mask_png(d / "outmask.png")
            truth = render_color(self.scene, pose, K)
            out = np.where((outmask.data == 1)[:, :, None], truth.data, render.data)
            imgio.write_color_png(type(render)(out), d / "outpainted.png")
        elif request.kind == "superres":
            # Native re-render at 2x; the oracle has no need to hallucinate.
            up = render_color(self.scene, pose, K.scaled(2))
            imgio.write_color_png(up, d / "upscaled.png")
        else:
            raise StageError(f"oracle backend cannot run {request.kind!r}")

    def _analytic(self) -> AnalyticSurface:
        if self._surface is None:
            self._surface = AnalyticSurface(self.scene)
        return self._surface

    def _reconstruct(self, request: StageRequest) -> None:
        d = request.input_dir
        params = json.loads((d / RECONSTRUCT_PARAMS_FILE).read_text(encoding="utf-8"))
        resolution = int(params["resolution"])
        dataset = load_dataset(d)
        previous = None
        grid_path = d / GRID_FILE
        if grid_path.is_file():
            prev_grid = load_grid(grid_path)
            if prev_grid.resolution == resolution:
                previous = VoxelSurface(prev_grid)
        surface = oracle_reconstruct(dataset, resolution, previous=previous)
        save_grid(surface.grid, grid_path)


@dataclass
class ExternalStage:
    """A stage run as a separate process: ``<command> <input_dir>``."""

    command: str

    def run(self, request: StageRequest) -> None:
        argv = shlex.split(self.command) + [str(request.input_dir)]
        timeout = stage_timeout()
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=timeout
            )
        except subprocess.TimeoutExpired as e:
            raise StageError(
                f"{request.kind} stage timed out after {timeout:.0f}s: {argv}"
            ) from e
        except OSError as e:
            raise StageError(f"{request.kind} stage failed to start: {e}") from e
        if proc.returncode != 0:
            raise StageError(
                f"{request.kind} stage exited {proc.returncode}: {argv}\n"
                f"stderr: {proc.stderr.strip()[:2000]}"
            )


def run_stage(request: StageRequest, backend) -> None:
    """Execute a stage and validate its outputs against the protocol."""
    backend.run(request)
    validate_stage_output(request)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise StageValidationError(f"stage output missing: {path}", path=path)
    return path


def validate_stage_output(request: StageRequest) -> None:
    d = request.input_dir
    kind = request.kind
    if kind == "reconstruct":
        params = json.loads((d / RECONSTRUCT_PARAMS_FILE).read_text(encoding="utf-8"))
        path = _require(d / GRID_FILE)
        try:
            grid = load_grid(path)
        except (ValueError, json.JSONDecodeError) as e:
            raise StageValidationError(f"{path}: unreadable grid: {e}", path=path) from e
        if grid.resolution != int(params["resolution"]):
            raise StageValidationError(
                f"{path}: grid resolution {grid.resolution} does not match the "
                f"requested {params['resolution']}", path=path)
        return

    _pose, K = read_pose_file(d / "pose.json")
    w, h = K.width, K.height
    if kind == "segment":
        path = _require(d / "mask.png")
        try:
            mask = imgio.read_mask_png(path)
        except ValueError as e:
            raise StageValidationError(str(e), path=path) from e
        if (mask.height, mask.width) != (h, w):
            raise StageValidationError(
                f"{path}: mask is {mask.width}x{mask.height}, expected {w}x{h}",
                path=path)
    elif kind == "depth":
        path = _require(d / "depth.cpd")
        try:
            depth = imgio.read_depth_cpd(path)
        except ValueError as e:
            raise StageValidationError(str(e), path=path) from e
        if (depth.height, depth.width) != (h, w):
            raise StageValidationError(
                f"{path}: depth is {depth.width}x{depth.height}, expected {w}x{h}",
                path=path)
    elif kind == "normal":
        path = _require(d / "normal.cpn")
        try:
            normal = imgio.read_normal_cpn(path)
        except ValueError as e:
            raise StageValidationError(str(e), path=path) from e
        if (normal.height, normal.width) != (h, w):
            raise StageValidationError(
                f"{path}: normals are {normal.width}x{normal.height}, expected {w}x{h}",
                path=path)
    elif kind == "outpaint":
        path = _require(d / "outpainted.png")
        out = imgio.read_color_png(path)
        render = imgio.read_color_png(d / "render.png")
        if (out.height, out.width) != (render.height, render.width):
            raise StageValidationError(
                f"{path}: outpainted image is {out.width}x{out.height}, expected "
                f"{render.width}x{render.height}", path=path)
        outmask = imgio.read_mask_png(d / "outmask.png")
        fgmask_path = d / "fgmask.png"
        if fgmask_path.is_file():
            fgmask = imgio.read_mask_png(fgmask_path)
            frozen = (outmask.data == 0) & (fgmask.data == 1)
            if not (out.data[frozen] == render.data[frozen]).all():
                raise StageValidationError(
                    f"{path}: generation leaked outside the outpainting mask "
                    f"(foreground pixels with outmask=0 must stay byte-identical "
                    f"to render.png)", path=path)
    elif kind == "superres":
        path = _require(d / "upscaled.png")
        up = imgio.read_color_png(path)
        if (up.height, up.width) != (2 * h, 2 * w):
            raise StageValidationError(
                f"{path}: upscaled image is {up.width}x{up.height}, expected "
                f"{2 * w}x{2 * h}", path=path)
    else:
        raise StageError(f"unknown stage kind {kind!r}")


class DepthMapSurface:
    """Surface backed by a single view's depth map.

    Valid only for rays cast from that view's own camera center: a ray is
    answered by projecting its direction into the view and reading the
    stored Euclidean distance at the landing pixel. Used for the first
    reconstruction, before any carved grid exists.
    """

    def __init__(self, record, K: Intrinsics):
        self.pose = record.pose
        self.K = K
        self._extr = pose_to_extrinsics(record.pose)
        self._depth = record.depth.data
        self._normal = record.normal.data

    def hit_batch(self, origins, dirs) -> HitBatch:
        dirs = np.asarray(dirs, dtype=np.float64)
        o = self.pose.center
        targets = o + dirs  # unit offsets; only the direction matters
        uv, _z, valid = project_points(self.K, self._extr, targets)
        px = np.floor(uv[:, 0]).astype(np.int64)
        py = np.floor(uv[:, 1]).astype(np.int64)
        inb = valid & (px >= 0) & (px < self.K.width) & (py >= 0) & (py < self.K.height)
        t = np.full(len(dirs), np.inf)
        hit = np.zeros(len(dirs), dtype=bool)
        normals = np.zeros_like(dirs)
        if inb.any():
            dvals = self._depth[py[inb], px[inb]].astype(np.float64)
            finite = np.isfinite(dvals)
            rows = np.nonzero(inb)[0][finite]
            hit[rows] = True
            t[rows] = dvals[finite]
            normals[rows] = self._normal[py[rows], px[rows]].astype(np.float64)
        points = np.zeros_like(dirs)
        points[hit] = o + t[hit, None] * dirs[hit]
        return HitBatch(hit=hit, t=t, points=points, normals=normals)

    def first_hit(self, ray):
        hb = self.hit_batch(ray.origin[None, :], ray.direction[None, :])
        if not hb.hit[0]:
            return None
        return Hit(point=hb.points[0], distance=float(hb.t[0]), normal=hb.normals[0])

    def normal_at(self, point) -> np.ndarray:
        uv, _z, valid = project_points(
            self.K, self._extr, np.asarray(point, dtype=np.float64)[None, :])
        px = int(np.floor(uv[0, 0]))
        py = int(np.floor(uv[0, 1]))
        return self._normal[py, px].astype(np.float64)


def oracle_reconstruct(dataset: PseudoDataset, resolution: int,
                       previous: Surface | None = None) -> VoxelSurface:
    """Reference reconstructor: carve all views against the previous
    surface and wrap the grid.

    The very first reconstruction has no surface yet, so the depth test
    reads the initial view's depth map directly. Without ``previous`` the
    progressive chain is replayed from that bootstrap, which makes the
    result a pure function of the dataset.
    """
    if len(dataset) == 0:
        raise ValueError("cannot reconstruct from an empty dataset")
    K = Intrinsics.from_fov(dataset[0].mask.width, dataset[0].mask.height,
                            dataset[0].pose.fov_deg)
    start = len(dataset) if previous is not None else 1
    surface: Surface = previous if previous is not None else DepthMapSurface(dataset[0], K)
    for size in range(start, len(dataset) + 1):
        views = [(rec.mask, rec.pose, K) for rec in dataset.records[:size]]
        surface = VoxelSurface(carve(views, surface, resolution))
    return surface
