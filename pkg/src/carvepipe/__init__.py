"""carvepipe: progressive space-carved outpainting.

Library + CLI that schedules cameras around an object, carves a voxel
visual hull, computes outpainting masks (hull silhouette minus warped
seen foreground), drives pluggable external stages to fill unseen
regions, and accumulates a multi-view pseudo-ground-truth dataset with a
voxel reconstruction and mesh export.
"""

__version__ = "0.1.0"

from .carving import VoxelGrid, VoxelSurface, carve, hull_silhouette, load_grid, save_grid
from .dataset import PseudoDataset, ViewRecord, append, init_dataset, load, save
from .geometry import (
    CameraPose,
    Extrinsics,
    Intrinsics,
    Ray,
    pixel_ray,
    pose_to_extrinsics,
    project,
    relative_transform,
    unproject,
)
from .mesh import export_mesh, extract_surface
from .pipeline import PipelineConfig, RunReport, mask_iou, psnr, run
from .rasters import DepthMap, MaskImage, NormalMap, RgbImage
from .scene import (
    AnalyticSurface,
    Box,
    SdfScene,
    Sphere,
    Surface,
    render_color,
    render_view,
    sdf_eval,
    sphere_trace,
)
from .schedule import CameraSchedule, check_intervals, default_schedule, prefix
from .stages import (
    OracleStages,
    PromptSpec,
    StageRequest,
    build_prompt,
    oracle_reconstruct,
    run_stage,
)
from .warping import LiftedPixels, cull_backpoints, lift_view, outpaint_mask, warp_to_mask
