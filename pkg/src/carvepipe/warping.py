"""Foreground-mask synthesis by lifting, culling, and reprojecting seen
pixels, plus the outpainting-mask set difference.

Anti-aliasing comes solely from supersampling the source view (default
8x); splatting into the target mask is single-pixel. Visibility is
handled only by back-point culling: a lifted point is warped iff its
surface normal faces the target camera center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraPose, Intrinsics, pixel_grid_directions, pose_to_extrinsics, project_points
from .rasters import MaskImage
from .scene import Surface


@dataclass(frozen=True)
class LiftedPixels:
    """Batch of lifted foreground subpixels: surface points, their
    normals, and the index of the view they came from."""

    points: np.ndarray
    normals: np.ndarray
    source_view: np.ndarray

    def __post_init__(self):
        if self.points.shape != self.normals.shape or self.points.ndim != 2:
            raise ValueError("points and normals must both be (N, 3)")
        if self.source_view.shape != (len(self.points),):
            raise ValueError("source_view must be (N,)")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "LiftedPixels":
        return cls(points=np.zeros((0, 3)), normals=np.zeros((0, 3)),
                   source_view=np.zeros(0, dtype=np.int32))

    @classmethod
    def concatenate(cls, batches) -> "LiftedPixels":
        batches = [b for b in batches if len(b)]
        if not batches:
            return cls.empty()
        return cls(
            points=np.concatenate([b.points for b in batches]),
            normals=np.concatenate([b.normals for b in batches]),
            source_view=np.concatenate([b.source_view for b in batches]),
        )


def lift_view(view, surface: Surface, K: Intrinsics,
              upscale: int = 8) -> LiftedPixels:
    """Lift every foreground subpixel of a view to its first surface hit.

    The view's mask is nearest-neighbor upsampled to the supersampled
    grid; subpixels whose rays miss the surface are skipped.
    """
    if upscale < 1:
        raise ValueError("upscale must be >= 1")
    pose = view.pose
    E = pose_to_extrinsics(pose)
    mask = view.mask.data.astype(bool)
    fg = np.repeat(np.repeat(mask, upscale, axis=0), upscale, axis=1).ravel()
    dirs = pixel_grid_directions(K, E, upscale)[fg]
    hb = surface.hit_batch(pose.center, dirs)
    keep = hb.hit
    return LiftedPixels(
        points=hb.points[keep],
        normals=hb.normals[keep],
        source_view=np.full(int(keep.sum()), view.view_index, dtype=np.int32),
    )


def cull_backpoints(points: LiftedPixels, target_pose: CameraPose) -> LiftedPixels:
    """Keep exactly the points whose normal faces the target camera:
    (p - o_target) . n < 0, strictly."""
    if len(points) == 0:
        return points
    rel = points.points - target_pose.center
    keep = np.einsum("ij,ij->i", rel, points.normals) < 0.0
    return LiftedPixels(points=points.points[keep],
                        normals=points.normals[keep],
                        source_view=points.source_view[keep])


def warp_to_mask(points: LiftedPixels, target_pose: CameraPose,
                 K: Intrinsics) -> MaskImage:
    """Project culled points into the target view; each landing pixel
    (floor of the continuous coordinates) is set; out-of-bounds and
    behind-camera landings are discarded."""
    data = np.zeros((K.height, K.width), dtype=np.uint8)
    if len(points):
        E = pose_to_extrinsics(target_pose)
        uv, _z, valid = project_points(K, E, points.points)
        px = np.floor(uv[:, 0]).astype(np.int64)
        py = np.floor(uv[:, 1]).astype(np.int64)
        ok = valid & (px >= 0) & (px < K.width) & (py >= 0) & (py < K.height)
        data[py[ok], px[ok]] = 1
    return MaskImage(data)


def outpaint_mask(m_vh: MaskImage, m_fg: MaskImage) -> MaskImage:
    """Pixelwise set difference: 1 iff the hull silhouette is set and the
    warped foreground is not."""
    if (m_vh.height, m_vh.width) != (m_fg.height, m_fg.width):
        raise ValueError("mask dimensions disagree")
    return MaskImage(((m_vh.data == 1) & (m_fg.data == 0)).astype(np.uint8))
