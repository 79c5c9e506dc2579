"""Vote-based voxel space carving over the bounding cube.

A voxel receives one vote from a view when (a) its center projects onto a
foreground pixel of that view's mask and (b) it lies at or beyond the
first exterior-to-interior hit of the ray cast from that view's camera
center toward the voxel. Voxels voted for by every view form the visual
hull. With a single view the preserved set is exactly the extrusion of
the surface through its silhouette.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .geometry import CameraPose, Intrinsics, Ray, pixel_grid_directions, pose_to_extrinsics, project_points
from .rasters import MaskImage
from .scene import CUBE_MAX, CUBE_MIN, Hit, HitBatch, Surface

DEFAULT_GRID_RESOLUTION = 128
GRID_FORMAT = "carvepipe-grid"


@dataclass(frozen=True)
class VoxelGrid:
    """Vote counts over the voxelized bounding cube [-1, 1]^3.

    A voxel is occupied iff its vote count equals the number of views used
    in the carve that produced the grid.
    """

    resolution: int
    votes: np.ndarray
    n_views: int

    def __post_init__(self):
        r = self.resolution
        if r <= 0:
            raise ValueError("resolution must be positive")
        v = np.asarray(self.votes, dtype=np.int32)
        if v.shape != (r, r, r):
            raise ValueError(f"votes must have shape {(r, r, r)}")
        if self.n_views < 1:
            raise ValueError("grid must come from at least one view")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "votes", v)

    @property
    def voxel_size(self) -> float:
        return (CUBE_MAX - CUBE_MIN) / self.resolution

    @property
    def occupancy(self) -> np.ndarray:
        return self.votes == self.n_views

    def occupied_count(self) -> int:
        return int(self.occupancy.sum())


@lru_cache(maxsize=4)
def voxel_centers(resolution: int) -> np.ndarray:
    """Centers of all voxels, shape (R^3, 3), C-order matching votes arrays.

    Voxel (a, b, c) has center CUBE_MIN + (idx + 0.5) * (2 / R) per axis.
    """
    h = (CUBE_MAX - CUBE_MIN) / resolution
    axis = CUBE_MIN + (np.arange(resolution, dtype=np.float64) + 0.5) * h
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    out = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    out.setflags(write=False)
    return out


def carve(views, surface: Surface, resolution: int = DEFAULT_GRID_RESOLUTION) -> VoxelGrid:
    """Carve the bounding cube against a list of (MaskImage, CameraPose,
    Intrinsics) views, using `surface` for the first-hit depth test.

    Projections outside the image (or behind the camera) count as
    out-of-mask; mask lookup is nearest-pixel. A ray with no surface hit
    grants its vote (conservative, keeps the hull a superset near
    silhouette edges where rasterized masks are wider than the traced
    surface). Ties in the depth comparison preserve the voxel.
    """
    views = list(views)
    if not views:
        raise ValueError("carve needs at least one view")
    for mask, _pose, K in views:
        if (mask.height, mask.width) != (K.height, K.width):
            raise ValueError("mask dimensions disagree with the intrinsics")

    centers = voxel_centers(resolution)
    votes = np.zeros(len(centers), dtype=np.int32)
    for mask, pose, K in views:
        E = pose_to_extrinsics(pose)
        o = pose.center
        uv, _z, valid = project_points(K, E, centers)
        px = np.floor(uv[:, 0]).astype(np.int64)
        py = np.floor(uv[:, 1]).astype(np.int64)
        inb = valid & (px >= 0) & (px < K.width) & (py >= 0) & (py < K.height)
        mask_ok = np.zeros(len(centers), dtype=bool)
        mask_ok[inb] = mask.data[py[inb], px[inb]] == 1

        cand = np.nonzero(mask_ok)[0]
        if cand.size:
            delta = centers[cand] - o
            dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
            dirs = delta / dist[:, None]
            hb = surface.hit_batch(o, dirs)
            ok = ~hb.hit | (dist >= hb.t)
            votes[cand[ok]] += 1
    return VoxelGrid(resolution=resolution,
                     votes=votes.reshape((resolution,) * 3),
                     n_views=len(views))


def occupied_bounds(occupancy: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """World-space AABB of the occupied voxels, or None for an empty grid."""
    resolution = occupancy.shape[0]
    h = (CUBE_MAX - CUBE_MIN) / resolution
    lo = np.empty(3)
    hi = np.empty(3)
    for axis in range(3):
        proj = np.any(occupancy, axis=tuple(a for a in range(3) if a != axis))
        idx = np.nonzero(proj)[0]
        if idx.size == 0:
            return None
        lo[axis] = CUBE_MIN + idx[0] * h
        hi[axis] = CUBE_MIN + (idx[-1] + 1) * h
    return lo, hi


def dda_first_hit(occupancy: np.ndarray, origins: np.ndarray, dirs: np.ndarray,
                  bounds: tuple[np.ndarray, np.ndarray] | None = None
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """March rays through an occupancy grid (3D DDA); stop at the first
    occupied voxel.

    Returns (hit, t, axis, sign): t is the ray parameter of the entry-face
    crossing into the hit voxel, axis/sign identify the crossed face (the
    face normal is -sign * e_axis). Directions must be unit length for t
    to be in world units. ``bounds`` restricts the march to an AABB known
    to contain all occupied voxels (empty-space skipping).
    """
    resolution = occupancy.shape[0]
    occ = np.ascontiguousarray(occupancy).ravel()
    h = (CUBE_MAX - CUBE_MIN) / resolution
    dirs = np.asarray(dirs, dtype=np.float64)
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
    if bounds is None:
        bounds = occupied_bounds(occupancy)
    n = dirs.shape[0]
    hit = np.zeros(n, dtype=bool)
    t_hit = np.full(n, np.inf)
    ax_hit = np.zeros(n, dtype=np.int64)
    sgn_hit = np.zeros(n, dtype=np.float64)
    if bounds is None:
        return hit, t_hit, ax_hit, sgn_hit
    blo, bhi = bounds

    dx, dy, dz = dirs[:, 0].copy(), dirs[:, 1].copy(), dirs[:, 2].copy()
    ox, oy, oz = origins[:, 0].copy(), origins[:, 1].copy(), origins[:, 2].copy()
    with np.errstate(divide="ignore"):
        ivx = 1.0 / np.where(np.abs(dx) > 1e-300, dx, 1e-300)
        ivy = 1.0 / np.where(np.abs(dy) > 1e-300, dy, 1e-300)
        ivz = 1.0 / np.where(np.abs(dz) > 1e-300, dz, 1e-300)
    nx1, nx2 = (blo[0] - ox) * ivx, (bhi[0] - ox) * ivx
    ny1, ny2 = (blo[1] - oy) * ivy, (bhi[1] - oy) * ivy
    nz1, nz2 = (blo[2] - oz) * ivz, (bhi[2] - oz) * ivz
    ex = np.minimum(nx1, nx2)
    ey = np.minimum(ny1, ny2)
    ez = np.minimum(nz1, nz2)
    t_enter = np.maximum(ex, np.maximum(ey, ez))
    t_exit = np.minimum(np.maximum(nx1, nx2),
                        np.minimum(np.maximum(ny1, ny2), np.maximum(nz1, nz2)))
    enter_axis = np.where(t_enter == ex, 0, np.where(t_enter == ey, 1, 2))

    idx = np.nonzero((t_enter <= t_exit) & (t_exit > 0.0))[0]
    if idx.size == 0:
        return hit, t_hit, ax_hit, sgn_hit

    t_cur = np.maximum(t_enter[idx], 0.0)
    tex = t_exit[idx]
    axis = enter_axis[idx]
    ox, oy, oz = ox[idx], oy[idx], oz[idx]
    dx, dy, dz = dx[idx], dy[idx], dz[idx]
    ivx, ivy, ivz = ivx[idx], ivy[idx], ivz[idx]

    # rays starting inside the bounds have no entry face; fall back to the
    # dominant direction axis for the first voxel's normal
    inside = t_enter[idx] < 0.0
    if inside.any():
        adx, ady, adz = np.abs(dx), np.abs(dy), np.abs(dz)
        dom = np.where((adx >= ady) & (adx >= adz), 0,
                       np.where(ady >= adz, 1, 2))
        axis = np.where(inside, dom, axis)

    cxi = np.clip(np.floor((ox + t_cur * dx - CUBE_MIN) / h).astype(np.int64),
                  0, resolution - 1)
    cyi = np.clip(np.floor((oy + t_cur * dy - CUBE_MIN) / h).astype(np.int64),
                  0, resolution - 1)
    czi = np.clip(np.floor((oz + t_cur * dz - CUBE_MIN) / h).astype(np.int64),
                  0, resolution - 1)

    sx = np.sign(dx).astype(np.int64)
    sy = np.sign(dy).astype(np.int64)
    sz = np.sign(dz).astype(np.int64)
    big = np.inf
    tx = np.where(sx != 0, (CUBE_MIN + (cxi + (sx > 0)) * h - ox) * ivx, big)
    ty = np.where(sy != 0, (CUBE_MIN + (cyi + (sy > 0)) * h - oy) * ivy, big)
    tz = np.where(sz != 0, (CUBE_MIN + (czi + (sz > 0)) * h - oz) * ivz, big)
    dtx = np.where(sx != 0, h * np.abs(ivx), big)
    dty = np.where(sy != 0, h * np.abs(ivy), big)
    dtz = np.where(sz != 0, h * np.abs(ivz), big)

    r2 = np.int64(resolution) * np.int64(resolution)
    flat = cxi * r2 + cyi * resolution + czi
    sgn_here = np.where(
        axis == 0, np.sign(dx), np.where(axis == 1, np.sign(dy), np.sign(dz))
    )

    state = [idx, t_cur, tex, cxi, cyi, czi, tx, ty, tz, dtx, dty, dtz,
             flat, sgn_here, sx, sy, sz]
    for _ in range(3 * resolution + 8):
        (idx, t_cur, tex, cxi, cyi, czi, tx, ty, tz, dtx, dty, dtz,
         flat, sgn_here, sx, sy, sz) = state
        occ_here = occ[flat]
        if occ_here.any():
            hidx = idx[occ_here]
            hit[hidx] = True
            t_hit[hidx] = t_cur[occ_here]
            ax_hit[hidx] = axis[occ_here]
            sgn_hit[hidx] = sgn_here[occ_here]
        cont = ~occ_here
        if not cont.any():
            break
        if not cont.all():
            axis = axis[cont]
            state = [a[cont] for a in state]
            (idx, t_cur, tex, cxi, cyi, czi, tx, ty, tz, dtx, dty, dtz,
             flat, sgn_here, sx, sy, sz) = state

        # advance every surviving ray to its nearest boundary crossing
        kx = (tx <= ty) & (tx <= tz)
        ky = ~kx & (ty <= tz)
        kz = ~kx & ~ky
        t_cur = np.where(kx, tx, np.where(ky, ty, tz))
        axis = np.where(kx, 0, np.where(ky, 1, 2)).astype(np.int64)
        sgn_here = np.where(kx, sx, np.where(ky, sy, sz)).astype(np.float64)
        cxi = cxi + np.where(kx, sx, 0)
        cyi = cyi + np.where(ky, sy, 0)
        czi = czi + np.where(kz, sz, 0)
        flat = cxi * r2 + cyi * resolution + czi
        tx = np.where(kx, tx + dtx, tx)
        ty = np.where(ky, ty + dty, ty)
        tz = np.where(kz, tz + dtz, tz)

        ok = (t_cur <= tex) & (cxi >= 0) & (cxi < resolution) & \
             (cyi >= 0) & (cyi < resolution) & (czi >= 0) & (czi < resolution)
        if not ok.all():
            axis = axis[ok]
            state = [a[ok] for a in [idx, t_cur, tex, cxi, cyi, czi,
                                     tx, ty, tz, dtx, dty, dtz,
                                     flat, sgn_here, sx, sy, sz]]
            if state[0].size == 0:
                break
        else:
            state = [idx, t_cur, tex, cxi, cyi, czi, tx, ty, tz,
                     dtx, dty, dtz, flat, sgn_here, sx, sy, sz]
    return hit, t_hit, ax_hit, sgn_hit


class VoxelSurface:
    """Surface view of a carved grid: 3D DDA first hits with entry-face
    points and face normals (coarse but adequate for back-point culling)."""

    def __init__(self, grid: VoxelGrid):
        self.grid = grid
        self._occ = np.ascontiguousarray(grid.occupancy)
        self._bounds = occupied_bounds(self._occ)

    def hit_batch(self, origins, dirs) -> HitBatch:
        dirs = np.asarray(dirs, dtype=np.float64)
        origins_b = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
        hit, t, axis, sgn = dda_first_hit(self._occ, origins_b, dirs,
                                          bounds=self._bounds)
        points = np.zeros_like(dirs)
        normals = np.zeros_like(dirs)
        if hit.any():
            points[hit] = origins_b[hit] + t[hit, None] * dirs[hit]
            rows = np.nonzero(hit)[0]
            normals[rows, axis[rows]] = -sgn[rows]
        return HitBatch(hit=hit, t=t, points=points, normals=normals)

    def first_hit(self, ray: Ray) -> Hit | None:
        hb = self.hit_batch(ray.origin[None, :], ray.direction[None, :])
        if not hb.hit[0]:
            return None
        return Hit(point=hb.points[0], distance=float(hb.t[0]), normal=hb.normals[0])

    def normal_at(self, point) -> np.ndarray:
        """Face normal inferred from the nearest grid plane; points are
        expected to lie on voxel faces (as returned by first_hit)."""
        p = np.asarray(point, dtype=np.float64)
        h = self.grid.voxel_size
        rel = (p - CUBE_MIN) / h
        frac = np.abs(rel - np.rint(rel))
        axis = int(np.argmin(frac))
        plane = int(np.rint(rel[axis]))
        occ = self.grid.occupancy
        lo_idx = plane - 1
        hi_idx = plane

        def occupied(ix):
            cell = np.floor(rel).astype(np.int64)
            cell[axis] = ix
            if not (0 <= ix < self.grid.resolution):
                return False
            if not all(0 <= cell[a] < self.grid.resolution for a in range(3)):
                return False
            return bool(occ[tuple(cell)])

        normal = np.zeros(3)
        # point away from the occupied side
        if occupied(lo_idx) and not occupied(hi_idx):
            normal[axis] = 1.0
        else:
            normal[axis] = -1.0
        return normal


def hull_silhouette(grid: VoxelGrid, pose: CameraPose, K: Intrinsics) -> MaskImage:
    """Project the hull: pixel = 1 iff the pixel ray crosses any occupied
    voxel."""
    E = pose_to_extrinsics(pose)
    dirs = pixel_grid_directions(K, E, 1)
    occ = np.ascontiguousarray(grid.occupancy)
    hit, _t, _ax, _sg = dda_first_hit(occ, pose.center, dirs)
    return MaskImage(hit.astype(np.uint8).reshape(K.height, K.width))


def save_grid(grid: VoxelGrid, path) -> None:
    """Run-length-encoded occupancy with a JSON header."""
    flat = grid.occupancy.ravel().astype(np.int8)
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], changes, [len(flat)]])
    runs = np.diff(bounds).tolist()
    if len(flat) and flat[0] == 1:
        runs = [0] + runs
    doc = {
        "format": GRID_FORMAT,
        "resolution": grid.resolution,
        "domain": [CUBE_MIN, CUBE_MAX],
        "views": grid.n_views,
        "runs": runs,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_grid(path) -> VoxelGrid:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != GRID_FORMAT:
        raise ValueError(f"{path}: not a {GRID_FORMAT} file")
    r = int(doc["resolution"])
    n_views = int(doc.get("views", 1))
    flat = np.zeros(r ** 3, dtype=bool)
    pos = 0
    value = 0
    for run in doc["runs"]:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value ^= 1
    if pos != r ** 3:
        raise ValueError(f"{path}: run lengths sum to {pos}, expected {r ** 3}")
    votes = flat.reshape((r, r, r)).astype(np.int32) * n_views
    return VoxelGrid(resolution=r, votes=votes, n_views=n_views)
