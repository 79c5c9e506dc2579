"""Triangle-mesh extraction from carved occupancy grids.

The 0.5 iso-level of the binary occupancy (sampled at voxel centers,
zero-padded by one layer) is polygonized with marching tetrahedra on the
uniform Kuhn 6-tet decomposition. Neighboring cells share face diagonals
under this split, and every iso vertex sits at the midpoint of a
node-to-node edge, so the result is a closed, consistently oriented
2-manifold with no ambiguous cases and no case tables to maintain.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

from .carving import VoxelGrid
from .scene import CUBE_MIN

_TETS = []
for _perm in itertools.permutations(range(3)):
    _c1 = np.zeros(3, dtype=np.int64)
    _c1[_perm[0]] = 1
    _c2 = _c1.copy()
    _c2[_perm[1]] = 1
    _TETS.append((np.zeros(3, dtype=np.int64), _c1, _c2, np.ones(3, dtype=np.int64)))


def _case_table():
    """For each 4-bit corner-sign case: triangles as triples of crossing
    edges (corner index pairs), plus the positive/negative corner sets."""
    table = {}
    for case in range(16):
        pos = [i for i in range(4) if case >> i & 1]
        neg = [i for i in range(4) if not case >> i & 1]
        tris: list[tuple] = []
        if len(pos) == 1:
            p = pos[0]
            e = [(p, n) for n in neg]
            tris = [(e[0], e[1], e[2])]
        elif len(pos) == 3:
            n = neg[0]
            e = [(p, n) for p in pos]
            tris = [(e[0], e[1], e[2])]
        elif len(pos) == 2:
            p0, p1 = pos
            n0, n1 = neg
            quad = [(p0, n0), (p0, n1), (p1, n1), (p1, n0)]
            tris = [(quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])]
        table[case] = (tris, pos, neg)
    return table


_CASES = _case_table()


def extract_surface(occupancy: np.ndarray, cube_min: float = CUBE_MIN,
                    voxel_size: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Polygonize the 0.5 iso-level of a binary occupancy volume.

    Returns (vertices (V, 3) world coordinates, faces (F, 3) vertex
    indices) with outward-facing winding (normals point away from the
    occupied region).
    """
    occupancy = np.asarray(occupancy, dtype=bool)
    r = occupancy.shape[0]
    if occupancy.shape != (r, r, r):
        raise ValueError("occupancy must be a cubic volume")
    if not occupancy.any():
        raise ValueError("occupancy volume is empty")
    h = voxel_size if voxel_size is not None else (2.0 / r)

    nodes = np.pad(occupancy, 1).astype(np.int8)
    rn = r + 2
    flat_nodes = nodes.ravel()

    # Cells with mixed corner signs are the only ones that emit geometry.
    corner_sum = np.zeros((r + 1,) * 3, dtype=np.int8)
    for di, dj, dk in itertools.product((0, 1), repeat=3):
        corner_sum += nodes[di:di + r + 1, dj:dj + r + 1, dk:dk + r + 1]
    ci, cj, ck = np.nonzero((corner_sum > 0) & (corner_sum < 8))
    base = (ci * rn + cj) * rn + ck

    def node_positions(flat):
        i = flat // (rn * rn)
        j = (flat // rn) % rn
        k = flat % rn
        return np.stack([
            cube_min + (i - 0.5) * h,
            cube_min + (j - 0.5) * h,
            cube_min + (k - 0.5) * h,
        ], axis=-1)

    ea_parts, eb_parts = [], []
    for corners in _TETS:
        flats = np.stack(
            [base + (c[0] * rn + c[1]) * rn + c[2] for c in corners], axis=1
        )
        vals = flat_nodes[flats]
        case_ids = vals @ np.array([1, 2, 4, 8], dtype=np.int8)
        for case in range(1, 15):
            tris, pos, neg = _CASES[case]
            rows = np.nonzero(case_ids == case)[0]
            if rows.size == 0:
                continue
            sel = flats[rows]
            ref_in = node_positions(sel[:, pos]).mean(axis=1)
            ref_out = node_positions(sel[:, neg]).mean(axis=1)
            for tri in tris:
                ea = sel[:, [e[0] for e in tri]]
                eb = sel[:, [e[1] for e in tri]]
                v = 0.5 * (node_positions(ea) + node_positions(eb))
                n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
                flip = np.einsum("ij,ij->i", n, ref_out - ref_in) < 0.0
                ea[flip, 1], ea[flip, 2] = ea[flip, 2], ea[flip, 1].copy()
                eb[flip, 1], eb[flip, 2] = eb[flip, 2], eb[flip, 1].copy()
                ea_parts.append(ea)
                eb_parts.append(eb)

    ea = np.concatenate(ea_parts)
    eb = np.concatenate(eb_parts)
    lo = np.minimum(ea, eb)
    hi = np.maximum(ea, eb)
    keys = lo * np.int64(rn ** 3) + hi
    unique_keys, faces = np.unique(keys.ravel(), return_inverse=True)
    faces = faces.reshape(-1, 3).astype(np.int64)
    ulo = unique_keys // (rn ** 3)
    uhi = unique_keys % (rn ** 3)
    vertices = 0.5 * (node_positions(ulo) + node_positions(uhi))
    return vertices, faces


def write_obj(vertices: np.ndarray, faces: np.ndarray, path) -> None:
    lines = []
    for v in vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_mesh(grid: VoxelGrid, path) -> tuple[np.ndarray, np.ndarray]:
    """Extract the hull mesh (world units) and write it as OBJ."""
    vertices, faces = extract_surface(grid.occupancy, CUBE_MIN, grid.voxel_size)
    write_obj(vertices, faces, path)
    return vertices, faces
