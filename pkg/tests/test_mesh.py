import numpy as np
import pytest

from carvepipe import AnalyticSurface, VoxelGrid, carve, export_mesh
from carvepipe.carving import voxel_centers
from carvepipe.mesh import extract_surface, write_obj

from conftest import render_mask_views
from oracles import mesh_stats


def test_full_grid_is_the_bounding_cube():
    r = 32
    grid_occ = np.ones((r, r, r), bool)
    v, f = extract_surface(grid_occ)
    stats = mesh_stats(v, f)
    assert stats["closed"]
    assert stats["euler"] == 2
    # iso crossings between the outermost centers and the zero padding sit
    # exactly on the +/-1 planes; corners are chamfered at voxel scale
    np.testing.assert_allclose(v.min(axis=0), [-1, -1, -1], atol=1e-12)
    np.testing.assert_allclose(v.max(axis=0), [1, 1, 1], atol=1e-12)
    assert abs(stats["area"] - 24.0) / 24.0 < 0.03
    assert abs(stats["volume"] - 8.0) / 8.0 < 0.03


def test_single_voxel_mesh():
    r = 8
    occ = np.zeros((r, r, r), bool)
    occ[3, 4, 2] = True
    v, f = extract_surface(occ)
    stats = mesh_stats(v, f)
    h = 2.0 / r
    assert stats["closed"]
    assert stats["euler"] == 2
    assert stats["volume"] > 0
    # Corner-simplex count: the positive node belongs to all 6 tets of two
    # incident cells and to 2 of 6 in the other six, 4 h^3 of tetrahedra in
    # total; the iso surface cuts each at the half scale, giving
    # (1/2)^3 * 4 h^3 = h^3 / 2 exactly.
    assert stats["volume"] == pytest.approx(h ** 3 / 2.0, rel=1e-12)
    # within half of the voxel volume, as iso interpolation allows
    assert abs(stats["volume"] - h ** 3) <= 0.5 * h ** 3 + 1e-15


def test_sphere_hull_grid_genus_zero(sphere_scene):
    views = render_mask_views(sphere_scene, [0, 45, -45, 90, -90, 135, -135, 180], 256)
    grid = carve(views, AnalyticSurface(sphere_scene), 64)
    v, f = extract_surface(grid.occupancy)
    stats = mesh_stats(v, f)
    assert stats["closed"]
    assert stats["euler"] == 2


def test_voxelized_sphere_volume_converges():
    r = 48
    occ = (np.linalg.norm(voxel_centers(r), axis=1) < 0.5).reshape(r, r, r)
    v, f = extract_surface(occ)
    stats = mesh_stats(v, f)
    true_volume = 4.0 / 3.0 * np.pi * 0.5 ** 3
    assert abs(stats["volume"] - true_volume) / true_volume < 0.05
    assert stats["closed"] and stats["euler"] == 2


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        extract_surface(np.zeros((8, 8, 8), bool))


def test_obj_round_trip(tmp_path):
    occ = np.zeros((4, 4, 4), bool)
    occ[1:3, 1:3, 1:3] = True
    v, f = extract_surface(occ)
    path = tmp_path / "mesh.obj"
    write_obj(v, f, path)
    lines = path.read_text().splitlines()
    n_v = sum(1 for line in lines if line.startswith("v "))
    n_f = sum(1 for line in lines if line.startswith("f "))
    assert (n_v, n_f) == (len(v), len(f))
    # 1-based indices within range
    for line in lines:
        if line.startswith("f "):
            idx = [int(t) for t in line.split()[1:]]
            assert all(1 <= i <= len(v) for i in idx)


def test_export_mesh_from_carved_grid(tmp_path, sphere_scene):
    views = render_mask_views(sphere_scene, [0, 90], 128)
    grid = carve(views, AnalyticSurface(sphere_scene), 32)
    v, f = export_mesh(grid, tmp_path / "hull.obj")
    assert (tmp_path / "hull.obj").stat().st_size > 0
    stats = mesh_stats(v, f)
    assert stats["closed"] and stats["volume"] > 0


def test_empty_votes_grid_export_rejected(tmp_path):
    grid = VoxelGrid(8, np.zeros((8, 8, 8), np.int32), 1)
    with pytest.raises(ValueError):
        export_mesh(grid, tmp_path / "nope.obj")
