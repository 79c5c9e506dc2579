import numpy as np
import pytest
from types import SimpleNamespace

from carvepipe import (
    AnalyticSurface,
    Intrinsics,
    LiftedPixels,
    MaskImage,
    carve,
    cull_backpoints,
    hull_silhouette,
    lift_view,
    outpaint_mask,
    render_view,
    warp_to_mask,
)
from carvepipe.geometry import pose_to_extrinsics, project_points, relative_transform

from conftest import UNIT_SPHERE_SCENE, equatorial_pose
from oracles import cull_fraction_quadrature

K = Intrinsics.from_fov(384)
SURFACE = AnalyticSurface(UNIT_SPHERE_SCENE)


def sphere_view(azimuth, img_size=384):
    Kv = Intrinsics.from_fov(img_size)
    pose = equatorial_pose(azimuth)
    depth, normal, mask = render_view(SURFACE, pose, Kv)
    return SimpleNamespace(mask=mask, depth=depth, normal=normal, pose=pose,
                           view_index=0), Kv


class TestLiftView:
    def test_upscale_one_count_equals_mask_area(self):
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=1)
        assert len(lifted) == view.mask.area()

    def test_upscale_eight_count_ratio(self):
        view, Kv = sphere_view(0)
        n1 = len(lift_view(view, SURFACE, Kv, upscale=1))
        n8 = len(lift_view(view, SURFACE, Kv, upscale=8))
        assert abs(n8 - 64 * n1) / (64 * n1) < 0.05

    def test_lifted_points_on_surface(self):
        view, Kv = sphere_view(30)
        lifted = lift_view(view, SURFACE, Kv, upscale=2)
        sdf = UNIT_SPHERE_SCENE.sdf(lifted.points)
        assert np.abs(sdf).max() <= 1e-5

    def test_invalid_upscale(self):
        view, Kv = sphere_view(0)
        with pytest.raises(ValueError):
            lift_view(view, SURFACE, Kv, upscale=0)


class TestCullBackpoints:
    def test_source_view_keeps_everything(self):
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=2)
        kept = cull_backpoints(lifted, view.pose)
        assert len(kept) == len(lifted)

    def test_opposite_view_culls_everything(self):
        # the overlap of visible caps at 180 degrees is empty
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=2)
        kept = cull_backpoints(lifted, equatorial_pose(180))
        assert len(kept) / len(lifted) <= 0.02

    def test_45_degree_fraction_matches_quadrature_oracle(self):
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=8)
        kept = cull_backpoints(lifted, equatorial_pose(45))
        fraction = len(kept) / len(lifted)
        oracle = cull_fraction_quadrature(0.0, 45.0)
        assert abs(fraction - oracle) < 0.02

    def test_empty_input(self):
        kept = cull_backpoints(LiftedPixels.empty(), equatorial_pose(45))
        assert len(kept) == 0


class TestWarpToMask:
    def test_identity_warp_reproduces_render_mask(self):
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=8)
        kept = cull_backpoints(lifted, view.pose)
        fg = warp_to_mask(kept, view.pose, Kv)
        disagree = np.count_nonzero(fg.data != view.mask.data)
        assert disagree / (Kv.width * Kv.height) < 0.005

    def test_empty_points_all_zero(self):
        fg = warp_to_mask(LiftedPixels.empty(), equatorial_pose(45), K)
        assert fg.area() == 0

    def test_warp_lands_inside_dilated_hull_silhouette(self):
        views = [(sphere_view(az)[0].mask, equatorial_pose(az), K)
                 for az in (0, 45, -45, 90)]
        grid = carve(views, SURFACE, 64)
        target = equatorial_pose(45)
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=4)
        kept = cull_backpoints(lifted, target)
        fg = warp_to_mask(kept, target, Kv)
        sil = hull_silhouette(grid, target, Kv)
        grown = sil.data.copy()
        grown[1:] |= sil.data[:-1]
        grown[:-1] |= sil.data[1:]
        g2 = grown.copy()
        g2[:, 1:] |= grown[:, :-1]
        g2[:, :-1] |= grown[:, 1:]
        assert fg.is_subset_of(MaskImage(g2))

    def test_order_equivariance(self, rng):
        view, Kv = sphere_view(0)
        lifted = lift_view(view, SURFACE, Kv, upscale=2)
        perm = rng.permutation(len(lifted))
        shuffled = LiftedPixels(points=lifted.points[perm],
                                normals=lifted.normals[perm],
                                source_view=lifted.source_view[perm])
        target = equatorial_pose(45)
        a = warp_to_mask(cull_backpoints(lifted, target), target, Kv)
        b = warp_to_mask(cull_backpoints(shuffled, target), target, Kv)
        np.testing.assert_array_equal(a.data, b.data)

    def test_projection_route_matches_homogeneous_route(self, rng):
        # warped coordinates via the target camera equal the
        # K . P(src->tgt) . K^-1 route applied to depth-bearing pixels
        src_pose = equatorial_pose(0)
        tgt_pose = equatorial_pose(45)
        E_src = pose_to_extrinsics(src_pose)
        E_tgt = pose_to_extrinsics(tgt_pose)
        rel = relative_transform(E_src, E_tgt)
        pts = rng.uniform(-0.4, 0.4, (200, 3))
        uv_direct, _z, valid = project_points(K, E_tgt, pts)
        cam_src = pts @ E_src.rotation.T + E_src.translation
        cam_tgt = cam_src @ rel[:3, :3].T + rel[:3, 3]
        uv_homog = np.stack([
            K.cx + K.fx * cam_tgt[:, 0] / cam_tgt[:, 2],
            K.cy + K.fy * cam_tgt[:, 1] / cam_tgt[:, 2],
        ], axis=1)
        np.testing.assert_allclose(uv_direct[valid], uv_homog[valid], atol=1e-9)


class TestOutpaintMask:
    def test_fg_equals_vh_gives_empty(self):
        view, _ = sphere_view(0)
        m = view.mask
        assert outpaint_mask(m, m).area() == 0

    def test_empty_fg_gives_vh(self):
        view, Kv = sphere_view(0)
        empty = MaskImage(np.zeros_like(view.mask.data))
        np.testing.assert_array_equal(outpaint_mask(view.mask, empty).data,
                                      view.mask.data)

    def test_disjointness_and_containment_fuzz(self, rng):
        for _ in range(20):
            a = MaskImage((rng.random((32, 32)) < 0.4).astype(np.uint8))
            b = MaskImage((rng.random((32, 32)) < 0.4).astype(np.uint8))
            m = outpaint_mask(a, b)
            assert not np.any((m.data == 1) & (b.data == 1))
            assert m.is_subset_of(a)

    def test_dimension_mismatch(self):
        a = MaskImage(np.zeros((16, 16), np.uint8))
        b = MaskImage(np.zeros((16, 8), np.uint8))
        with pytest.raises(ValueError):
            outpaint_mask(a, b)
