import math

import numpy as np
import pytest

from carvepipe import (
    AnalyticSurface,
    CameraPose,
    Intrinsics,
    default_schedule,
    pixel_ray,
    pose_to_extrinsics,
    project,
    relative_transform,
    unproject,
)
from carvepipe.errors import BehindCameraError
from carvepipe.geometry import project_points

from conftest import UNIT_SPHERE_SCENE
from oracles import look_at, spherical_center


K = Intrinsics.from_fov(384)


class TestCameraPose:
    def test_equatorial_center(self):
        o = CameraPose(90, 0).center
        np.testing.assert_allclose(o, [3, 0, 0], atol=1e-12)

    def test_axis_permutation(self):
        o = CameraPose(90, 90).center
        np.testing.assert_allclose(o, [0, 3, 0], atol=1e-12)

    def test_oblique_center(self):
        o = CameraPose(45, 0).center
        np.testing.assert_allclose(o, [3 / math.sqrt(2), 0, 3 / math.sqrt(2)],
                                   atol=1e-12)

    @pytest.mark.parametrize("polar,azimuth", [(0, 0), (180, 0), (90, -180),
                                               (90, 181), (-5, 0)])
    def test_invalid_angles_rejected(self, polar, azimuth):
        with pytest.raises(ValueError):
            CameraPose(polar, azimuth)

    def test_default_schedule_on_sphere(self):
        for pose in default_schedule().poses:
            assert np.linalg.norm(pose.center) == pytest.approx(3.0, abs=1e-12)


class TestPoseToExtrinsics:
    def test_equatorial_axis_points_at_origin(self):
        E = pose_to_extrinsics(CameraPose(90, 0))
        # optical axis (camera z) goes toward -x in world frame
        np.testing.assert_allclose(E.rotation[2], [-1, 0, 0], atol=1e-12)

    def test_oblique_look_at_maps_origin_to_depth_axis(self):
        # hand-computed look-at oracle: origin must land at (0, 0, radius)
        pose = CameraPose(45, 0)
        E = pose_to_extrinsics(pose)
        np.testing.assert_allclose(E.rotation @ np.zeros(3) + E.translation,
                                   [0, 0, 3], atol=1e-9)
        rot_o, t_o = look_at(spherical_center(45, 0))
        np.testing.assert_allclose(E.rotation, rot_o, atol=1e-12)
        np.testing.assert_allclose(E.translation, t_o, atol=1e-12)

    def test_round_trip_world_camera(self, rng):
        for pose in default_schedule().poses:
            E = pose_to_extrinsics(pose)
            pts = rng.uniform(-1, 1, (50, 3))
            back = (E.world_to_camera(pts) - E.translation) @ E.rotation
            np.testing.assert_allclose(back, pts, atol=1e-9)

    def test_deterministic(self):
        a = pose_to_extrinsics(CameraPose(67.5, 12.25))
        b = pose_to_extrinsics(CameraPose(67.5, 12.25))
        assert a.rotation.tobytes() == b.rotation.tobytes()
        assert a.translation.tobytes() == b.translation.tobytes()

    def test_camera_center_matches_pose(self):
        pose = CameraPose(67.5, 12.25)
        np.testing.assert_allclose(pose_to_extrinsics(pose).camera_center,
                                   pose.center, atol=1e-12)


class TestProject:
    def test_origin_hits_principal_point(self):
        for pose in default_schedule().poses:
            E = pose_to_extrinsics(pose)
            uv, depth = project(K, E, np.zeros(3))
            assert uv[0] == K.cx and uv[1] == K.cy
            assert depth == pytest.approx(3.0, abs=1e-12)

    def test_point_on_axis(self):
        pose = CameraPose(90, 0)
        E = pose_to_extrinsics(pose)
        axis = E.rotation[2]
        uv, depth = project(K, E, pose.center + 1.7 * axis)
        np.testing.assert_allclose(uv, [K.cx, K.cy], atol=1e-9)
        assert depth == pytest.approx(1.7, abs=1e-12)

    def test_pinhole_similar_triangles(self):
        # world +y at (90, 0) is the camera x axis; offset = fx * (0.5 / 3)
        E = pose_to_extrinsics(CameraPose(90, 0))
        uv, _ = project(K, E, np.array([0.0, 0.5, 0.0]))
        assert uv[0] - K.cx == pytest.approx(K.fx * 0.5 / 3.0, abs=1e-6)
        assert uv[1] == pytest.approx(K.cy, abs=1e-9)

    def test_behind_camera_signaled(self):
        pose = CameraPose(90, 0)
        E = pose_to_extrinsics(pose)
        behind = pose.center - E.rotation[2]  # one unit behind the camera
        with pytest.raises(BehindCameraError):
            project(K, E, behind)
        _uv, _z, valid = project_points(K, E, behind[None, :])
        assert not valid[0]


class TestUnproject:
    def test_principal_point_at_radius_is_origin(self):
        for pose in default_schedule().poses:
            E = pose_to_extrinsics(pose)
            p = unproject(K, E, (K.cx, K.cy), 3.0)
            np.testing.assert_allclose(p, np.zeros(3), atol=1e-9)

    def test_round_trip_random_pixels(self, rng):
        E = pose_to_extrinsics(CameraPose(72, -33))
        px = rng.uniform(0, K.width, 1000)
        py = rng.uniform(0, K.height, 1000)
        dist = rng.uniform(0.5, 5.0, 1000)
        for i in range(1000):
            p = unproject(K, E, (px[i], py[i]), dist[i])
            uv, _ = project(K, E, p)
            assert abs(uv[0] - px[i]) < 1e-6 and abs(uv[1] - py[i]) < 1e-6

    def test_nonpositive_distance_rejected(self):
        E = pose_to_extrinsics(CameraPose(90, 0))
        with pytest.raises(ValueError):
            unproject(K, E, (K.cx, K.cy), 0.0)

    def test_unproject_at_first_hit_lands_on_surface(self):
        # scene oracle: the unprojected point at the traced distance must
        # sit on the zero level set
        pose = CameraPose(90, 0)
        E = pose_to_extrinsics(pose)
        surface = AnalyticSurface(UNIT_SPHERE_SCENE)
        for pixel in [(K.cx, K.cy), (K.cx + 20.0, K.cy - 11.0), (K.cx - 35.5, K.cy + 7.2)]:
            ray = pixel_ray(K, E, pixel)
            hit = surface.first_hit(ray)
            assert hit is not None
            p = unproject(K, E, pixel, hit.distance)
            assert abs(UNIT_SPHERE_SCENE.sdf(p)) < 1e-5


class TestRelativeTransform:
    def test_identity(self):
        E = pose_to_extrinsics(CameraPose(90, 45))
        np.testing.assert_allclose(relative_transform(E, E), np.eye(4), atol=1e-9)

    def test_opposite_views_rotate_180(self):
        src = pose_to_extrinsics(CameraPose(90, 0))
        dst = pose_to_extrinsics(CameraPose(90, 180))
        rel = relative_transform(src, dst)
        angle = math.acos(np.clip((np.trace(rel[:3, :3]) - 1) / 2, -1, 1))
        assert angle == pytest.approx(math.pi, abs=1e-6)
        # hand-built composition oracle
        r_src, t_src = look_at(spherical_center(90, 0))
        r_dst, t_dst = look_at(spherical_center(90, 180))
        np.testing.assert_allclose(rel[:3, :3], r_dst @ r_src.T, atol=1e-12)
        np.testing.assert_allclose(rel[:3, 3], t_dst - r_dst @ r_src.T @ t_src,
                                   atol=1e-12)

    def test_composition_chain(self):
        a = pose_to_extrinsics(CameraPose(90, 0))
        b = pose_to_extrinsics(CameraPose(70, 45))
        c = pose_to_extrinsics(CameraPose(110, -120))
        np.testing.assert_allclose(
            relative_transform(b, c) @ relative_transform(a, b),
            relative_transform(a, c), atol=1e-9)


class TestPixelRay:
    def test_principal_point_is_optical_axis(self):
        E = pose_to_extrinsics(CameraPose(90, 0))
        ray = pixel_ray(K, E, (K.cx, K.cy))
        np.testing.assert_allclose(ray.direction, E.rotation[2], atol=1e-12)
        np.testing.assert_allclose(ray.origin, E.camera_center, atol=1e-12)

    def test_consistency_with_project(self):
        E = pose_to_extrinsics(CameraPose(65, 30))
        pixel = (123.25, 301.75)
        ray = pixel_ray(K, E, pixel)
        for t in (1.0, 2.0, 5.0):
            uv, _ = project(K, E, ray.at(t))
            np.testing.assert_allclose(uv, pixel, atol=1e-6)

    def test_corner_ray_angle_closed_form(self):
        E = pose_to_extrinsics(CameraPose(90, 0))
        ray = pixel_ray(K, E, (0.0, 0.0))
        axis = E.rotation[2]
        angle = math.acos(np.clip(ray.direction @ axis, -1, 1))
        expected = math.atan(math.hypot((K.width / 2) / K.fx, (K.height / 2) / K.fy))
        assert angle == pytest.approx(expected, abs=1e-6)


def test_project_unproject_fuzz(rng):
    # randomized round-trips over several poses, fixed seed
    for _ in range(5):
        pose = CameraPose(rng.uniform(20, 160), rng.uniform(-179, 180))
        E = pose_to_extrinsics(pose)
        pts = rng.uniform(-0.9, 0.9, (200, 3))
        uv, z, valid = project_points(K, E, pts)
        assert valid.all()
        for i in range(0, 200, 20):
            d = np.linalg.norm(pts[i] - pose.center)
            back = unproject(K, E, uv[i], d)
            np.testing.assert_allclose(back, pts[i], atol=1e-6)


def test_intrinsics_square_pixels():
    assert K.fx == K.fy == pytest.approx((384 / 2) / math.tan(math.radians(30)))
    assert (K.cx, K.cy) == (192.0, 192.0)
    assert K.matrix[0, 0] == K.fx and K.matrix[2, 2] == 1.0
