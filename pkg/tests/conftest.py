import numpy as np
import pytest

from carvepipe import AnalyticSurface, Box, CameraPose, Intrinsics, SdfScene, Sphere, render_view


UNIT_SPHERE_SCENE = SdfScene([Sphere((0.0, 0.0, 0.0), 0.5, (200, 0, 0))])


def random_scene(seed: int) -> SdfScene:
    """Seeded union-of-primitives scene, strictly inside the cube with a
    comfortable margin."""
    rng = np.random.default_rng(seed)
    prims = []
    for _ in range(int(rng.integers(1, 4))):
        center = rng.uniform(-0.4, 0.4, 3)
        albedo = tuple(int(v) for v in rng.integers(40, 255, 3))
        room = 0.88 - float(np.abs(center).max())
        if rng.random() < 0.5:
            radius = float(rng.uniform(0.15, min(0.4, room)))
            prims.append(Sphere(tuple(center), radius, albedo))
        else:
            half = rng.uniform(0.12, min(0.32, room), 3)
            prims.append(Box(tuple(center), tuple(float(h) for h in half), albedo))
    return SdfScene(prims)


def equatorial_pose(azimuth_deg: float) -> CameraPose:
    return CameraPose(polar_deg=90.0, azimuth_deg=azimuth_deg)


def coverage_mask(mask):
    """Conservative coverage rasterization of a rendered silhouette.

    Rendered masks are point samples (pixel = 1 iff the pixel-center ray
    hits); a silhouette in the coverage sense marks every pixel the
    object's projection touches. For smooth objects whose silhouette edge
    is locally straight at pixel scale, a one-pixel dilation of the
    point-sampled mask is a superset of the coverage mask, which is what
    the visual hull's superset property requires of its inputs.
    """
    from carvepipe import MaskImage

    d = mask.data
    out = d.copy()
    out[1:] |= d[:-1]
    out[:-1] |= d[1:]
    grown = out.copy()
    grown[:, 1:] |= out[:, :-1]
    grown[:, :-1] |= out[:, 1:]
    return MaskImage(grown)


def render_mask_views(scene, azimuths, img_size, coverage=False):
    """(mask, pose, K) tuples for a list of equatorial azimuths."""
    K = Intrinsics.from_fov(img_size)
    surface = AnalyticSurface(scene)
    views = []
    for az in azimuths:
        pose = equatorial_pose(az)
        _d, _n, mask = render_view(surface, pose, K)
        if coverage:
            mask = coverage_mask(mask)
        views.append((mask, pose, K))
    return views


@pytest.fixture(scope="session")
def sphere_scene():
    return UNIT_SPHERE_SCENE


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
