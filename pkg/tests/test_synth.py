import json
import math

import numpy as np
import pytest

from branchstereo.exceptions import DomainError
from branchstereo.fusion import load_masks, rasterize_mask
from branchstereo.geometry import StereoRig, load_calibration
from branchstereo.images import load_float_image, load_image
from branchstereo.synth import (
    THICK_BRANCH_RADIUS_M,
    SceneSpec,
    _surface,
    render,
    render_distance_suite,
    save_scene,
)


@pytest.fixture
def rig():
    return StereoRig.from_values(800, 800, 160, 60, 0.1)


def march(ry, y0, zc, r, z_max=10.0, step=1e-4):
    """First depth along the ray (y = ry * z) inside the cylinder, by stepping then bisection."""
    def inside(z):
        return (ry * z - y0) ** 2 + (z - zc) ** 2 <= r * r

    z = 1e-3
    while z < z_max and not inside(z):
        z += step
    if z >= z_max:
        return math.nan
    lo, hi = z - step, z
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if inside(mid) else (mid, hi)
    return hi


def test_fronto_plane_disparity(rig):
    gt = render(SceneSpec("fronto_plane", rig, 320, 120, depth_m=2.0))
    assert np.all(gt.disparity == 40.0)
    assert np.all(gt.depth == 2.0)
    np.testing.assert_array_equal(gt.right[:, : 320 - 40], gt.left[:, 40:])
    assert not gt.visibility[:, :40].any() and gt.visibility[:, 40:].all()


def test_texture_range_and_variation(rig):
    gt = render(SceneSpec("fronto_plane", rig, 320, 120))
    assert 32 <= gt.left.min() and gt.left.max() <= 224
    assert gt.left.std() > 20


def test_cylinder_matches_ray_march(rig):
    spec = SceneSpec("cylinder_on_background", rig, 320, 120, depth_m=1.5, radius_m=0.01)
    gt = render(spec)
    k = rig.intrinsics
    axis_row = int(k.o_y)
    assert gt.depth[axis_row, 7] == pytest.approx(1.49, abs=1e-12)
    assert gt.disparity[axis_row, 7] == pytest.approx(rig.W / 1.49, rel=1e-12)
    for v in range(axis_row - 7, axis_row + 8):
        ry = (v - k.o_y) / k.f_y
        z = march(ry, 0.0, 1.5, 0.01)
        if math.isnan(z):
            assert gt.depth[v, 0] == 4.0
        else:
            assert gt.depth[v, 0] == pytest.approx(z, abs=1e-9)


def test_depth_disparity_consistency(rig):
    for spec in (
        SceneSpec("slanted_plane", rig, 160, 80, depth_m=2.0, slant_deg=25),
        SceneSpec("cylinder_on_background", rig, 160, 80, depth_m=1.2, radius_m=0.02, axis_height_m=0.01),
    ):
        gt = render(spec)
        np.testing.assert_allclose(gt.depth * gt.disparity, rig.W, rtol=1e-9)


def test_slanted_plane_geometry(rig):
    spec = SceneSpec("slanted_plane", rig, 160, 80, depth_m=2.0, slant_deg=30)
    gt = render(spec)
    k = rig.intrinsics
    u = np.arange(160.0)
    x = (u - k.o_x) / k.f_x * gt.depth[10]
    np.testing.assert_allclose(gt.depth[10], 2.0 + math.tan(math.radians(30)) * x, rtol=1e-12)
    # the right camera sees the same texture point at u - d
    v = np.full(160, 10.0)
    _, s_l, t_l, _ = _surface(spec, 0.0, u, v)
    _, s_r, t_r, _ = _surface(spec, rig.baseline_m, u - gt.disparity[10], v)
    np.testing.assert_allclose(s_r, s_l, atol=1e-9)
    np.testing.assert_allclose(t_r, t_l, atol=1e-9)


def test_render_deterministic(rig):
    spec = SceneSpec("cylinder_on_background", rig, 160, 80, depth_m=1.0, texture_seed=5)
    a, b = render(spec), render(spec)
    np.testing.assert_array_equal(a.left, b.left)
    np.testing.assert_array_equal(a.right, b.right)
    c = render(SceneSpec("cylinder_on_background", rig, 160, 80, depth_m=1.0, texture_seed=6))
    assert not np.array_equal(a.left, c.left)


def test_branch_mask_traces_silhouette(rig):
    spec = SceneSpec("cylinder_on_background", rig, 160, 120, depth_m=1.0, radius_m=0.015)
    gt = render(spec)
    mask = rasterize_mask(gt.branch_mask, 160, 120)
    np.testing.assert_array_equal(mask, gt.extras["branch_pixels"])


def test_distance_suite(desk_rig):
    suite = render_distance_suite(desk_rig, [1.0, 1.5, 2.0], radius_m=THICK_BRANCH_RADIUS_M)
    for gt, dist in zip(suite, [1.0, 1.5, 2.0]):
        masked = gt.depth[rasterize_mask(gt.branch_mask, 640, 360)]
        assert abs(masked.mean() - dist) <= 0.02
    thin = render_distance_suite(desk_rig, [1.5])[0]
    assert abs(thin.depth[rasterize_mask(thin.branch_mask, 640, 360)].mean() - 1.5) <= 0.02
    assert render_distance_suite(desk_rig, []) == []


def test_suite_duplicate_distances_get_new_seeds(rig):
    a, b = render_distance_suite(rig, [1.0, 1.0], 160, 80)
    assert a.spec.texture_seed != b.spec.texture_seed
    assert not np.array_equal(a.left, b.left)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="sphere"),
        dict(kind="fronto_plane", depth_m=0),
        dict(kind="cylinder_on_background", radius_m=0),
        dict(kind="cylinder_on_background", depth_m=3.99, radius_m=0.02),
        dict(kind="fronto_plane", texture_range=(200, 100)),
        dict(kind="slanted_plane", slant_deg=90),
    ],
)
def test_invalid_specs(rig, kwargs):
    with pytest.raises(DomainError):
        SceneSpec(rig=rig, **kwargs)


def test_save_scene(tmp_path, rig):
    gt = render(SceneSpec("cylinder_on_background", rig, 160, 80, depth_m=1.0, radius_m=0.02))
    out = save_scene(gt, tmp_path / "scene")
    np.testing.assert_array_equal(load_image(out / "left.pgm"), gt.left)
    np.testing.assert_array_equal(load_image(out / "right.pgm"), gt.right)
    np.testing.assert_allclose(load_float_image(out / "disparity_gt.pfm"), gt.disparity, rtol=1e-6)
    np.testing.assert_allclose(load_float_image(out / "depth_gt.pfm"), gt.depth, rtol=1e-6)
    assert load_calibration(out / "calib.json") == rig
    assert load_masks(out / "masks.json")[1] == [gt.branch_mask]
    assert json.loads((out / "scene.json").read_text())["kind"] == "cylinder_on_background"
