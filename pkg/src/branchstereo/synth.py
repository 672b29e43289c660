"""Synthetic rectified stereo scenes with closed-form ground truth.

Every pixel is rendered by casting the ray through its centre from the
left or right camera centre, intersecting it analytically with the scene
and sampling a band-limited noise texture fixed to the hit surface. The
ground-truth depth comes from the same closed-form intersection, never
from the rendered images.

Image coordinates follow the projection model: pixel index ``u`` sits at
``u`` (not ``u + 0.5``). Mask polygons use pixel-centre-at-half
coordinates, so silhouettes are shifted by half a pixel when traced.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .exceptions import DomainError
from .fusion import BranchMask, save_masks
from .geometry import StereoRig, save_calibration
from .images import save_float_image, save_pgm

KINDS = ("fronto_plane", "slanted_plane", "cylinder_on_background")

THIN_BRANCH_RADIUS_M = 0.005
THICK_BRANCH_RADIUS_M = 0.015

TEXTURE_SIZE = 1024
TEXTURE_SMOOTHING = 1.5


@dataclass(frozen=True)
class SceneSpec:
    """Scene description.

    ``depth_m`` is the plane depth on the optical axis, or the depth of the
    cylinder axis. The cylinder runs parallel to the image rows at height
    ``axis_height_m``; the slanted plane turns by ``slant_deg`` about the
    vertical axis.
    """

    kind: str
    rig: StereoRig
    width: int = 640
    height: int = 360
    depth_m: float = 2.0
    background_depth_m: float = 4.0
    radius_m: float = 0.005
    axis_height_m: float = 0.0
    slant_deg: float = 0.0
    texture_seed: int = 0
    texture_range: tuple = (32, 224)
    branch_texture_range: tuple = (32, 224)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown scene kind '{self.kind}', expected one of {KINDS}")
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be positive")
        if not self.depth_m > 0 or not self.background_depth_m > 0:
            raise DomainError("depths must be positive")
        for lo, hi in (self.texture_range, self.branch_texture_range):
            if not 0 <= lo < hi <= 255:
                raise DomainError("texture range must satisfy 0 <= lo < hi <= 255")
        if self.kind == "cylinder_on_background":
            if not self.radius_m > 0:
                raise DomainError("cylinder radius must be positive")
            if self.depth_m - self.radius_m <= 0:
                raise DomainError("cylinder must lie in front of the camera")
            if self.depth_m + self.radius_m >= self.background_depth_m:
                raise DomainError("cylinder must lie in front of the background")
        if self.kind == "slanted_plane" and not abs(self.slant_deg) < 90:
            raise DomainError("slant must be within (-90, 90) degrees")


@dataclass
class GroundTruth:
    spec: SceneSpec
    left: np.ndarray
    right: np.ndarray
    disparity: np.ndarray
    depth: np.ndarray
    visibility: np.ndarray
    branch_mask: BranchMask | None = None
    extras: dict = field(default_factory=dict)


class NoiseTexture:
    """Periodic band-limited noise on an integer lattice, sampled bilinearly."""

    def __init__(self, seed, lo=32, hi=224, size=TEXTURE_SIZE, smoothing=TEXTURE_SMOOTHING):
        rng = np.random.default_rng(seed)
        raw = gaussian_filter(rng.random((size, size)), smoothing, mode="wrap")
        raw -= raw.min()
        self.lattice = lo + (hi - lo) * raw / raw.max()
        self.size = size

    def sample(self, s, t):
        """Texture value at column coordinate ``s`` and row coordinate ``t``."""
        s = np.asarray(s, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        i0 = np.floor(s)
        j0 = np.floor(t)
        fs = s - i0
        ft = t - j0
        n = self.size
        i0 = i0.astype(np.int64) % n
        j0 = j0.astype(np.int64) % n
        i1 = (i0 + 1) % n
        j1 = (j0 + 1) % n
        lat = self.lattice
        top = (1.0 - fs) * lat[j0, i0] + fs * lat[j0, i1]
        bottom = (1.0 - fs) * lat[j1, i0] + fs * lat[j1, i1]
        return (1.0 - ft) * top + ft * bottom


def _quantize(values):
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _pixel_grid(spec: SceneSpec):
    v, u = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    return u, v


def _rays(spec: SceneSpec, u, v):
    k = spec.rig.intrinsics
    return (u - k.o_x) / k.f_x, (v - k.o_y) / k.f_y


def cylinder_hit_depth(ry, axis_height_m, axis_depth_m, radius_m):
    """Depth of the nearest ray/cylinder intersection; NaN where the ray misses.

    The cylinder is parallel to the x-axis, so the answer only depends on
    the vertical ray slope ``ry = y / z``.
    """
    ry = np.asarray(ry, dtype=np.float64)
    a = ry * ry + 1.0
    b = ry * axis_height_m + axis_depth_m
    c = axis_height_m**2 + axis_depth_m**2 - radius_m**2
    disc = b * b - a * c
    with np.errstate(invalid="ignore"):
        z = (b - np.sqrt(disc)) / a
    return np.where(disc >= 0, z, np.nan)


def _surface(spec: SceneSpec, cam_x: float, u, v):
    """Depth and texture coordinates of the surface hit by each pixel ray.

    Returns ``(z, s, t, on_branch)``. Texture coordinates are written as
    ``offset + (u - o_x) * z / z_ref`` so that integer shifts stay exact.
    """
    k = spec.rig.intrinsics
    rx, ry = _rays(spec, u, v)
    aspect = k.f_x / k.f_y
    on_branch = np.zeros(u.shape, dtype=bool)

    if spec.kind == "fronto_plane":
        z_ref = spec.depth_m
        z = np.full(u.shape, z_ref)
    elif spec.kind == "slanted_plane":
        z_ref = spec.depth_m
        tan = math.tan(math.radians(spec.slant_deg))
        denom = 1.0 - tan * rx
        z = (z_ref + tan * cam_x) / denom
        if not (np.all(denom > 0) and np.all(z > 0)):
            raise DomainError("slanted plane is not in front of the camera for every pixel")
    else:
        z_ref = spec.background_depth_m
        z = np.full(u.shape, z_ref)

    q = z / z_ref
    s = cam_x * k.f_x / z_ref + (u - k.o_x) * q
    t = (v - k.o_y) * q * aspect

    if spec.kind == "cylinder_on_background":
        zc = cylinder_hit_depth(ry, spec.axis_height_m, spec.depth_m, spec.radius_m)
        on_branch = np.isfinite(zc)
        qc = np.where(on_branch, zc, spec.depth_m) / spec.depth_m
        z = np.where(on_branch, zc, z)
        y = np.where(on_branch, zc, spec.depth_m) * ry
        zz = np.where(on_branch, zc, spec.depth_m)
        angle = np.arctan2(y - spec.axis_height_m, spec.depth_m - zz)
        s_c = cam_x * k.f_x / spec.depth_m + (u - k.o_x) * qc
        t_c = angle * spec.radius_m * k.f_x / spec.depth_m
        s = np.where(on_branch, s_c, s)
        t = np.where(on_branch, t_c, t)
    return z, s, t, on_branch


def _silhouette_rows(spec: SceneSpec):
    """Range of ray slopes ``ry`` that touch the cylinder (tangent rays)."""
    y0, zc, r = spec.axis_height_m, spec.depth_m, spec.radius_m
    # (ry*y0 + zc)^2 - (ry^2 + 1)(y0^2 + zc^2 - r^2) = 0, a quadratic in ry
    qa = y0 * y0 - (y0 * y0 + zc * zc - r * r)
    qb = 2.0 * y0 * zc
    qc = zc * zc - (y0 * y0 + zc * zc - r * r)
    disc = math.sqrt(qb * qb - 4 * qa * qc)
    roots = sorted(((-qb - disc) / (2 * qa), (-qb + disc) / (2 * qa)))
    return roots


def branch_polygon(spec: SceneSpec) -> BranchMask:
    """Left-image polygon of the cylinder silhouette, in pixel-centre-at-half coordinates."""
    k = spec.rig.intrinsics
    ry_top, ry_bottom = _silhouette_rows(spec)
    v_top = k.o_y + k.f_y * ry_top + 0.5
    v_bottom = k.o_y + k.f_y * ry_bottom + 0.5
    pts = [(0.0, v_top), (float(spec.width), v_top), (float(spec.width), v_bottom), (0.0, v_bottom)]
    return BranchMask("branch", pts)


def render(spec: SceneSpec) -> GroundTruth:
    """Render both views and the analytic left-referenced ground truth."""
    rig = spec.rig
    branch_tex = None
    background = NoiseTexture([spec.texture_seed, 0], *spec.texture_range)
    if spec.kind == "cylinder_on_background":
        branch_tex = NoiseTexture([spec.texture_seed, 1], *spec.branch_texture_range)

    u, v = _pixel_grid(spec)
    images = []
    for cam_x in (0.0, rig.baseline_m):
        z, s, t, on_branch = _surface(spec, cam_x, u, v)
        values = background.sample(s, t)
        if branch_tex is not None:
            values = np.where(on_branch, branch_tex.sample(s, t), values)
        images.append(_quantize(values))
        if cam_x == 0.0:
            depth, left_branch = z, on_branch

    disparity = rig.W / depth
    # a horizontal cylinder and the planes cast no occlusion under a horizontal baseline,
    # so a left pixel is visible in the right view exactly when its match is inside the frame
    visibility = (u - disparity) >= 0
    mask = branch_polygon(spec) if spec.kind == "cylinder_on_background" else None
    return GroundTruth(
        spec,
        images[0],
        images[1],
        disparity,
        depth,
        visibility,
        mask,
        {"branch_pixels": left_branch},
    )


def render_distance_suite(
    rig: StereoRig,
    distances,
    width: int = 640,
    height: int = 360,
    radius_m: float = THIN_BRANCH_RADIUS_M,
    background_depth_m: float = 4.0,
    seed: int = 0,
    branch_texture_range=(32, 112),
    texture_range=(144, 224),
    **spec_kwargs,
) -> list[GroundTruth]:
    """One cylinder-on-background scene per distance; scene ``i`` uses seed ``seed + i``.

    The branch is textured darker than the backdrop, like bark against
    foliage or sky. Pass ``radius_m=THICK_BRANCH_RADIUS_M`` for the 30 mm
    variant.
    """
    suite = []
    for i, dist in enumerate(distances):
        if not dist > 0:
            raise DomainError(f"distance must be positive, got {dist}")
        spec = SceneSpec(
            "cylinder_on_background",
            rig,
            width,
            height,
            depth_m=float(dist),
            background_depth_m=background_depth_m,
            radius_m=radius_m,
            texture_seed=seed + i,
            texture_range=tuple(texture_range),
            branch_texture_range=tuple(branch_texture_range),
            **spec_kwargs,
        )
        suite.append(render(spec))
    return suite


def save_scene(gt: GroundTruth, directory) -> Path:
    """Write left/right PGM, GT disparity/depth PFM, calibration and mask JSON."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_pgm(gt.left, out / "left.pgm")
    save_pgm(gt.right, out / "right.pgm")
    save_float_image(gt.disparity, out / "disparity_gt.pfm")
    save_float_image(gt.depth, out / "depth_gt.pfm")
    save_pgm(gt.visibility.astype(np.uint8) * 255, out / "visibility.pgm")
    save_calibration(gt.spec.rig, out / "calib.json")
    masks = [gt.branch_mask] if gt.branch_mask is not None else []
    save_masks(out / "masks.json", masks, image="left.pgm")
    spec = gt.spec
    meta = {
        "kind": spec.kind,
        "width": spec.width,
        "height": spec.height,
        "depth_m": spec.depth_m,
        "background_depth_m": spec.background_depth_m,
        "radius_m": spec.radius_m,
        "axis_height_m": spec.axis_height_m,
        "slant_deg": spec.slant_deg,
        "texture_seed": spec.texture_seed,
    }
    (out / "scene.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out
