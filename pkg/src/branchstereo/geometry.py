"""Pinhole stereo model: projection, triangulation and disparity/depth conversion.

Both cameras share one set of intrinsics and the right camera sits at
``(baseline_m, 0, 0)`` in the left-camera frame, so a rectified pair has
identical image rows for every scene point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import (
    DimensionError,
    DomainError,
    InconsistentPairError,
    MalformedHeaderError,
    MissingFileError,
    NoIntersectionError,
)
from .images import INVALID

EPIPOLAR_TOLERANCE_PX = 1.0


@dataclass(frozen=True)
class CameraIntrinsics:
    f_x: float
    f_y: float
    o_x: float
    o_y: float

    def __post_init__(self):
        for name in ("f_x", "f_y", "o_x", "o_y"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.f_x <= 0 or self.f_y <= 0:
            raise DomainError("focal lengths must be positive")
        if self.o_x < 0 or self.o_y < 0:
            raise DomainError("principal point offsets must be non-negative")


@dataclass(frozen=True)
class StereoRig:
    intrinsics: CameraIntrinsics
    baseline_m: float

    def __post_init__(self):
        if not (math.isfinite(self.baseline_m) and self.baseline_m > 0):
            raise DomainError("baseline_m must be a positive finite number")

    @classmethod
    def from_values(cls, f_x, f_y, o_x, o_y, baseline_m) -> "StereoRig":
        return cls(CameraIntrinsics(float(f_x), float(f_y), float(o_x), float(o_y)), float(baseline_m))

    @property
    def W(self) -> float:
        """Disparity-depth constant ``baseline_m * f_x`` (px * m)."""
        return self.baseline_m * self.intrinsics.f_x

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {"fx": k.f_x, "fy": k.f_y, "ox": k.o_x, "oy": k.o_y, "baseline_m": self.baseline_m}


class PixelCoord(NamedTuple):
    u: float
    v: float


class Point3D(NamedTuple):
    x: float
    y: float
    z: float


def project(rig: StereoRig, p: Point3D) -> tuple[PixelCoord, PixelCoord]:
    """Project a left-frame point into both images.

    Raises DomainError when the point is not strictly in front of the rig.
    """
    x, y, z = (float(c) for c in p)
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise DomainError("point coordinates must be finite")
    if z <= 0:
        raise DomainError(f"point must have z > 0, got z={z}")
    k = rig.intrinsics
    v = k.f_y * y / z + k.o_y
    left = PixelCoord(k.f_x * x / z + k.o_x, v)
    right = PixelCoord(k.f_x * (x - rig.baseline_m) / z + k.o_x, v)
    return left, right


def triangulate(
    rig: StereoRig,
    left: PixelCoord,
    right: PixelCoord,
    epipolar_tolerance: float = EPIPOLAR_TOLERANCE_PX,
) -> Point3D:
    """Recover the 3-D point seen at ``left`` and ``right``.

    The row of the left observation is used for ``y``; the right row only
    has to agree within ``epipolar_tolerance`` pixels.
    """
    u_l, v_l = float(left[0]), float(left[1])
    u_r, v_r = float(right[0]), float(right[1])
    if abs(v_l - v_r) > epipolar_tolerance:
        raise InconsistentPairError(
            f"rows differ by {abs(v_l - v_r):.3f} px (tolerance {epipolar_tolerance} px)"
        )
    d = u_l - u_r
    if not d > 0:
        raise NoIntersectionError(f"disparity must be positive, got {d}")
    k = rig.intrinsics
    b = rig.baseline_m
    return Point3D(
        b * (u_l - k.o_x) / d,
        b * k.f_x * (v_l - k.o_y) / (k.f_y * d),
        b * k.f_x / d,
    )


def disparity_to_depth(rig: StereoRig, d):
    """Depth ``W / d`` for a scalar or array of disparities.

    Non-positive or non-finite disparities map to the invalid sentinel.
    Scalars in give a Python float back.
    """
    arr = np.asarray(d, dtype=np.float64)
    ok = np.isfinite(arr) & (arr > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(ok, rig.W / np.where(ok, arr, 1.0), INVALID)
    if z.ndim == 0:
        return float(z)
    return z


def depth_map_from_disparity(rig: StereoRig, disp: np.ndarray) -> np.ndarray:
    disp = np.asarray(disp, dtype=np.float64)
    if disp.ndim != 2 or disp.size == 0:
        raise DimensionError(f"disparity map must be a non-empty 2-D array, got shape {disp.shape}")
    return disparity_to_depth(rig, disp)


def depth_to_disparity(rig: StereoRig, z):
    """Inverse of :func:`disparity_to_depth` with the same sentinel rules."""
    return disparity_to_depth(rig, z)


_CALIB_FIELDS = ("fx", "fy", "ox", "oy", "baseline_m")


def load_calibration(path) -> StereoRig:
    """Read a rig from ``{"fx", "fy", "ox", "oy", "baseline_m"}`` JSON."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"calibration file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedHeaderError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise MalformedHeaderError(f"{path}: expected a JSON object")
    missing = [k for k in _CALIB_FIELDS if k not in data]
    if missing:
        raise MalformedHeaderError(f"{path}: missing calibration fields {missing}")
    try:
        values = [float(data[k]) for k in _CALIB_FIELDS]
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{path}: calibration fields must be numbers") from exc
    try:
        return StereoRig.from_values(*values)
    except DomainError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from exc


def save_calibration(rig: StereoRig, path) -> None:
    Path(path).write_text(json.dumps(rig.to_dict(), indent=2) + "\n")
