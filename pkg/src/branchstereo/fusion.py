"""Mask-guided distance estimation and the end-to-end pipeline.

Polygon vertices use continuous image coordinates in which pixel ``(u, v)``
covers ``[u, u+1) x [v, v+1)``; a pixel belongs to a mask when its centre
``(u + 0.5, v + 0.5)`` is inside the polygon under the even-odd rule.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionError,
    DomainError,
    EmptyMaskError,
    MalformedHeaderError,
    MissingFileError,
    NoDataError,
    PipelineError,
)
from .geometry import StereoRig, depth_map_from_disparity
from .images import as_gray, gaussian_smooth
from .matching import SgbmParams, sgbm
from .refine import WlsParams, wls_filter


@dataclass(frozen=True)
class BranchMask:
    label: str
    points: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DomainError("mask points must be a list of (u, v) pairs")
        if len(pts) < 3:
            raise DomainError(f"mask '{self.label}' needs at least 3 vertices, got {len(pts)}")
        if not np.isfinite(pts).all():
            raise DomainError(f"mask '{self.label}' has non-finite vertices")
        object.__setattr__(self, "points", tuple((float(u), float(v)) for u, v in pts))

    def to_dict(self) -> dict:
        return {"label": self.label, "points": [list(p) for p in self.points]}


@dataclass(frozen=True)
class DistanceEstimate:
    label: str
    distance_m: float
    pixel_count: int
    bin_count: int
    bin_lo: float
    bin_hi: float

    def to_dict(self) -> dict:
        return asdict(self)


def polygon_area(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def rasterize_mask(mask: BranchMask, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` coverage of the polygon (pixel-centre, even-odd)."""
    if width < 1 or height < 1:
        raise DimensionError("image size must be positive")
    pts = np.asarray(mask.points, dtype=np.float64)
    if polygon_area(pts) == 0:
        raise EmptyMaskError(f"mask '{mask.label}' has zero area")
    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    out = np.zeros((height, width), dtype=bool)
    v_lo = max(0, int(np.floor(pts[:, 1].min() - 0.5)))
    v_hi = min(height - 1, int(np.ceil(pts[:, 1].max())))
    for v in range(v_lo, v_hi + 1):
        y = v + 0.5
        crosses = (y1 <= y) & (y < y2) | (y2 <= y) & (y < y1)
        if not crosses.any():
            continue
        xa, ya, xb, yb = x1[crosses], y1[crosses], x2[crosses], y2[crosses]
        xs = np.sort(xa + (y - ya) * (xb - xa) / (yb - ya))
        for lo, hi in zip(xs[0::2], xs[1::2]):
            # pixels whose centre u + 0.5 lies in [lo, hi)
            u0 = max(0, int(np.ceil(lo - 0.5)))
            u1 = min(width, int(np.ceil(hi - 0.5)))
            if u1 > u0:
                out[v, u0:u1] ^= True
    if not out.any():
        raise EmptyMaskError(f"mask '{mask.label}' covers no pixel of the {width}x{height} image")
    return out


def _mask_pixels(mask, shape) -> tuple[str, np.ndarray]:
    if isinstance(mask, BranchMask):
        return mask.label, rasterize_mask(mask, shape[1], shape[0])
    arr = np.asarray(mask, dtype=bool)
    if arr.shape != shape:
        raise DimensionError(f"mask shape {arr.shape} does not match depth map {shape}")
    return "mask", arr


def densest_bin(depths, bin_width_m: float = 0.05) -> tuple[float, int, float, float]:
    """Mean of the values in the most populated ``[k*w, (k+1)*w)`` bin.

    Ties go to the nearer (smaller-depth) bin. Returns
    ``(distance, bin_count, bin_lo, bin_hi)``.
    """
    if not bin_width_m > 0:
        raise DomainError("bin width must be positive")
    z = np.asarray(depths, dtype=np.float64).ravel()
    z = z[np.isfinite(z)]
    if z.size == 0:
        raise NoDataError("no valid depth values")
    k = np.floor(z / bin_width_m).astype(np.int64)
    bins, counts = np.unique(k, return_counts=True)
    best = bins[np.argmax(counts)]
    inside = z[k == best]
    return float(inside.mean()), int(inside.size), best * bin_width_m, (best + 1) * bin_width_m


def estimate_distance(mask, depth, bin_width_m: float = 0.05) -> DistanceEstimate:
    """Distance to one masked object from a left-referenced depth map.

    ``mask`` is a :class:`BranchMask` or a boolean array shaped like ``depth``.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2 or depth.size == 0:
        raise DimensionError("depth map must be a non-empty 2-D array")
    label, pixels = _mask_pixels(mask, depth.shape)
    values = depth[pixels]
    if not np.isfinite(values).any():
        raise NoDataError(f"mask '{label}' has no valid depth")
    dist, count, lo, hi = densest_bin(values, bin_width_m)
    return DistanceEstimate(label, dist, int(pixels.sum()), count, float(lo), float(hi))


# --- pipeline --------------------------------------------------------------


@dataclass(frozen=True)
class PipelineParams:
    """All tunables of the smooth -> match -> refine -> depth -> fuse chain.

    ``wls=None`` skips the refinement stage; the depth map then keeps the
    matcher's invalid pixels.
    """

    smooth_sigma: float = 1.0
    sgbm: SgbmParams = field(default_factory=SgbmParams)
    wls: WlsParams | None = field(default_factory=WlsParams)
    bin_width_m: float = 0.05
    threads: int = 1


@dataclass
class StereoResult:
    raw_disparity: np.ndarray
    disparity: np.ndarray
    depth: np.ndarray
    timings_ms: dict


class _Stage:
    def __init__(self, name, timings):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = (time.perf_counter() - self.t0) * 1e3
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def run_stereo(left, right, rig: StereoRig, params: PipelineParams | None = None) -> StereoResult:
    """Smooth both views, match, optionally refine, and convert to depth."""
    params = params or PipelineParams()
    timings: dict = {}
    with _Stage("smoothing", timings):
        left_s = gaussian_smooth(as_gray(left), params.smooth_sigma)
        right_s = gaussian_smooth(as_gray(right), params.smooth_sigma)
    with _Stage("matching", timings):
        raw = sgbm(left_s, right_s, params.sgbm, threads=params.threads)
    with _Stage("refinement", timings):
        disp = wls_filter(raw, left_s, params.wls) if params.wls is not None else raw
    with _Stage("depth", timings):
        depth = depth_map_from_disparity(rig, disp)
    return StereoResult(raw, disp, depth, timings)


def fuse_masks(depth, masks, bin_width_m: float = 0.05) -> list[DistanceEstimate]:
    timings: dict = {}
    with _Stage("fusion", timings):
        return [estimate_distance(m, depth, bin_width_m) for m in masks]


def run_pipeline(left, right, rig: StereoRig, masks, params: PipelineParams | None = None):
    """Distances for every mask; identical inputs give identical outputs."""
    masks = list(masks)
    if not masks:
        return []
    params = params or PipelineParams()
    result = run_stereo(left, right, rig, params)
    return fuse_masks(result.depth, masks, params.bin_width_m)


# --- files -----------------------------------------------------------------


def masks_from_yolo(lines, width: int, height: int, names=None) -> list[BranchMask]:
    """Convert YOLO segmentation rows ``cls x1 y1 x2 y2 ...`` (normalised) to masks."""
    masks = []
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        cls, coords = parts[0], np.asarray(parts[1:], dtype=np.float64).reshape(-1, 2)
        label = names[int(cls)] if names else cls
        masks.append(BranchMask(label, coords * (width, height)))
    return masks


def load_masks(path) -> tuple[str, list[BranchMask]]:
    """Read ``{"image": ..., "masks": [{"label", "points"}]}``."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"mask file not found: {path}")
    try:
        data = json.loads(path.read_text())
        masks = [BranchMask(str(m.get("label", "branch")), m["points"]) for m in data["masks"]]
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise MalformedHeaderError(f"{path}: not a valid mask file ({exc})") from exc
    return str(data.get("image", "")), masks


def save_masks(path, masks, image: str = "") -> None:
    payload = {"image": image, "masks": [m.to_dict() for m in masks]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def save_estimates(path, estimates) -> None:
    Path(path).write_text(json.dumps([e.to_dict() for e in estimates], indent=2) + "\n")
