"""Disparity estimation: census cost, block matching and semi-global matching.

Cost volumes are laid out ``[row, column, disparity]``. The hot loops are
compiled with numba; everything stays in integer arithmetic until the
sub-pixel step so results are reproducible bit for bit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DimensionError, ParameterError
from .images import INVALID, as_gray

DIRECTIONS_8 = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1), (1, -1), (-1, 1))
DIRECTIONS_4 = DIRECTIONS_8[:4]


@dataclass(frozen=True)
class SgbmParams:
    """Semi-global matching settings.

    p1/p2 are the penalties for disparity changes of one pixel and of more
    than one pixel between neighbours along a path. ``uniqueness_ratio`` is
    a percentage margin; ``lr_max_diff < 0`` disables the left-right check
    and ``speckle_window == 0`` disables speckle removal.
    """

    num_disparities: int = 64
    p1: int = 8
    p2: int = 32
    num_paths: int = 8
    uniqueness_ratio: float = 10.0
    lr_max_diff: float = 1.0
    speckle_window: int = 100
    speckle_range: float = 1.0
    census_window: int = 5

    def __post_init__(self):
        if self.num_disparities < 8 or self.num_disparities % 8:
            raise ParameterError(
                f"num_disparities must be a positive multiple of 8, got {self.num_disparities}"
            )
        if not 0 < self.p1 < self.p2:
            raise ParameterError(f"penalties must satisfy 0 < p1 < p2, got p1={self.p1}, p2={self.p2}")
        if self.p2 > 2**26:
            raise ParameterError("p2 too large for 32-bit aggregation")
        if self.num_paths not in (4, 8):
            raise ParameterError(f"num_paths must be 4 or 8, got {self.num_paths}")
        if self.uniqueness_ratio < 0:
            raise ParameterError("uniqueness_ratio must be >= 0")
        if self.speckle_window < 0 or self.speckle_range < 0:
            raise ParameterError("speckle parameters must be >= 0")
        if self.census_window not in (3, 5):
            raise ParameterError("census_window must be 3 or 5")

    @property
    def directions(self):
        return DIRECTIONS_8 if self.num_paths == 8 else DIRECTIONS_4


# --- cost ------------------------------------------------------------------


def census_bits(window: int) -> int:
    return window * window - 1


def census_transform(img, window: int = 5) -> np.ndarray:
    """Census descriptors over a ``window x window`` neighbourhood.

    Neighbours are visited row-major with the centre skipped; the first
    neighbour lands in the most significant bit. A bit is set when the
    neighbour is darker than the centre. Borders replicate edge pixels.
    """
    img = as_gray(img)
    if window % 2 == 0 or window < 3:
        raise ParameterError(f"census window must be odd and >= 3, got {window}")
    h, w = img.shape
    if h < window or w < window:
        raise DimensionError(f"image {w}x{h} is smaller than the {window}x{window} census window")
    r = window // 2
    padded = np.pad(img, r, mode="edge")
    desc = np.zeros((h, w), dtype=np.uint32)
    for dy in range(window):
        for dx in range(window):
            if dy == r and dx == r:
                continue
            desc <<= np.uint32(1)
            desc |= (padded[dy : dy + h, dx : dx + w] < img).astype(np.uint32)
    return desc


def compute_cost_volume(left_desc, right_desc, num_disparities: int, max_cost: int = 24) -> np.ndarray:
    """Hamming cost ``C[v, u, d]`` between ``left[v, u]`` and ``right[v, u - d]``.

    Columns with ``u - d < 0`` get ``max_cost``.
    """
    left_desc = np.asarray(left_desc)
    right_desc = np.asarray(right_desc)
    if left_desc.shape != right_desc.shape or left_desc.ndim != 2:
        raise DimensionError(
            f"descriptor grids must be equal 2-D shapes, got {left_desc.shape} and {right_desc.shape}"
        )
    if num_disparities < 1:
        raise ParameterError("num_disparities must be >= 1")
    h, w = left_desc.shape
    cost = np.full((h, w, num_disparities), max_cost, dtype=np.uint8)
    for d in range(min(num_disparities, w)):
        x = np.bitwise_xor(left_desc[:, d:], right_desc[:, : w - d])
        cost[:, d:, d] = np.bitwise_count(x)
    return cost


# --- block matching --------------------------------------------------------


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Sum over (2r+1)^2 windows of an array already padded by r on each side."""
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    c[1:, 1:] = a.cumsum(0).cumsum(1)
    k = 2 * r + 1
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def block_match(left, right, num_disparities: int, block: int = 5) -> np.ndarray:
    """Winner-take-all SAD block matching (no aggregation, no refinement).

    Windows use edge-replicated borders; disparities with ``u - d < 0`` are
    not considered. Ties go to the smallest disparity.
    """
    if block < 3 or block % 2 == 0:
        raise ParameterError(f"block size must be odd and >= 3, got {block}")
    left = as_gray(left)
    right = as_gray(right)
    if left.shape != right.shape:
        raise DimensionError("left and right images differ in size")
    if num_disparities < 1:
        raise ParameterError("num_disparities must be >= 1")
    h, w = left.shape
    r = block // 2
    lp = np.pad(left, r, mode="edge").astype(np.int32)
    rp = np.pad(right, r, mode="edge").astype(np.int32)
    best = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
    disp = np.zeros((h, w), dtype=np.float64)
    for d in range(min(num_disparities, w)):
        diff = np.zeros_like(lp)
        diff[:, d:] = np.abs(lp[:, d:] - rp[:, : lp.shape[1] - d])
        sad = _box_sum(diff, r)
        sad[:, :d] = np.iinfo(np.int64).max
        better = sad < best
        best[better] = sad[better]
        disp[better] = d
    return disp


# --- semi-global aggregation ----------------------------------------------


@njit(cache=True, nogil=True)
def _path_accumulate(cost, dr, dc, p1, p2, out):
    h, w, nd = cost.shape
    big = np.int32(2**30)
    # one sentinel column on each side of the disparity axis drops the d-1/d+1 terms at the ends
    prev = np.full((w, nd + 2), big, dtype=np.int32)
    cur = np.full((w, nd + 2), big, dtype=np.int32)
    prev_min = np.zeros(w, dtype=np.int32)
    cur_min = np.zeros(w, dtype=np.int32)
    p1 = np.int32(p1)
    p2 = np.int32(p2)
    if dr >= 0:
        r0, r1, rs = 0, h, 1
    else:
        r0, r1, rs = h - 1, -1, -1
    if dc >= 0:
        c0, c1, cs = 0, w, 1
    else:
        c0, c1, cs = w - 1, -1, -1
    for v in range(r0, r1, rs):
        for u in range(c0, c1, cs):
            pv = v - dr
            pu = u - dc
            row = cur[u]
            c = cost[v, u]
            o = out[v, u]
            if 0 <= pv < h and 0 <= pu < w:
                if dr == 0:
                    lp = cur[pu]
                    m = cur_min[pu]
                else:
                    lp = prev[pu]
                    m = prev_min[pu]
                jump = m + p2
                for d in range(nd):
                    best = min(lp[d + 1], min(lp[d], lp[d + 2]) + p1, jump)
                    row[d + 1] = np.int32(c[d]) + best - m
            else:
                for d in range(nd):
                    row[d + 1] = np.int32(c[d])
            lo = row[1]
            for d in range(nd):
                o[d] += row[d + 1]
                lo = min(lo, row[d + 1])
            cur_min[u] = lo
        if dr != 0:
            prev, cur = cur, prev
            prev_min, cur_min = cur_min, prev_min


def _check_direction(direction):
    direction = (int(direction[0]), int(direction[1]))
    if direction not in DIRECTIONS_8:
        raise ParameterError(f"illegal aggregation direction {direction}")
    return direction


def aggregate_path(volume, direction, p1: int, p2: int) -> np.ndarray:
    """Aggregate a cost volume along one path direction ``(d_row, d_col)``.

    Returns ``L[v, u, d]`` as int64; the first pixel of each path keeps its
    raw cost.
    """
    dr, dc = _check_direction(direction)
    volume = np.asarray(volume)
    if volume.ndim != 3 or min(volume.shape) < 1:
        raise DimensionError(f"cost volume must be a non-empty 3-D array, got {volume.shape}")
    if p1 < 0 or p2 < 0:
        raise ParameterError("penalties must be non-negative")
    out = np.zeros(volume.shape, dtype=np.int64)
    _path_accumulate(np.ascontiguousarray(volume), dr, dc, int(p1), int(p2), out)
    return out


def aggregate_volume(volume, directions, p1: int, p2: int, threads: int = 1) -> np.ndarray:
    """Sum of path aggregations over ``directions`` as int32.

    With ``threads > 1`` the directions are split into groups that run
    concurrently into private accumulators; integer summation makes the
    result independent of the split.
    """
    volume = np.ascontiguousarray(volume)
    directions = [_check_direction(d) for d in directions]
    groups = max(1, min(int(threads), len(directions)))
    buckets = [directions[i::groups] for i in range(groups)]

    def run(bucket):
        acc = np.zeros(volume.shape, dtype=np.int32)
        for dr, dc in bucket:
            _path_accumulate(volume, dr, dc, int(p1), int(p2), acc)
        return acc

    if groups == 1:
        return run(buckets[0])
    with ThreadPoolExecutor(max_workers=groups) as pool:
        parts = list(pool.map(run, buckets))
    total = parts[0]
    for part in parts[1:]:
        total += part
    return total


# --- disparity selection and post-filters ----------------------------------


def subpixel_refine(c_minus: float, c0: float, c_plus: float) -> float:
    """Parabola vertex offset through three equally spaced costs, in [-0.5, 0.5]."""
    denom = c_minus - 2.0 * c0 + c_plus
    if denom == 0:
        return 0.0
    offset = (c_minus - c_plus) / (2.0 * denom)
    return float(min(0.5, max(-0.5, offset)))


@njit(cache=True, nogil=True)
def _select(agg, uniqueness_ratio):
    h, w, nd = agg.shape
    disp = np.empty((h, w), dtype=np.float64)
    for v in range(h):
        for u in range(w):
            best_d = 0
            best = agg[v, u, 0]
            for d in range(1, nd):
                if agg[v, u, d] < best:
                    best = agg[v, u, d]
                    best_d = d
            second = np.int64(1) << 62
            for d in range(nd):
                if abs(d - best_d) > 1 and agg[v, u, d] < second:
                    second = agg[v, u, d]
            if second != (np.int64(1) << 62) and best * (100.0 + uniqueness_ratio) > second * 100.0:
                disp[v, u] = -np.inf
                continue
            offset = 0.0
            if 0 < best_d < nd - 1:
                cm = float(agg[v, u, best_d - 1])
                cp = float(agg[v, u, best_d + 1])
                denom = cm - 2.0 * best + cp
                if denom != 0.0:
                    offset = (cm - cp) / (2.0 * denom)
                    if offset > 0.5:
                        offset = 0.5
                    elif offset < -0.5:
                        offset = -0.5
            disp[v, u] = best_d + offset
    return disp


def winner_take_all(agg, uniqueness_ratio: float = 10.0) -> np.ndarray:
    """Pick the lowest-cost disparity per pixel, refine it, apply the uniqueness test.

    A pixel is invalidated when ``best * (100 + ratio) / 100`` exceeds the
    best cost found more than one disparity away from the winner.
    """
    agg = np.ascontiguousarray(agg)
    return _select(agg, float(uniqueness_ratio))


@njit(cache=True, nogil=True)
def _lr_check(disp_left, disp_right, max_diff):
    h, w = disp_left.shape
    out = disp_left.copy()
    for v in range(h):
        for u in range(w):
            d = disp_left[v, u]
            if not np.isfinite(d):
                continue
            ur = int(np.floor(u - d + 0.5))
            if ur < 0 or ur >= w:
                out[v, u] = -np.inf
                continue
            dr = disp_right[v, ur]
            if not np.isfinite(dr) or abs(d - dr) > max_diff:
                out[v, u] = -np.inf
    return out


def lr_consistency(disp_left, disp_right, max_diff: float = 1.0) -> np.ndarray:
    """Invalidate left disparities whose right-image partner disagrees by more than ``max_diff``."""
    disp_left = np.asarray(disp_left, dtype=np.float64)
    disp_right = np.asarray(disp_right, dtype=np.float64)
    if disp_left.shape != disp_right.shape:
        raise DimensionError("left and right disparity maps differ in size")
    return _lr_check(disp_left, disp_right, float(max_diff))


@njit(cache=True, nogil=True)
def _speckles(disp, max_size, max_diff):
    h, w = disp.shape
    out = disp.copy()
    label = np.full((h, w), -1, dtype=np.int64)
    stack = np.empty(h * w, dtype=np.int64)
    region = np.empty(h * w, dtype=np.int64)
    for sv in range(h):
        for su in range(w):
            if label[sv, su] >= 0 or not np.isfinite(disp[sv, su]):
                continue
            label[sv, su] = 1
            top = 0
            stack[top] = sv * w + su
            top += 1
            n = 0
            while top > 0:
                top -= 1
                idx = stack[top]
                region[n] = idx
                n += 1
                v = idx // w
                u = idx - v * w
                d = disp[v, u]
                for k in range(4):
                    if k == 0:
                        nv, nu = v - 1, u
                    elif k == 1:
                        nv, nu = v + 1, u
                    elif k == 2:
                        nv, nu = v, u - 1
                    else:
                        nv, nu = v, u + 1
                    if 0 <= nv < h and 0 <= nu < w and label[nv, nu] < 0:
                        dn = disp[nv, nu]
                        if np.isfinite(dn) and abs(dn - d) <= max_diff:
                            label[nv, nu] = 1
                            stack[top] = nv * w + nu
                            top += 1
            if n < max_size:
                for i in range(n):
                    idx = region[i]
                    out[idx // w, idx % w] = -np.inf
    return out


def filter_speckles(disp, window: int = 100, max_diff: float = 1.0) -> np.ndarray:
    """Invalidate 4-connected regions smaller than ``window`` pixels.

    Neighbours join a region when their disparities differ by at most
    ``max_diff``.
    """
    disp = np.asarray(disp, dtype=np.float64)
    if window <= 0:
        return disp.copy()
    return _speckles(disp, int(window), float(max_diff))


# --- full matcher ----------------------------------------------------------


def _match_one_side(base_desc, other_desc, params: SgbmParams, threads: int) -> np.ndarray:
    cost = compute_cost_volume(
        base_desc, other_desc, params.num_disparities, census_bits(params.census_window)
    )
    agg = aggregate_volume(cost, params.directions, params.p1, params.p2, threads)
    return winner_take_all(agg, params.uniqueness_ratio)


def sgbm(left, right, params: SgbmParams | None = None, threads: int = 1) -> np.ndarray:
    """Semi-global matching of a rectified pair; returns left-referenced disparities.

    Invalid pixels hold ``-inf``. The right-referenced map used for the
    consistency check is obtained by matching the mirrored images with
    their roles swapped.
    """
    params = params or SgbmParams()
    left = as_gray(left)
    right = as_gray(right)
    if left.shape != right.shape:
        raise DimensionError(f"image sizes differ: {left.shape} vs {right.shape}")
    h, w = left.shape
    if h < 16 or w < 16:
        raise DimensionError(f"images must be at least 16x16, got {w}x{h}")
    desc_l = census_transform(left, params.census_window)
    desc_r = census_transform(right, params.census_window)
    disp = _match_one_side(desc_l, desc_r, params, threads)
    if params.lr_max_diff >= 0:
        mirrored = _match_one_side(
            np.ascontiguousarray(desc_r[:, ::-1]),
            np.ascontiguousarray(desc_l[:, ::-1]),
            params,
            threads,
        )
        disp = lr_consistency(disp, mirrored[:, ::-1], params.lr_max_diff)
    disp = filter_speckles(disp, params.speckle_window, params.speckle_range)
    return disp
