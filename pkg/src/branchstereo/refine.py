"""Edge-preserving disparity smoothing guided by the left image.

The filter minimises

    sum_p m_p (x_p - d_p)^2 + lam * sum_(p,q) w_pq (x_p - x_q)^2

with ``m_p = 1`` on valid input pixels and 0 elsewhere, and
``w_pq = exp(-|I_p - I_q| / sigma_color)`` on 4-neighbour edges. The 2-D
problem is approximated by alternating exact 1-D solves along rows and
columns (tridiagonal systems), repeated ``num_iterations`` times with
``lam`` spread over the rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DimensionError, NoDataError, ParameterError
from .images import as_gray

# keeps every tridiagonal system non-singular when exp() underflows on strong edges
MIN_EDGE_WEIGHT = 1e-9


@dataclass(frozen=True)
class WlsParams:
    lam: float = 8000.0
    sigma_color: float = 1.5
    num_iterations: int = 3

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ParameterError(f"lam must be a finite value >= 0, got {self.lam}")
        if not self.sigma_color > 0:
            raise ParameterError(f"sigma_color must be > 0, got {self.sigma_color}")
        if self.num_iterations < 1:
            raise ParameterError("num_iterations must be >= 1")


def lambda_schedule(lam: float, rounds: int) -> np.ndarray:
    """Per-round smoothness weights ``lam * 3 * 4**(T-t) / (4**T - 1)``; they sum to ``lam``."""
    t = np.arange(1, rounds + 1)
    return lam * 3.0 * 4.0 ** (rounds - t) / (4.0**rounds - 1.0)


def edge_weights(guide: np.ndarray, sigma_color: float) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal ``(H, W-1)`` and vertical ``(H-1, W)`` neighbour weights."""
    g = np.asarray(guide, dtype=np.float64)
    wh = np.exp(-np.abs(np.diff(g, axis=1)) / sigma_color)
    wv = np.exp(-np.abs(np.diff(g, axis=0)) / sigma_color)
    return np.maximum(wh, MIN_EDGE_WEIGHT), np.maximum(wv, MIN_EDGE_WEIGHT)


@njit(cache=True, nogil=True)
def _solve_line(f, m, e, lam, out, cp, dp):
    """Solve (diag(m) + lam * L_e) x = diag(m) f for one line.

    The line is shifted by its first confident sample before solving so a
    constant input comes back bit-identical.
    """
    n = f.shape[0]
    ref = 0.0
    found = False
    for i in range(n):
        if m[i] > 0:
            ref = f[i]
            found = True
            break
    if not found:
        return False
    if n == 1:
        out[0] = f[0]
        return True
    for i in range(n):
        left = lam * e[i - 1] if i > 0 else 0.0
        right = lam * e[i] if i < n - 1 else 0.0
        b = m[i] + left + right
        rhs = m[i] * (f[i] - ref)
        if i == 0:
            cp[i] = -right / b
            dp[i] = rhs / b
        else:
            denom = b + left * cp[i - 1]
            cp[i] = -right / denom
            dp[i] = (rhs + left * dp[i - 1]) / denom
    y = dp[n - 1]
    out[n - 1] = ref + y
    for i in range(n - 2, -1, -1):
        y = dp[i] - cp[i] * y
        out[i] = ref + y
    return True


@njit(cache=True, nogil=True)
def _sweep_rows(x, conf, wgt, lam):
    h, w = x.shape
    cp = np.empty(w)
    dp = np.empty(w)
    line = np.empty(w)
    for v in range(h):
        if _solve_line(x[v], conf[v], wgt[v], lam, line, cp, dp):
            x[v, :] = line
            conf[v, :] = 1.0


def wls_filter(disp, guide, params: WlsParams | None = None) -> np.ndarray:
    """Fill and smooth a disparity map; the result is valid everywhere."""
    params = params or WlsParams()
    disp = np.asarray(disp, dtype=np.float64)
    guide = as_gray(guide)
    if disp.ndim != 2 or disp.shape != guide.shape:
        raise DimensionError(f"disparity {disp.shape} and guide {guide.shape} must match")
    valid = np.isfinite(disp)
    if not valid.any():
        raise NoDataError("disparity map has no valid pixel")
    if params.lam == 0:
        return fill_invalid(disp)

    wh, wv = edge_weights(guide, params.sigma_color)
    wh = np.ascontiguousarray(np.pad(wh, ((0, 0), (0, 1))))
    wv_t = np.ascontiguousarray(np.pad(wv, ((0, 1), (0, 0))).T)
    x = np.where(valid, disp, 0.0)
    conf = valid.astype(np.float64)
    for lam_t in lambda_schedule(params.lam, params.num_iterations):
        _sweep_rows(x, conf, wh, lam_t)
        xt = np.ascontiguousarray(x.T)
        ct = np.ascontiguousarray(conf.T)
        _sweep_rows(xt, ct, wv_t, lam_t)
        x = np.ascontiguousarray(xt.T)
        conf = np.ascontiguousarray(ct.T)
    return x


def fill_invalid(disp) -> np.ndarray:
    """Fill invalid pixels from the nearest valid pixel to the left, else to the right.

    Rows with no valid pixel copy the nearest filled row (upper row on ties).
    """
    disp = np.asarray(disp, dtype=np.float64)
    if disp.ndim != 2 or disp.size == 0:
        raise DimensionError(f"expected a non-empty 2-D map, got shape {disp.shape}")
    valid = np.isfinite(disp)
    if not valid.any():
        raise NoDataError("disparity map has no valid pixel")
    h, w = disp.shape
    cols = np.arange(w)
    left_idx = np.maximum.accumulate(np.where(valid, cols, -1), axis=1)
    right_idx = np.minimum.accumulate(np.where(valid, cols, w)[:, ::-1], axis=1)[:, ::-1]
    rows = np.arange(h)[:, None]
    out = disp.copy()
    use_left = ~valid & (left_idx >= 0)
    use_right = ~valid & (left_idx < 0) & (right_idx < w)
    out[use_left] = disp[np.broadcast_to(rows, (h, w))[use_left], left_idx[use_left]]
    out[use_right] = disp[np.broadcast_to(rows, (h, w))[use_right], right_idx[use_right]]

    filled_rows = np.flatnonzero(valid.any(axis=1))
    if filled_rows.size < h:
        for v in np.flatnonzero(~valid.any(axis=1)):
            dist = np.abs(filled_rows - v)
            src = filled_rows[np.argmin(dist)]  # argmin keeps the first (upper) row on ties
            out[v] = out[src]
    return out
