import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchstereo.exceptions import DimensionError, NoDataError, ParameterError
from branchstereo.refine import WlsParams, edge_weights, fill_invalid, lambda_schedule, wls_filter

INV = -np.inf


def line_solve_oracle(f, m, w, lam):
    """Dense solve of (diag(m) + lam * L_w) x = m * f for one line."""
    n = len(f)
    a = np.diag(np.asarray(m, float))
    for i in range(n - 1):
        a[i, i] += lam * w[i]
        a[i + 1, i + 1] += lam * w[i]
        a[i, i + 1] -= lam * w[i]
        a[i + 1, i] -= lam * w[i]
    return np.linalg.solve(a, np.asarray(m, float) * np.asarray(f, float))


def test_lambda_zero_is_identity_on_valid(rng):
    d = rng.uniform(0, 60, (20, 30))
    d[rng.random(d.shape) < 0.3] = INV
    out = wls_filter(d, rng.integers(0, 256, d.shape, dtype=np.uint8), WlsParams(lam=0))
    ok = np.isfinite(d)
    np.testing.assert_array_equal(out[ok], d[ok])
    assert np.isfinite(out).all()


def test_constant_map_fixed_point(rng):
    d = np.full((17, 23), 13.37)
    guide = rng.integers(0, 256, d.shape, dtype=np.uint8)
    np.testing.assert_array_equal(wls_filter(d, guide), d)
    d[3:6, 4:9] = INV
    np.testing.assert_array_equal(wls_filter(d, guide), np.full(d.shape, 13.37))


def test_three_pixel_oracle():
    d = np.array([[0.0, INV, 2.0]])
    guide = np.full((1, 3), 100, dtype=np.uint8)
    lam = 50.0
    out = wls_filter(d, guide, WlsParams(lam=lam, num_iterations=1))
    expect = line_solve_oracle([0, 0, 2], [1, 0, 1], [1.0, 1.0], lam)
    np.testing.assert_allclose(out[0], expect, rtol=1e-12)
    assert 0 < out[0, 1] < 2
    assert 0 < out[0, 0] < 1 < out[0, 2] < 2


def test_rows_match_dense_solver(rng):
    # one round on a single row is exactly the dense line solve
    f = rng.uniform(0, 40, 12)
    m = (rng.random(12) > 0.3).astype(float)
    m[0] = 1
    guide = rng.integers(0, 256, (1, 12), dtype=np.uint8)
    wh, _ = edge_weights(guide, 8.0)
    out = wls_filter(np.where(m > 0, f, INV)[None], guide, WlsParams(lam=300.0, sigma_color=8.0, num_iterations=1))
    np.testing.assert_allclose(out[0], line_solve_oracle(f, m, wh[0], 300.0), rtol=1e-10)


def test_schedule_sums_to_lambda():
    for t in (1, 2, 3, 5):
        s = lambda_schedule(8000.0, t)
        assert s.sum() == pytest.approx(8000.0, rel=1e-14)
        assert np.all(np.diff(s) < 0)


def test_large_lambda_uniform_guide_tends_to_mean(rng):
    d = rng.uniform(10, 20, (12, 12))
    d[rng.random(d.shape) < 0.4] = INV
    out = wls_filter(d, np.full(d.shape, 50, dtype=np.uint8), WlsParams(lam=1e6))
    mean = d[np.isfinite(d)].mean()
    assert np.max(np.abs(out - mean)) <= 0.01 * mean


def test_edge_preservation():
    h, w = 32, 64
    d = np.where(np.arange(w) < 32, 10.0, 30.0) * np.ones((h, 1))
    guide = np.where(np.arange(w) < 32, 40, 200).astype(np.uint8) * np.ones((h, 1), dtype=np.uint8)
    out = wls_filter(d, guide, WlsParams(lam=8000, sigma_color=8.0))
    assert np.all(out[:, 32] - out[:, 31] >= 0.8 * 20.0)


def test_total_variation_decreases(rng):
    d = 20 + rng.normal(0, 0.5, (30, 40))
    guide = np.full(d.shape, 128, dtype=np.uint8)

    def tv(x):
        return np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum()

    assert tv(wls_filter(d, guide)) < tv(d)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 12),
    st.integers(1, 12),
    st.integers(0, 2**32 - 1),
    st.floats(0.5, 1e5),
    st.floats(0.5, 20),
)
def test_output_within_input_range(h, w, seed, lam, sigma):
    r = np.random.default_rng(seed)
    d = r.uniform(0, 64, (h, w))
    d[r.random((h, w)) < 0.5] = INV
    d.flat[0] = 5.0
    guide = r.integers(0, 256, (h, w), dtype=np.uint8)
    out = wls_filter(d, guide, WlsParams(lam=lam, sigma_color=sigma))
    lo, hi = d[np.isfinite(d)].min(), d[np.isfinite(d)].max()
    tol = 1e-9 * max(1.0, hi)
    assert np.isfinite(out).all()
    assert out.min() >= lo - tol and out.max() <= hi + tol


def test_errors():
    with pytest.raises(DimensionError):
        wls_filter(np.zeros((3, 3)), np.zeros((3, 4), dtype=np.uint8))
    with pytest.raises(NoDataError):
        wls_filter(np.full((3, 3), INV), np.zeros((3, 3), dtype=np.uint8))
    for bad in (dict(lam=-1), dict(sigma_color=0), dict(num_iterations=0)):
        with pytest.raises(ParameterError):
            WlsParams(**bad)


def test_fill_invalid_examples():
    np.testing.assert_array_equal(fill_invalid([[5, INV, INV]]), [[5, 5, 5]])
    np.testing.assert_array_equal(fill_invalid([[INV, 7]]), [[7, 7]])
    full = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(fill_invalid(full), full)


def test_fill_invalid_empty_rows():
    d = np.array([[INV, INV], [1.0, INV], [INV, INV], [INV, INV], [INV, 4.0]])
    out = fill_invalid(d)
    np.testing.assert_array_equal(out, [[1, 1], [1, 1], [1, 1], [4, 4], [4, 4]])
    with pytest.raises(NoDataError):
        fill_invalid(np.full((2, 2), INV))
