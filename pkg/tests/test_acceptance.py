"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the report lines inline.
Timed criteria warm the JIT-compiled kernels first, so timings reflect
compiled code rather than first-call compilation.
"""

import json
import time

import numpy as np
import pytest

from branchstereo.cli import main as cli_main
from branchstereo.fusion import PipelineParams, estimate_distance, fuse_masks, rasterize_mask, run_stereo
from branchstereo.geometry import Point3D, StereoRig, project, triangulate
from branchstereo.matching import DIRECTIONS_8, SgbmParams, aggregate_path, sgbm
from branchstereo.metrics import Detection, map_50_95, rmse
from branchstereo.refine import WlsParams, wls_filter
from branchstereo.synth import THICK_BRANCH_RADIUS_M, THIN_BRANCH_RADIUS_M, SceneSpec, render, render_distance_suite, save_scene

from test_matching import path_oracle

RIG = StereoRig.from_values(700, 700, 320, 180, 0.063)
DISTANCES = (1.0, 1.5, 2.0)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")

    return emit


@pytest.fixture(scope="module")
def warm():
    """Compile every numba kernel once on a tiny scene."""
    gt = render(SceneSpec("fronto_plane", StereoRig.from_values(100, 100, 16, 16, 0.1), 32, 32, depth_m=1.0))
    run_stereo(gt.left, gt.right, gt.spec.rig, PipelineParams(sgbm=SgbmParams(num_disparities=16)))


@pytest.fixture(scope="module")
def suite():
    return render_distance_suite(RIG, DISTANCES, radius_m=THICK_BRANCH_RADIUS_M)


@pytest.fixture(scope="module")
def suite_runs(warm, suite):
    runs = []
    for gt in suite:
        t0 = time.perf_counter()
        result = run_stereo(gt.left, gt.right, RIG)
        (est,) = fuse_masks(result.depth, [gt.branch_mask])
        runs.append((est, result, (time.perf_counter() - t0) * 1e3))
    return runs


def test_criterion_1_geometry_round_trip(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        z = rng.uniform(0.5, 10.0)
        x, y = rng.uniform(-1, 1, 2) * z
        p = triangulate(RIG, *project(RIG, Point3D(x, y, z)))
        worst = max(worst, np.max(np.abs(np.subtract(p, (x, y, z)))) / np.linalg.norm((x, y, z)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 1.0
    report(1, "geometry round-trip", ok, f"max rel err {worst:.2e}, {elapsed * 1e3:.0f} ms")
    assert ok


def test_criterion_2_path_oracle(report):
    rng = np.random.default_rng(2)
    aggregate_path(np.zeros((2, 2, 2), np.uint8), (0, 1), 1, 2)  # compile
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(50):
        cost = rng.integers(0, 25, (8, 8, 8)).astype(np.uint8)
        p1 = int(rng.integers(1, 12))
        p2 = int(rng.integers(p1 + 1, 64))
        for direction in DIRECTIONS_8:
            got = aggregate_path(cost, direction, p1, p2)
            mismatches += int(not np.array_equal(got, path_oracle(cost, direction, p1, p2)))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 5.0
    report(2, "path aggregation oracle", ok, f"{mismatches} mismatching passes of 400, {elapsed:.2f} s")
    assert ok


def test_criterion_3_plane_accuracy(report, warm):
    rig = StereoRig.from_values(700, 700, 128, 64, 0.063)
    gt = render(SceneSpec("fronto_plane", rig, 256, 128, depth_m=rig.W / 16.0))
    assert np.allclose(gt.disparity, 16.0)
    t0 = time.perf_counter()
    disp = sgbm(gt.left, gt.right, SgbmParams())
    elapsed = time.perf_counter() - t0
    # interior: columns visible in the right view, away from the image borders
    inner = (slice(4, -4), slice(16 + 4, -4))
    err = disp[inner] - gt.disparity[inner]
    within = float(np.mean(np.abs(err) <= 1.0))
    value = rmse(gt.disparity[inner], disp[inner])
    ok = within >= 0.99 and value <= 0.5 and elapsed < 1.0
    report(3, "plane accuracy", ok, f"{within:.2%} within 1 px, RMSE {value:.3f} px, {elapsed * 1e3:.0f} ms")
    assert ok


def test_criterion_4_distance_suite(report, suite_runs):
    found = [est.distance_m for est, _, _ in suite_runs]
    times = [ms for _, _, ms in suite_runs]
    rel = [abs(f - d) / d for f, d in zip(found, DISTANCES)]
    increasing = all(a < b for a, b in zip(found, found[1:]))
    ok = max(rel) <= 0.05 and increasing and max(times) < 1000
    detail = ", ".join(f"{d} m -> {f:.3f} m ({ms:.0f} ms)" for d, f, ms in zip(DISTANCES, found, times))
    report(4, "distance suite, 30 mm branch", ok, detail)
    assert ok


def test_criterion_5_wls_identities(report):
    rng = np.random.default_rng(5)
    d = rng.uniform(0, 60, (40, 50))
    d[rng.random(d.shape) < 0.25] = -np.inf
    guide = rng.integers(0, 256, d.shape, dtype=np.uint8)
    valid = np.isfinite(d)
    identity = np.array_equal(wls_filter(d, guide, WlsParams(lam=0))[valid], d[valid])
    const = np.full(d.shape, 23.5)
    fixed = np.array_equal(wls_filter(const, guide), const)
    noisy = 23.5 + rng.normal(0, 0.5, d.shape)

    def tv(x):
        return np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum()

    before, after = tv(noisy), tv(wls_filter(noisy, np.full(d.shape, 128, np.uint8)))
    ok = identity and fixed and after < before
    report(5, "WLS identities", ok, f"lambda=0 identity {identity}, constant fixed {fixed}, TV {before:.0f} -> {after:.1f}")
    assert ok


def test_criterion_6_metric_oracles(report):
    rmse_ok = rmse([1, 2, 3], [1, 2, 3]) == 0.0 and abs(rmse([0, 0], [3, 4]) - np.sqrt(12.5)) <= 1e-12
    single = map_50_95([Detection((0, 0, 1, 1), 0.9)], [Detection((0, 0, 1.62, 1))]).map_50_95
    gts = [Detection((0, 0, 10, 10)), Detection((30, 5, 45, 25)), Detection((50, 50, 70, 55))]
    perfect = map_50_95([Detection(g.box, 0.5) for g in gts], gts).map_50_95
    ok = rmse_ok and single == 0.3 and perfect == 1.0
    report(6, "metric oracles", ok, f"RMSE fixtures {rmse_ok}, single-detection mAP {single}, perfect mAP {perfect}")
    assert ok


def test_criterion_7_determinism(report, warm, suite, tmp_path):
    scene = save_scene(suite[1], tmp_path / "scene")
    args = [str(scene / n) for n in ("left.pgm", "right.pgm", "calib.json", "masks.json")]
    outputs = []
    for run, threads in enumerate([1, 1, 1, 1, 1, 4, 8]):
        out = tmp_path / f"d{run}.json"
        assert cli_main(["fuse", *args, "-o", str(out), "--threads", str(threads)]) == 0
        outputs.append(out.read_bytes())
    ok = len(set(outputs)) == 1
    value = json.loads(outputs[0])[0]["distance_m"]
    report(7, "determinism", ok, f"{len(set(outputs))} distinct output(s) over 5 runs + threads 4, 8 (distance {value!r})")
    assert ok


def test_criterion_8_outlier_robustness(report, suite, suite_runs):
    rng = np.random.default_rng(8)
    shifts, mean_shifts = [], []
    for gt, (est, result, _) in zip(suite, suite_runs):
        depth = result.depth.copy()
        idx = np.flatnonzero(rasterize_mask(gt.branch_mask, gt.spec.width, gt.spec.height))
        bad = rng.choice(idx, int(0.2 * idx.size), replace=False)
        # outliers at least 1 m from the estimate, on either side, kept physical
        offset = rng.uniform(1.0, 3.0, bad.size)
        far = est.distance_m + offset
        near = est.distance_m - offset
        depth.flat[bad] = np.where((rng.random(bad.size) < 0.5) & (near > 0.05), near, far)
        shifts.append(abs(estimate_distance(gt.branch_mask, depth).distance_m - est.distance_m))
        mean_shifts.append(abs(depth.flat[idx].mean() - result.depth.flat[idx].mean()))
    ok = max(shifts) < 0.05
    detail = f"densest-bin shift {max(shifts):.4f} m, naive-mean shift {max(mean_shifts):.3f} m"
    report(8, "outlier robustness", ok, detail)
    assert ok
    # the naive mean would not survive the same corruption
    assert min(mean_shifts) >= 0.05


@pytest.mark.xfail(strict=True, reason="a 10 mm branch spans only 3.5-7 rows at 640x360 and is lost to the backdrop")
def test_thin_branch_at_desk_resolution(warm):
    suite = render_distance_suite(RIG, DISTANCES, radius_m=THIN_BRANCH_RADIUS_M)
    for gt, dist in zip(suite, DISTANCES):
        result = run_stereo(gt.left, gt.right, RIG)
        (est,) = fuse_masks(result.depth, [gt.branch_mask])
        assert abs(est.distance_m - dist) <= 0.05 * dist
