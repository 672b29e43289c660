"""Command-line entry point: ``branchstereo {match,fuse,synth,eval,bench}``.

Exit codes: 0 success, 2 bad arguments, 3 file errors, 4 pipeline errors.
Stage timings go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .exceptions import ParseError, PipelineError, StereoError
from .fusion import PipelineParams, fuse_masks, load_masks, run_stereo, save_estimates
from .geometry import StereoRig, load_calibration
from .images import depth_preview, load_float_image, load_image, save_float_image, save_pgm
from .matching import SgbmParams
from .metrics import load_detections, map_50_95, rmse
from .refine import WlsParams
from .synth import KINDS, SceneSpec, render, render_distance_suite, save_scene

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PIPELINE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _pipeline_options(p: argparse.ArgumentParser, fusion: bool = False) -> None:
    g = p.add_argument_group("pipeline parameters")
    g.add_argument("--num-disparities", type=int, default=64, help="disparity search range D")
    g.add_argument("--p1", type=int, default=8, help="SGM small-jump penalty P1")
    g.add_argument("--p2", type=int, default=32, help="SGM large-jump penalty P2")
    g.add_argument("--paths", type=int, choices=(4, 8), default=8, help="aggregation paths")
    g.add_argument("--uniqueness", type=float, default=10, help="uniqueness ratio in percent")
    g.add_argument("--lr-max-diff", type=float, default=1.0, help="left-right tolerance, <0 disables")
    g.add_argument("--speckle-window", type=int, default=100, help="speckle region size, 0 disables")
    g.add_argument("--speckle-range", type=float, default=1.0, help="speckle disparity range")
    g.add_argument("--smooth-sigma", type=float, default=1.0, help="input blur sigma in px")
    g.add_argument("--lambda", dest="lam", type=float, default=8000.0, help="WLS smoothness lambda")
    g.add_argument("--sigma-color", type=float, default=1.5, help="WLS edge sensitivity")
    g.add_argument("--wls-iterations", type=int, default=3, help="WLS sweep rounds")
    g.add_argument("--no-wls", action="store_true", help="skip the WLS refinement stage")
    g.add_argument("--bin-width", type=float, default=0.05, help="fusion histogram bin width in m")
    g.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")


def _threads(n: int) -> int:
    if n < 0:
        raise UsageError("--threads must be >= 0")
    return n or (os.cpu_count() or 1)


def _params(a) -> PipelineParams:
    try:
        sgbm = SgbmParams(
            num_disparities=a.num_disparities,
            p1=a.p1,
            p2=a.p2,
            num_paths=a.paths,
            uniqueness_ratio=a.uniqueness,
            lr_max_diff=a.lr_max_diff,
            speckle_window=a.speckle_window,
            speckle_range=a.speckle_range,
        )
        wls = None if a.no_wls else WlsParams(a.lam, a.sigma_color, a.wls_iterations)
        if not (a.smooth_sigma >= 0 and a.bin_width > 0):
            raise UsageError("--smooth-sigma must be >= 0 and --bin-width > 0")
        return PipelineParams(a.smooth_sigma, sgbm, wls, a.bin_width, _threads(a.threads))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _require_files(*paths) -> None:
    for p in paths:
        if not Path(p).is_file():
            raise FileNotFoundError(f"file not found: {p}")


def _report_timings(timings: dict) -> None:
    for stage, ms in timings.items():
        print(f"timing {stage}: {ms:.1f} ms", file=sys.stderr)
    print(f"timing total: {sum(timings.values()):.1f} ms", file=sys.stderr)


def _stereo(a):
    _require_files(a.left, a.right, a.calib)
    params = _params(a)
    rig = load_calibration(a.calib)
    left, right = load_image(a.left), load_image(a.right)
    return rig, params, run_stereo(left, right, rig, params)


def cmd_match(a) -> int:
    _, _, result = _stereo(a)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    save_float_image(result.disparity, out / "disparity.pfm")
    save_float_image(result.depth, out / "depth.pfm")
    save_pgm(depth_preview(result.depth, a.z_min, a.z_max), out / "preview.pgm")
    _report_timings(result.timings_ms)
    return EXIT_OK


def cmd_fuse(a) -> int:
    _require_files(a.left, a.right, a.calib, a.masks)
    _, masks = load_masks(a.masks)
    if masks:
        rig, params, result = _stereo(a)
        timings = dict(result.timings_ms)
        t0 = time.perf_counter()
        estimates = fuse_masks(result.depth, masks, params.bin_width_m)
        timings["fusion"] = (time.perf_counter() - t0) * 1e3
    else:
        _params(a)
        load_calibration(a.calib)
        estimates, timings = [], {}
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_estimates(out, estimates)
    if timings:
        _report_timings(timings)
    return EXIT_OK


def _rig_from_args(a) -> StereoRig:
    if a.calib:
        return load_calibration(a.calib)
    try:
        return StereoRig.from_values(a.fx, a.fy, a.ox, a.oy, a.baseline)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_synth(a) -> int:
    rig = _rig_from_args(a)
    common = dict(
        width=a.width,
        height=a.height,
        background_depth_m=a.background_depth,
        radius_m=a.radius,
    )
    try:
        if a.distances:
            scenes = render_distance_suite(
                rig,
                a.distances,
                seed=a.seed,
                texture_range=tuple(a.texture_range),
                branch_texture_range=tuple(a.branch_texture_range),
                **common,
            )
            for i, gt in enumerate(scenes):
                save_scene(gt, Path(a.out) / f"scene_{i:02d}")
        else:
            spec = SceneSpec(
                a.kind,
                rig,
                depth_m=a.depth,
                axis_height_m=a.axis_height,
                slant_deg=a.slant,
                texture_seed=a.seed,
                texture_range=tuple(a.texture_range),
                branch_texture_range=tuple(a.branch_texture_range),
                **common,
            )
            save_scene(render(spec), a.out)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(a.out)
    return EXIT_OK


def cmd_eval(a) -> int:
    _require_files(a.predictions, a.truths)
    if a.mode == "rmse":
        est = load_float_image(a.predictions)
        ref = load_float_image(a.truths)
        if est.shape != ref.shape:
            raise PipelineError("eval", ValueError(f"shapes {est.shape} and {ref.shape} differ"))
        try:
            value, used, skipped = rmse(ref, est, return_counts=True)
        except StereoError as exc:
            raise PipelineError("eval", exc) from exc
        report = {"mode": "rmse", "rmse": value, "used": used, "skipped": skipped}
        table = f"{'rmse':>8}  {value:>10.6f}\n{'used':>8}  {used:>10d}\n{'skipped':>8}  {skipped:>10d}"
    else:
        preds = load_detections(a.predictions)
        truths = load_detections(a.truths, require_confidence=False)
        try:
            result = map_50_95(preds, truths, a.mode, a.width, a.height)
        except StereoError as exc:
            raise PipelineError("eval", exc) from exc
        report, table = result.to_dict(), result.table()
    text = json.dumps(report, indent=2)
    print(text)
    print(table)
    if a.out:
        Path(a.out).write_text(text + "\n")
    return EXIT_OK


def cmd_bench(a) -> int:
    params = _params(a)
    rig = StereoRig.from_values(700.0, 700.0, a.width / 2, a.height / 2, 0.063)
    gt = render_distance_suite(rig, [a.depth], a.width, a.height, radius_m=a.radius)[0]
    masks = [gt.branch_mask]
    # first run pays for JIT compilation and is not reported
    run_stereo(gt.left, gt.right, rig, params)
    totals = []
    for _ in range(a.repeat):
        t0 = time.perf_counter()
        result = run_stereo(gt.left, gt.right, rig, params)
        est = fuse_masks(result.depth, masks, params.bin_width_m)
        totals.append((time.perf_counter() - t0) * 1e3)
    _report_timings(result.timings_ms)
    med = statistics.median(totals)
    summary = {
        "width": a.width,
        "height": a.height,
        "num_disparities": params.sgbm.num_disparities,
        "num_paths": params.sgbm.num_paths,
        "threads": params.threads,
        "repeat": a.repeat,
        "median_ms": med,
        "min_ms": min(totals),
        "under_1s": med < 1000.0,
        "distance_m": est[0].distance_m,
        "true_distance_m": a.depth,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="branchstereo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", formatter_class=fmt, help="disparity and depth maps from a stereo pair")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("calib", help="calibration JSON")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.add_argument("--z-min", type=float, default=0.5, help="preview depth mapped to 0")
    p.add_argument("--z-max", type=float, default=5.0, help="preview depth mapped to 255")
    _pipeline_options(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("fuse", formatter_class=fmt, help="one distance per segmentation mask")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("calib", help="calibration JSON")
    p.add_argument("masks", help="mask JSON")
    p.add_argument("-o", "--out", default="distances.json", help="output JSON file")
    _pipeline_options(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("synth", formatter_class=fmt, help="render a synthetic scene with ground truth")
    p.add_argument("--kind", choices=KINDS, default="fronto_plane")
    p.add_argument("--depth", type=float, default=2.0, help="plane or cylinder-axis depth in m")
    p.add_argument("--distances", type=float, nargs="+", help="render a cylinder suite instead")
    p.add_argument("--background-depth", type=float, default=4.0, help="backdrop depth in m")
    p.add_argument("--radius", type=float, default=0.005, help="cylinder radius in m")
    p.add_argument("--axis-height", type=float, default=0.0, help="cylinder axis height in m")
    p.add_argument("--slant", type=float, default=0.0, help="plane slant in degrees")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture-range", type=int, nargs=2, default=[32, 224], metavar=("LO", "HI"))
    p.add_argument(
        "--branch-texture-range", type=int, nargs=2, default=[32, 224], metavar=("LO", "HI")
    )
    p.add_argument("--calib", help="calibration JSON; overrides the intrinsics flags")
    p.add_argument("--fx", type=float, default=700.0)
    p.add_argument("--fy", type=float, default=700.0)
    p.add_argument("--ox", type=float, default=320.0)
    p.add_argument("--oy", type=float, default=180.0)
    p.add_argument("--baseline", type=float, default=0.063, help="baseline in m")
    p.add_argument("-o", "--out", default="scene", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", formatter_class=fmt, help="mAP50-95 of detections or RMSE of maps")
    p.add_argument("predictions", help="prediction JSON, or estimated PFM for rmse")
    p.add_argument("truths", help="ground-truth JSON, or reference PFM for rmse")
    p.add_argument("--mode", choices=("box", "mask", "rmse"), default="box")
    p.add_argument("--width", type=int, help="mask canvas width (mask mode)")
    p.add_argument("--height", type=int, help="mask canvas height (mask mode)")
    p.add_argument("-o", "--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", formatter_class=fmt, help="time the pipeline on a synthetic scene")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--depth", type=float, default=1.5, help="cylinder distance in m")
    p.add_argument("--radius", type=float, default=0.015, help="cylinder radius in m")
    p.add_argument("--repeat", type=int, default=3)
    _pipeline_options(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"branchstereo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"branchstereo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PipelineError as exc:
        print(f"branchstereo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except StereoError as exc:
        print(f"branchstereo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
