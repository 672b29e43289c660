# %% [markdown]
# # Distance to a branch
#
# The full chain runs on branch scenes at 1.0, 1.5 and 2.0 m: smoothing,
# semi-global matching, refinement, depth, and then the densest 5 cm depth
# bin inside the branch mask.

# %%
import time

import numpy as np

from branchstereo.fusion import PipelineParams, estimate_distance, fuse_masks, rasterize_mask, run_stereo
from branchstereo.geometry import StereoRig
from branchstereo.synth import THICK_BRANCH_RADIUS_M, render_distance_suite

rig = StereoRig.from_values(700, 700, 320, 180, 0.063)
suite = render_distance_suite(rig, [1.0, 1.5, 2.0], radius_m=THICK_BRANCH_RADIUS_M)
run_stereo(suite[0].left[:64, :64], suite[0].right[:64, :64], rig)  # compile kernels

# %%
for gt in suite:
    t0 = time.perf_counter()
    result = run_stereo(gt.left, gt.right, rig)
    (est,) = fuse_masks(result.depth, [gt.branch_mask])
    ms = (time.perf_counter() - t0) * 1e3
    stages = ", ".join(f"{k} {v:.0f}" for k, v in result.timings_ms.items())
    print(f"true {gt.spec.depth_m:.1f} m  estimate {est.distance_m:.3f} m  "
          f"bin [{est.bin_lo:.2f}, {est.bin_hi:.2f})  {ms:.0f} ms  ({stages})")

# %% [markdown]
# The densest bin ignores stray depths. Corrupting a fifth of the masked
# pixels barely moves it, while a plain mean drifts far off.

# %%
gt = suite[1]
depth = run_stereo(gt.left, gt.right, rig).depth
idx = np.flatnonzero(rasterize_mask(gt.branch_mask, 640, 360))
rng = np.random.default_rng(1)
bad = rng.choice(idx, idx.size // 5, replace=False)
corrupt = depth.copy()
corrupt.flat[bad] = rng.uniform(2.6, 4.5, bad.size)
print("densest bin:", round(estimate_distance(gt.branch_mask, depth).distance_m, 4),
      "->", round(estimate_distance(gt.branch_mask, corrupt).distance_m, 4))
print("plain mean: ", round(depth.flat[idx].mean(), 4), "->", round(corrupt.flat[idx].mean(), 4))

# %% [markdown]
# A 10 mm branch is only 3.5 to 7 pixels tall at this resolution. The
# matcher's 5x5 census window and the smoothing then blend it into the
# backdrop, and the estimate lands on the background instead.

# %%
(thin,) = render_distance_suite(rig, [1.5])
(est,) = fuse_masks(run_stereo(thin.left, thin.right, rig).depth, [thin.branch_mask])
print(f"10 mm branch at 1.5 m -> {est.distance_m:.2f} m")

# %% Without refinement the depth map keeps its holes; the estimate uses valid pixels only.
raw = run_stereo(gt.left, gt.right, rig, PipelineParams(wls=None))
print("valid inside mask without refinement:", f"{np.isfinite(raw.depth.flat[idx]).mean():.0%}")
