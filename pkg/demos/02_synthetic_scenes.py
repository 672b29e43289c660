# %% [markdown]
# # Synthetic scenes with exact ground truth
#
# Every pixel ray is intersected analytically with a plane or a cylinder,
# so the depth and disparity maps are exact and independent of the matcher.

# %%
import sys
import tempfile
from pathlib import Path

import numpy as np

from branchstereo.geometry import StereoRig
from branchstereo.synth import THICK_BRANCH_RADIUS_M, SceneSpec, render, render_distance_suite, save_scene

rig = StereoRig.from_values(700, 700, 320, 180, 0.063)

# %% A fronto-parallel plane: constant disparity, and the right view is a pure shift.
plane = render(SceneSpec("fronto_plane", rig, depth_m=rig.W / 20))
print("disparity range", plane.disparity.min(), plane.disparity.max())
print("right == shifted left:", np.array_equal(plane.right[:, :-20], plane.left[:, 20:]))

# %% A slanted plane: disparity varies across the image.
slanted = render(SceneSpec("slanted_plane", rig, depth_m=2.0, slant_deg=30))
print("slanted disparity, left and right edge:", slanted.disparity[180, 0], slanted.disparity[180, -1])

# %% A branch: a horizontal cylinder in front of a backdrop, plus its mask polygon.
(branch,) = render_distance_suite(rig, [1.5], radius_m=THICK_BRANCH_RADIUS_M)
rows = np.flatnonzero(branch.extras["branch_pixels"][:, 0])
print(f"branch covers rows {rows.min()}..{rows.max()}, nearest depth {branch.depth.min():.4f} m")
print("mask polygon", branch.branch_mask.points)

# %% Scenes can be written out for the command-line tools.
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "branch_1.5m"
save_scene(branch, out)
print("wrote", sorted(p.name for p in out.iterdir()))
