# %% [markdown]
# # Edge-preserving refinement
#
# The weighted least squares filter fills invalid pixels and smooths the
# disparity map. Smoothing is weak across strong edges of the left image.

# %%
import numpy as np

from branchstereo.refine import WlsParams, fill_invalid, wls_filter

rng = np.random.default_rng(0)
h, w = 40, 80
guide = np.where(np.arange(w) < 40, 60, 190).astype(np.uint8) * np.ones((h, 1), np.uint8)
truth = np.where(np.arange(w) < 40, 12.0, 30.0) * np.ones((h, 1))
noisy = truth + rng.normal(0, 0.7, truth.shape)
noisy[rng.random(truth.shape) < 0.3] = -np.inf

out = wls_filter(noisy, guide)
valid = np.isfinite(noisy)
print("input  valid", f"{valid.mean():.0%}", " error on valid", np.abs(noisy[valid] - truth[valid]).mean().round(3))
print("output valid", f"{np.isfinite(out).mean():.0%}", " error everywhere", np.abs(out - truth).mean().round(3))
print("step across the edge:", (out[:, 40] - out[:, 39]).mean().round(2), "(true 18)")

# %% With lambda = 0 the filter only fills holes, nearest valid pixel first.
filled = wls_filter(noisy, guide, WlsParams(lam=0))
print("lambda=0 keeps valid pixels:", np.array_equal(filled[valid], noisy[valid]))
print(fill_invalid([[5.0, -np.inf, -np.inf, 2.0]]))
