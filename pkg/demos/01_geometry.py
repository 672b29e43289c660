# %% [markdown]
# # Stereo geometry
#
# A rectified rig shares one set of intrinsics. A point at depth z lands
# `W / z` pixels further left in the right image, with `W = b * f_x`.

# %%
from branchstereo.geometry import Point3D, StereoRig, depth_map_from_disparity, project, triangulate

rig = StereoRig.from_values(800, 800, 320, 240, 0.1)
print("W =", rig.W, "px*m")

# %%
left, right = project(rig, Point3D(0.25, 0.0, 2.0))
print("left ", left)
print("right", right)
print("disparity", left.u - right.u)

# %% Triangulation inverts the projection.
print(triangulate(rig, left, right))

# %% A row-misaligned pair is rejected beyond 1 px; zero disparity has no intersection.
for pair in [((420, 240), (380, 243)), ((100, 240), (100, 240))]:
    try:
        triangulate(rig, *pair)
    except ValueError as exc:
        print(type(exc).__name__, "-", exc)

# %% Depth maps: non-positive or missing disparities stay invalid (-inf).
print(depth_map_from_disparity(rig, [[40.0, 80.0, 0.0, float("-inf")]]))
