# %% [markdown]
# # Evaluation metrics
#
# RMSE compares dense maps and skips invalid pairs. mAP50-95 averages the
# 101-point interpolated average precision over IoU thresholds 0.50 to 0.95.

# %%
import numpy as np

from branchstereo.metrics import Detection, iou_box, iou_mask, map_50_95, rmse

print(rmse([0, 0], [3, 4]))
print(rmse([1.0, 2.0, -np.inf], [1.5, 2.0, 3.0], return_counts=True))

# %% One prediction overlapping its ground truth at IoU ~0.62: a hit up to the 0.60 threshold.
gt = [Detection((0, 0, 1.62, 1))]
pred = [Detection((0, 0, 1, 1), confidence=0.9)]
print("IoU", round(iou_box(pred[0].box, gt[0].box), 3))
report = map_50_95(pred, gt)
print(report.table())

# %% Mask IoU rasterizes both polygons on the image grid.
square = [(0, 0), (4, 0), (4, 4), (0, 4)]
print("square vs left half:", iou_mask(square, [(0, 0), (2, 0), (2, 4), (0, 4)], 10, 10))

# %% A small ranked list: two hits and a false alarm in between.
truths = [Detection((0, 0, 10, 10)), Detection((20, 0, 30, 10))]
preds = [
    Detection((0, 0, 10, 10), 0.9),
    Detection((50, 50, 60, 60), 0.8),
    Detection((21, 0, 31, 10), 0.7),
]
print(map_50_95(preds, truths).to_dict())
