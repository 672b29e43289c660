"""Evaluation metrics: RMSE for dense maps and mAP50-95 for detections.

Detections are single-class. Boxes are ``(u_min, v_min, u_max, v_max)`` in
continuous pixel coordinates; mask polygons follow the conventions of
:mod:`branchstereo.fusion`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionError,
    DomainError,
    EmptyMaskError,
    MalformedHeaderError,
    MissingFileError,
    NoDataError,
)
from .fusion import BranchMask, rasterize_mask

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.arange(101) / 100.0


def rmse(actual, predicted, return_counts: bool = False):
    """Root mean square error over pairs where both sides are finite.

    With ``return_counts=True`` returns ``(rmse, used, skipped)``.
    """
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size == 0 or a.size != p.size:
        raise DimensionError(f"rmse needs equal non-zero lengths, got {a.size} and {p.size}")
    keep = np.isfinite(a) & np.isfinite(p)
    used = int(keep.sum())
    if used == 0:
        raise NoDataError("rmse: no pair with both values valid")
    value = math.sqrt(float(np.mean((a[keep] - p[keep]) ** 2)))
    if return_counts:
        return value, used, int(a.size - used)
    return value


def _check_box(box) -> tuple[float, float, float, float]:
    if len(box) != 4:
        raise DomainError(f"box must have 4 values, got {len(box)}")
    u0, v0, u1, v1 = (float(x) for x in box)
    if not all(math.isfinite(x) for x in (u0, v0, u1, v1)):
        raise DomainError("box has non-finite coordinates")
    if not (u0 < u1 and v0 < v1):
        raise DomainError(f"box {box} needs u_min < u_max and v_min < v_max")
    return u0, v0, u1, v1


def iou_box(a, b) -> float:
    au0, av0, au1, av1 = _check_box(a)
    bu0, bv0, bu1, bv1 = _check_box(b)
    iw = min(au1, bu1) - max(au0, bu0)
    ih = min(av1, bv1) - max(av0, bv0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (au1 - au0) * (av1 - av0) + (bu1 - bu0) * (bv1 - bv0) - inter
    return inter / union


def _pixels(polygon, width, height) -> np.ndarray:
    mask = polygon if isinstance(polygon, BranchMask) else BranchMask("mask", polygon)
    try:
        return rasterize_mask(mask, width, height)
    except EmptyMaskError:
        return np.zeros((height, width), dtype=bool)


def _iou_pixels(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def iou_mask(a, b, width: int, height: int) -> float:
    """Pixel IoU of two polygons rasterized on a ``width`` x ``height`` grid.

    A polygon that covers no pixel counts as the empty set; two empty sets
    give 0.
    """
    return _iou_pixels(_pixels(a, width, height), _pixels(b, width, height))


@dataclass(frozen=True)
class Detection:
    """One prediction or ground-truth record.

    Ground truths ignore ``confidence``. ``image`` groups records so that
    predictions only match ground truths of the same image.
    """

    box: tuple
    confidence: float = 1.0
    label: str = "branch"
    polygon: tuple | None = None
    image: str = ""

    def __post_init__(self):
        object.__setattr__(self, "box", _check_box(self.box))
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.polygon is not None:
            poly = BranchMask(self.label, self.polygon).points
            object.__setattr__(self, "polygon", poly)

    def to_dict(self, with_confidence: bool = True) -> dict:
        out = {"label": self.label, "box": list(self.box)}
        if with_confidence:
            out["confidence"] = self.confidence
        if self.polygon is not None:
            out["polygon"] = [list(p) for p in self.polygon]
        if self.image:
            out["image"] = self.image
        return out

    @classmethod
    def from_dict(cls, d: dict, require_confidence: bool = True) -> Detection:
        if require_confidence and "confidence" not in d:
            raise KeyError("confidence")
        return cls(
            box=tuple(d["box"]),
            confidence=float(d.get("confidence", 1.0)),
            label=str(d.get("label", "branch")),
            polygon=d.get("polygon"),
            image=str(d.get("image", "")),
        )


@dataclass(frozen=True)
class EvalReport:
    mode: str
    thresholds: tuple
    ap: tuple
    map_50_95: float
    num_predictions: int
    num_truths: int

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": len(self.thresholds),
            "ap": {f"{t:.2f}": a for t, a in zip(self.thresholds, self.ap)},
            "map_50_95": self.map_50_95,
            "num_predictions": self.num_predictions,
            "num_truths": self.num_truths,
        }

    def table(self) -> str:
        lines = [f"{'IoU':>6}  {'AP':>8}", "-" * 16]
        lines += [f"{t:>6.2f}  {a:>8.4f}" for t, a in zip(self.thresholds, self.ap)]
        lines += ["-" * 16, f"{'mean':>6}  {self.map_50_95:>8.4f}"]
        return "\n".join(lines)


def interpolated_ap(tp_flags, num_truths: int) -> float:
    """101-point interpolated average precision of a ranked TP/FP sequence."""
    if num_truths < 1:
        raise NoDataError("average precision is undefined without ground truths")
    tp = np.asarray(tp_flags, dtype=bool)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / num_truths
    precision = ctp / np.arange(1, tp.size + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    hit = idx < tp.size
    return float(np.where(hit, envelope[np.minimum(idx, tp.size - 1)], 0.0).sum() / 101.0)


def _iou_matrix(preds, truths, mode, width, height) -> np.ndarray:
    out = np.zeros((len(preds), len(truths)))
    if mode == "box":
        for i, p in enumerate(preds):
            for j, g in enumerate(truths):
                if p.image == g.image:
                    out[i, j] = iou_box(p.box, g.box)
        return out
    records = list(preds) + list(truths)
    if any(r.polygon is None for r in records):
        raise DomainError("mask mode needs a polygon on every record")
    if width is None or height is None:
        # canvas large enough for every vertex
        pts = np.concatenate([np.asarray(r.polygon) for r in records])
        width = max(1, int(np.ceil(pts[:, 0].max())) + 1)
        height = max(1, int(np.ceil(pts[:, 1].max())) + 1)
    raster = [_pixels(r.polygon, width, height) for r in records]
    pr, gr = raster[: len(preds)], raster[len(preds) :]
    for i, p in enumerate(preds):
        for j, g in enumerate(truths):
            if p.image == g.image:
                out[i, j] = _iou_pixels(pr[i], gr[j])
    return out


def _greedy_tp(order, ious: np.ndarray, threshold: float) -> np.ndarray:
    taken = np.zeros(ious.shape[1], dtype=bool)
    flags = np.zeros(len(order), dtype=bool)
    for rank, i in enumerate(order):
        if taken.all():
            break
        cand = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(cand))
        if cand[j] >= threshold:
            taken[j] = True
            flags[rank] = True
    return flags


def map_50_95(preds, truths, mode: str = "box", width=None, height=None) -> EvalReport:
    """Mean AP over IoU thresholds 0.50, 0.55, ..., 0.95.

    Predictions are ranked by descending confidence with ties kept in input
    order; each one claims the unmatched ground truth of highest IoU if that
    IoU reaches the threshold.
    """
    if mode not in ("box", "mask"):
        raise DomainError(f"mode must be 'box' or 'mask', got {mode!r}")
    preds, truths = list(preds), list(truths)
    if not truths:
        raise NoDataError("mAP is undefined without ground truths")
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    ious = _iou_matrix(preds, truths, mode, width, height)
    aps = tuple(interpolated_ap(_greedy_tp(order, ious, t), len(truths)) for t in IOU_THRESHOLDS)
    return EvalReport(mode, IOU_THRESHOLDS, aps, float(np.mean(aps)), len(preds), len(truths))


def load_detections(path, require_confidence: bool = True) -> list[Detection]:
    """Read a JSON list of detection records."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"detection file not found: {path}")
    try:
        data = json.loads(path.read_text())
        if not isinstance(data, list):
            raise TypeError("top level must be a list")
        return [Detection.from_dict(d, require_confidence) for d in data]
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise MalformedHeaderError(f"{path}: not a valid detection file ({exc})") from exc


def save_detections(path, detections, with_confidence: bool = True) -> None:
    payload = [d.to_dict(with_confidence) for d in detections]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
