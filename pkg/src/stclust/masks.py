"""Eigenvector to per-frame masks, plus evaluation metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, ZeroBaselineError
from .flow_io import write_pgm


@dataclass(frozen=True)
class SegmentationMasks:
    soft: np.ndarray  # (m, h, w) in [0, 1]
    binary: np.ndarray  # (m, h, w) in {0, 1}
    tau: float
    constant: bool  # the label vector was constant; soft forced to 0.5


@dataclass(frozen=True)
class MetricsReport:
    jmean: float
    mae: float
    frame_iou: np.ndarray
    frame_mae: np.ndarray
    empty_union: np.ndarray  # frames where pred and gt are both empty

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["frame", "iou", "mae", "empty_union"])
            for i, (j, e, flag) in enumerate(
                zip(self.frame_iou, self.frame_mae, self.empty_union)
            ):
                writer.writerow([i, repr(float(j)), repr(float(e)), int(flag)])
            writer.writerow(["mean", repr(self.jmean), repr(self.mae), ""])


def to_masks(x: np.ndarray, m: int, h: int, w: int, tau: float = 0.5) -> SegmentationMasks:
    """Clamp negatives, min-max normalize over the video, binarize at tau.

    Expects a sign-fixed label vector of length m*h*w laid out frame-major,
    row-major. A constant vector cannot be normalized; its soft mask is set
    to 0.5 and flagged.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != m * h * w:
        raise DimensionMismatchError(f"{x.size} labels for an {m}x{h}x{w} video")
    vol = np.clip(x, 0.0, None).reshape(m, h, w)
    lo, hi = float(vol.min()), float(vol.max())
    if hi - lo <= 0.0:
        soft = np.full((m, h, w), 0.5)
        constant = True
    else:
        soft = (vol - lo) / (hi - lo)
        constant = False
    binary = (soft >= tau).astype(np.uint8)
    return SegmentationMasks(soft=soft, binary=binary, tau=float(tau), constant=constant)


def _check_same_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")


def per_frame_iou(pred: np.ndarray, gt: np.ndarray):
    """Per-frame IoU; frames where prediction and truth are both empty
    count as 1 and are flagged. Returns (iou array, empty-union flags)."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    _check_same_dims(pred, gt)
    inter = (pred & gt).sum(axis=(1, 2)).astype(np.float64)
    union = (pred | gt).sum(axis=(1, 2)).astype(np.float64)
    empty = union == 0
    iou = np.where(empty, 1.0, inter / np.where(empty, 1.0, union))
    return iou, empty


def jmean(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean intersection-over-union across frames."""
    iou, _ = per_frame_iou(pred, gt)
    return float(iou.mean())


def mae(pred_soft: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute error over all pixels and frames."""
    pred_soft = np.asarray(pred_soft, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_same_dims(pred_soft, gt)
    return float(np.abs(pred_soft - gt).mean())


def relative_change(v1: float, v2: float) -> float:
    """Percentage change of v2 with respect to baseline v1."""
    if v1 == 0:
        raise ZeroBaselineError("relative change undefined for a zero baseline")
    return 100.0 * (v2 - v1) / v1


def compute_metrics(masks: SegmentationMasks, gt: np.ndarray) -> MetricsReport:
    gt = np.asarray(gt)
    iou, empty = per_frame_iou(masks.binary, gt)
    frame_mae = np.abs(masks.soft - gt.astype(np.float64)).mean(axis=(1, 2))
    return MetricsReport(
        jmean=float(iou.mean()),
        mae=float(frame_mae.mean()),
        frame_iou=iou,
        frame_mae=frame_mae,
        empty_union=empty,
    )


def write_masks(masks: SegmentationMasks, out_dir) -> None:
    """Emit soft masks as 8-bit grayscale PGM and binary masks as 0/255 PGM."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(masks.soft.shape[0]):
        write_pgm(masks.soft[i], d / f"soft_{i:04d}.pgm")
        write_pgm(masks.binary[i].astype(np.float64), d / f"mask_{i:04d}.pgm")
