"""Segmentation evaluation: overlap ratios and symmetric surface distances.

All distances are in millimetres, computed from voxel spacing. Surface
voxels are foreground voxels with at least one background 6-neighbor; the
volume border counts as background.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyGroundTruth, EmptyMask, ShapeMismatch
from .types import LabelMask

TISSUE_LABELS = {"liver": 1, "tumor": 2, "vessel": 3}


@dataclass(frozen=True)
class MetricsReport:
    dice: float
    iou: float
    rvd: float | None
    asd_mm: float | None
    rmsd_mm: float | None
    hd_mm: float | None
    hd95_mm: float | None

    def as_dict(self):
        return {"dice": self.dice, "iou": self.iou, "rvd": self.rvd,
                "asd_mm": self.asd_mm, "rmsd_mm": self.rmsd_mm,
                "hd_mm": self.hd_mm, "hd95_mm": self.hd95_mm}


def _binary(m: LabelMask) -> np.ndarray:
    return m.labels.astype(bool)


def overlap_metrics(pred: LabelMask, gt: LabelMask):
    """Dice, IoU, and signed relative volume difference (|P|-|G|)/|G|."""
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    p, g = _binary(pred), _binary(gt)
    np_, ng = int(p.sum()), int(g.sum())
    inter = int((p & g).sum())
    if np_ == 0 and ng == 0:
        return 1.0, 1.0, 0.0
    if ng == 0:
        raise EmptyGroundTruth("RVD undefined with empty ground truth")
    dice = 2.0 * inter / (np_ + ng)
    iou = inter / (np_ + ng - inter)
    rvd = (np_ - ng) / ng
    return dice, iou, rvd


def extract_surface(m: LabelMask) -> np.ndarray:
    """World coordinates (mm) of foreground voxels with a background 6-neighbor."""
    fg = _binary(m)
    if not fg.any():
        return np.empty((0, 3))
    padded = np.pad(fg, 1)
    interior = (
        padded[:-2, 1:-1, 1:-1] & padded[2:, 1:-1, 1:-1] &
        padded[1:-1, :-2, 1:-1] & padded[1:-1, 2:, 1:-1] &
        padded[1:-1, 1:-1, :-2] & padded[1:-1, 1:-1, 2:]
    )
    surface = fg & ~interior
    idx = np.argwhere(surface).astype(np.float64)
    return idx * np.asarray(m.spacing)


def _percentile_linear(values: np.ndarray, q: float) -> float:
    return float(np.percentile(values, q, method="linear"))


def surface_distances(pred: LabelMask, gt: LabelMask):
    """Symmetric ASD, RMSD, HD, and HD95 over the pooled distance multiset."""
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    sp = extract_surface(pred)
    sg = extract_surface(gt)
    if len(sp) == 0 or len(sg) == 0:
        raise EmptyMask("surface distances need two non-empty masks")
    d_pg, _ = cKDTree(sg).query(sp)
    d_gp, _ = cKDTree(sp).query(sg)
    dists = np.concatenate([d_pg, d_gp])
    asd = float(dists.mean())
    rmsd = float(np.sqrt(np.mean(np.square(dists))))
    hd = float(dists.max())
    hd95 = _percentile_linear(dists, 95.0)
    return asd, rmsd, hd, hd95


def report(pred: LabelMask, gt: LabelMask) -> MetricsReport:
    """All seven metrics for one binary mask pair.

    Surface distances are None (undefined, never 0) when either mask is
    empty; RVD is None when ground truth is empty but prediction is not.
    """
    try:
        dice, iou, rvd = overlap_metrics(pred, gt)
    except EmptyGroundTruth:
        dice, iou, rvd = 0.0, 0.0, None
    try:
        asd, rmsd, hd, hd95 = surface_distances(pred, gt)
    except EmptyMask:
        asd = rmsd = hd = hd95 = None
    return MetricsReport(dice=dice, iou=iou, rvd=rvd, asd_mm=asd,
                         rmsd_mm=rmsd, hd_mm=hd, hd95_mm=hd95)


def evaluate(pred_merged: LabelMask, gt_merged: LabelMask) -> dict[str, MetricsReport]:
    """Per-tissue reports from merged {0,1,2,3} masks at native resolution."""
    if pred_merged.shape != gt_merged.shape:
        raise ShapeMismatch(f"{pred_merged.shape} vs {gt_merged.shape}")
    return {name: report(pred_merged.binary(label), gt_merged.binary(label))
            for name, label in TISSUE_LABELS.items()}
