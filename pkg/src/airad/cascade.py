"""Three-stage segmentation cascade: liver first, then liver-masked tumor
and vessel passes (parallelizable), then precedence merge and native-grid
restoration.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ModelLoadError, ShapeMismatch
from .preprocess import (
    NormalizationStats,
    PreprocessConfig,
    preprocess_volume,
    reorient_canonical,
    upsample_mask_to,
)
from .types import LabelMask, Volume
from .unet import ThresholdSegmenter, UNetSegmenter

DEFAULT_PRECEDENCE = ("vessel", "tumor", "liver")
TISSUE_TO_LABEL = {"liver": 1, "tumor": 2, "vessel": 3}


def make_segmenter(binding, threshold: float = 0.5):
    """Resolve a model binding: weight files, an analytic band, or an object."""
    if hasattr(binding, "segment"):
        return binding
    if not isinstance(binding, dict) or "kind" not in binding:
        raise ModelLoadError(f"unintelligible model binding: {binding!r}")
    kind = binding["kind"]
    if kind == "threshold":
        return ThresholdSegmenter(float(binding["lo"]), float(binding["hi"]))
    if kind == "unet":
        return UNetSegmenter.from_files(binding["weights"], binding["config"],
                                        float(binding.get("threshold", threshold)))
    raise ModelLoadError(f"unknown segmenter kind {kind!r}")


@dataclass
class CascadeConfig:
    liver_model: object
    tumor_model: object
    vessel_model: object
    threshold: float = 0.5
    label_precedence: tuple[str, str, str] = DEFAULT_PRECEDENCE
    restore_native: bool = True
    lcc_filter: bool = False
    mask_vessels: bool = True  # apply the liver mask to the vessel pass too
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    stats: NormalizationStats | None = None

    def __post_init__(self):
        if sorted(self.label_precedence) != sorted(TISSUE_TO_LABEL):
            raise ValueError("precedence must be a permutation of liver/tumor/vessel")

    @classmethod
    def from_json(cls, text: str) -> "CascadeConfig":
        doc = json.loads(text)
        pp = PreprocessConfig(**doc.get("preprocess", {}))
        stats = doc.get("stats")
        return cls(
            liver_model=doc["liver_model"],
            tumor_model=doc["tumor_model"],
            vessel_model=doc["vessel_model"],
            threshold=doc.get("threshold", 0.5),
            label_precedence=tuple(doc.get("label_precedence", DEFAULT_PRECEDENCE)),
            restore_native=doc.get("restore_native", True),
            lcc_filter=doc.get("lcc_filter", False),
            mask_vessels=doc.get("mask_vessels", True),
            preprocess=pp,
            stats=NormalizationStats(mu=stats["mu"], sigma=stats["sigma"])
            if stats else None,
        )


@dataclass
class CascadeResult:
    liver: LabelMask
    tumors: LabelMask
    vessels: LabelMask
    merged: LabelMask
    timings: dict[str, float]


def apply_liver_mask(v: Volume, liver: LabelMask) -> Volume:
    """Voxel-wise product: outside-mask voxels become exactly 0."""
    if v.shape != liver.shape:
        raise ShapeMismatch(f"{v.shape} vs {liver.shape}")
    return v.with_voxels(v.voxels * (liver.labels != 0).astype(np.float32))


def merge_labels(liver: LabelMask, tumors: LabelMask, vessels: LabelMask,
                 precedence=DEFAULT_PRECEDENCE) -> LabelMask:
    """Per voxel, the highest-precedence claiming tissue wins."""
    masks = {"liver": liver, "tumor": tumors, "vessel": vessels}
    shapes = {m.shape for m in masks.values()}
    if len(shapes) != 1:
        raise ShapeMismatch(f"mask shapes differ: {shapes}")
    merged = np.zeros(liver.shape, dtype=np.uint8)
    for tissue in reversed(precedence):  # lowest precedence first, overwritten later
        merged[masks[tissue].labels != 0] = TISSUE_TO_LABEL[tissue]
    return liver.with_labels(merged)


def largest_component(mask: LabelMask) -> LabelMask:
    """Keep only the largest 26-connected foreground component."""
    labeled, n = ndimage.label(mask.labels != 0, structure=np.ones((3, 3, 3)))
    if n <= 1:
        return mask
    sizes = ndimage.sum_labels(np.ones_like(labeled), labeled, range(1, n + 1))
    keep = int(np.argmax(sizes)) + 1
    return mask.with_labels((labeled == keep).astype(np.uint8))


def run_cascade(v: Volume, cfg: CascadeConfig, progress=None,
                parallel: bool = True) -> CascadeResult:
    """Full pipeline on one volume; see CascadeConfig for the knobs."""

    def tick(phase, frac=1.0):
        if progress is not None:
            progress(phase, frac)

    timings = {}
    t0 = time.perf_counter()
    tick("preprocessing", 0.0)
    pre = preprocess_volume(v, cfg.preprocess, cfg.stats)
    timings["preprocessing"] = time.perf_counter() - t0

    liver_seg = make_segmenter(cfg.liver_model, cfg.threshold)
    tumor_seg = make_segmenter(cfg.tumor_model, cfg.threshold)
    vessel_seg = make_segmenter(cfg.vessel_model, cfg.threshold)

    t0 = time.perf_counter()
    tick("liver", 0.0)
    liver = liver_seg.segment(pre, progress=lambda f: tick("liver", f))
    if cfg.lcc_filter:
        liver = largest_component(liver)
    timings["liver"] = time.perf_counter() - t0

    masked = apply_liver_mask(pre, liver)
    vessel_input = masked if cfg.mask_vessels else pre

    t0 = time.perf_counter()
    tick("tumors", 0.0)
    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            tumor_future = pool.submit(
                tumor_seg.segment, masked, progress=lambda f: tick("tumors", f))
            vessel_future = pool.submit(vessel_seg.segment, vessel_input)
            tumors, vessels = tumor_future.result(), vessel_future.result()
    else:
        tumors = tumor_seg.segment(masked, progress=lambda f: tick("tumors", f))
        vessels = vessel_seg.segment(vessel_input)
    tick("vessels", 1.0)
    # containment guarantee even for segmenters that claim zeroed voxels
    inside = liver.labels != 0
    tumors = tumors.with_labels((tumors.labels != 0) & inside)
    vessels = vessels.with_labels((vessels.labels != 0) & inside)
    timings["tumors_vessels"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.restore_native:
        tick("reconstructing", 0.0)
        native = reorient_canonical(v)
        liver, tumors, vessels = (
            upsample_mask_to(m, native.shape, native.spacing, native.affine)
            for m in (liver, tumors, vessels))
    merged = merge_labels(liver, tumors, vessels, cfg.label_precedence)
    timings["merge"] = time.perf_counter() - t0
    return CascadeResult(liver=liver, tumors=tumors, vessels=vessels,
                         merged=merged, timings=timings)
