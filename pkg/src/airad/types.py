"""Core voxel-grid containers shared by every stage of the pipeline.

Voxel arrays are indexed ``[x, y, z]``; the affine maps voxel indices to
world coordinates in millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

VALID_LABELS = frozenset({0, 1, 2, 3})


def _default_affine(spacing):
    aff = np.zeros((3, 4), dtype=np.float64)
    aff[0, 0], aff[1, 1], aff[2, 2] = spacing
    return aff


@dataclass(frozen=True)
class Volume:
    """3D scalar grid of f32 intensities with physical spacing and affine."""

    voxels: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray
    source_id: str = ""
    preprocessed: bool = False

    def __post_init__(self):
        vox = np.asarray(self.voxels, dtype=np.float32)
        if vox.ndim != 3:
            raise ValueError(f"expected 3D voxel grid, got {vox.ndim}D")
        if not np.all(np.isfinite(vox)):
            raise ValueError("voxel intensities must be finite")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", np.asarray(self.affine, dtype=np.float64).reshape(3, 4))

    @property
    def shape(self):
        return self.voxels.shape

    @property
    def slice_count(self):
        return self.voxels.shape[2]

    def with_voxels(self, voxels, **changes) -> "Volume":
        return replace(self, voxels=voxels, **changes)

    @classmethod
    def from_array(cls, voxels, spacing=(1.0, 1.0, 1.0), source_id="") -> "Volume":
        return cls(voxels=voxels, spacing=spacing, affine=_default_affine(spacing),
                   source_id=source_id)


@dataclass(frozen=True)
class LabelMask:
    """3D grid of u8 labels: 0=background, 1=liver, 2=tumor, 3=vessel."""

    labels: np.ndarray
    spacing: tuple[float, float, float]
    affine: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 3:
            raise ValueError(f"expected 3D label grid, got {lab.ndim}D")
        if not set(np.unique(lab)).issubset(VALID_LABELS):
            raise ValueError(f"labels outside {{0,1,2,3}}: {np.unique(lab)}")
        object.__setattr__(self, "labels", lab.astype(np.uint8))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "affine", np.asarray(self.affine, dtype=np.float64).reshape(3, 4))

    @property
    def shape(self):
        return self.labels.shape

    def with_labels(self, labels, **changes) -> "LabelMask":
        return replace(self, labels=labels, **changes)

    def binary(self, label: int) -> "LabelMask":
        """Extract the binary mask of one label value."""
        return self.with_labels((self.labels == label).astype(np.uint8))

    @classmethod
    def from_array(cls, labels, spacing=(1.0, 1.0, 1.0), source_id="") -> "LabelMask":
        return cls(labels=labels, spacing=spacing, affine=_default_affine(spacing),
                   source_id=source_id)


def voxel_to_world(affine: np.ndarray, idx) -> np.ndarray:
    """Apply a 3x4 voxel-to-world affine to index coordinates."""
    idx = np.atleast_2d(np.asarray(idx, dtype=np.float64))
    return idx @ affine[:, :3].T + affine[:, 3]
