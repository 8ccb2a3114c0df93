"""Preprocessing chain for CT volumes.

Steps run in a fixed order: canonical reorientation, in-plane rescaling,
intensity clipping to the liver window, [0,1] range standardization,
CLAHE contrast enhancement, corpus z-normalization, and 2.5D slice-stack
assembly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    AlreadyPreprocessed,
    ConstantVolume,
    ObliqueAffine,
    ZeroVariance,
)
from .types import LabelMask, Volume

CLIP_LO_DEFAULT = -100.0
CLIP_HI_DEFAULT = 400.0


@dataclass
class PreprocessConfig:
    clip_lo: float = CLIP_LO_DEFAULT
    clip_hi: float = CLIP_HI_DEFAULT
    rescale_factor: float = 0.5
    clahe_kernel: tuple[int, int, int] | None = None  # None: ceil(dim/8) per axis
    clahe_clip_limit: float = 0.01
    clahe_bins: int = 256
    k: int = 2
    apply_clahe: bool = True

    def __post_init__(self):
        if self.clip_lo >= self.clip_hi:
            raise ValueError("clip_lo must be < clip_hi")
        if not (0.0 < self.rescale_factor <= 1.0):
            raise ValueError("rescale_factor must be in (0, 1]")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not (0.0 < self.clahe_clip_limit <= 1.0):
            raise ValueError("clahe_clip_limit must be in (0, 1]")


@dataclass(frozen=True)
class NormalizationStats:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ValueError("stats must be finite")
        if self.sigma <= 0:
            raise ZeroVariance(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class SliceStack:
    """(2k+1)-channel input for segmenting one target slice."""

    channels: np.ndarray  # (2k+1, H, W) f32
    target_index: int

    @property
    def shape(self):
        return self.channels.shape[1:]

    @property
    def middle(self):
        return self.channels[self.channels.shape[0] // 2]


# --- orientation ---

def _axis_assignment(direction: np.ndarray):
    """Map each voxel axis to its dominant world axis, or raise ObliqueAffine."""
    perm = [-1, -1, -1]  # world axis i <- voxel axis perm[i]
    signs = [1.0, 1.0, 1.0]
    for j in range(3):
        col = direction[:, j]
        i = int(np.argmax(np.abs(col)))
        rest = np.delete(np.abs(col), i)
        if np.any(rest > 1e-4 * max(np.abs(col[i]), 1e-12)):
            raise ObliqueAffine("affine has rotation beyond permutation/flip")
        if perm[i] != -1:
            raise ObliqueAffine("two voxel axes map to the same world axis")
        perm[i] = j
        signs[i] = 1.0 if col[i] >= 0 else -1.0
    return perm, signs


def reorient_canonical(obj):
    """Permute/flip axes so the affine becomes positive-diagonal (RAS-like)."""
    is_mask = isinstance(obj, LabelMask)
    arr = obj.labels if is_mask else obj.voxels
    direction = obj.affine[:, :3]
    perm, signs = _axis_assignment(direction)

    out = np.transpose(arr, axes=perm)
    new_affine = np.zeros((3, 4))
    offset = obj.affine[:, 3].copy()
    for i in range(3):
        j = perm[i]
        col = direction[:, j]
        if signs[i] < 0:
            out = np.flip(out, axis=i)
            n = arr.shape[j]
            offset = offset + col * (n - 1)
            col = -col
        new_affine[:, i] = col
    new_affine[:, 3] = offset
    new_spacing = tuple(obj.spacing[perm[i]] for i in range(3))

    if is_mask:
        return LabelMask(labels=np.ascontiguousarray(out), spacing=new_spacing,
                         affine=new_affine, source_id=obj.source_id)
    return Volume(voxels=np.ascontiguousarray(out), spacing=new_spacing,
                  affine=new_affine, source_id=obj.source_id,
                  preprocessed=obj.preprocessed)


# --- resampling ---

def _inplane_zoom(arr, factor, order):
    h, w = arr.shape[0], arr.shape[1]
    ht, wt = math.ceil(h * factor), math.ceil(w * factor)
    if (ht, wt) == (h, w):
        return arr.copy()
    zoomed = ndimage.zoom(arr, (ht / h, wt / w, 1.0), order=order,
                          mode="nearest", prefilter=False)
    assert zoomed.shape[:2] == (ht, wt)
    return zoomed


def _rescaled_geometry(obj, out_shape):
    sx = obj.shape[0] / out_shape[0]
    sy = obj.shape[1] / out_shape[1]
    affine = obj.affine.copy()
    affine[:, 0] *= sx
    affine[:, 1] *= sy
    spacing = (obj.spacing[0] * sx, obj.spacing[1] * sy, obj.spacing[2])
    return spacing, affine


def rescale_inplane(v: Volume, factor: float) -> Volume:
    """Bilinear in-plane resampling; the slice axis is untouched."""
    out = _inplane_zoom(v.voxels, factor, order=1).astype(np.float32)
    spacing, affine = _rescaled_geometry(v, out.shape)
    return Volume(voxels=out, spacing=spacing, affine=affine,
                  source_id=v.source_id, preprocessed=v.preprocessed)


def rescale_mask_inplane(m: LabelMask, factor: float) -> LabelMask:
    """Nearest-neighbor in-plane resampling; never invents new labels."""
    out = _inplane_zoom(m.labels, factor, order=0)
    spacing, affine = _rescaled_geometry(m, out.shape)
    return LabelMask(labels=out, spacing=spacing, affine=affine, source_id=m.source_id)


def upsample_mask_to(m: LabelMask, target_shape, spacing, affine) -> LabelMask:
    """Nearest-neighbor upsample of a mask to an explicit grid shape."""
    if m.shape == tuple(target_shape):
        return m.with_labels(m.labels, spacing=spacing, affine=affine)
    zoom = [t / s for t, s in zip(target_shape, m.shape)]
    out = ndimage.zoom(m.labels, zoom, order=0, mode="nearest", prefilter=False)
    assert out.shape == tuple(target_shape)
    return LabelMask(labels=out, spacing=spacing, affine=affine, source_id=m.source_id)


# --- intensity transforms ---

def clip_intensities(v: Volume, lo: float = CLIP_LO_DEFAULT,
                     hi: float = CLIP_HI_DEFAULT) -> Volume:
    if lo >= hi:
        raise ValueError("lo must be < hi")
    return v.with_voxels(np.clip(v.voxels, lo, hi))


def standardize_range(v: Volume) -> Volume:
    vmin, vmax = float(v.voxels.min()), float(v.voxels.max())
    if vmax == vmin:
        raise ConstantVolume("cannot standardize a constant volume")
    return v.with_voxels((v.voxels - np.float32(vmin)) / np.float32(vmax - vmin))


def compute_stats(volumes) -> NormalizationStats:
    """Corpus-wide mean and population SD over every voxel of every volume."""
    count = 0
    total = 0.0
    total_sq = 0.0
    for v in volumes:
        vox = v.voxels.astype(np.float64)
        count += vox.size
        total += float(vox.sum())
        total_sq += float(np.square(vox).sum())
    if count == 0:
        raise ZeroVariance("no voxels")
    mu = total / count
    var = max(total_sq / count - mu * mu, 0.0)
    if var <= 0.0:
        raise ZeroVariance("corpus has zero variance")
    return NormalizationStats(mu=mu, sigma=math.sqrt(var))


def znormalize(v: Volume, stats: NormalizationStats) -> Volume:
    return v.with_voxels((v.voxels - np.float32(stats.mu)) / np.float32(stats.sigma))


def save_stats(stats: NormalizationStats, path, corpus=()) -> None:
    Path(path).write_text(json.dumps(
        {"mu": stats.mu, "sigma": stats.sigma, "corpus": list(corpus)}))


def load_stats(path) -> NormalizationStats:
    doc = json.loads(Path(path).read_text())
    return NormalizationStats(mu=doc["mu"], sigma=doc["sigma"])


# --- CLAHE ---

def _tile_edges(dim, kernel):
    n = max(1, math.ceil(dim / kernel))
    edges = np.linspace(0, dim, n + 1).round().astype(int)
    return edges


def _tile_luts(vox, edges, bins, clip_limit):
    nt = [len(e) - 1 for e in edges]
    luts = np.empty((nt[0], nt[1], nt[2], bins), dtype=np.float64)
    idx = np.clip((vox * bins).astype(np.int64), 0, bins - 1)
    for a in range(nt[0]):
        for b in range(nt[1]):
            for c in range(nt[2]):
                block = idx[edges[0][a]:edges[0][a + 1],
                            edges[1][b]:edges[1][b + 1],
                            edges[2][c]:edges[2][c + 1]]
                hist = np.bincount(block.ravel(), minlength=bins).astype(np.float64)
                volume = block.size
                limit = clip_limit * volume
                excess = np.maximum(hist - limit, 0.0).sum()
                hist = np.minimum(hist, limit) + excess / bins
                luts[a, b, c] = np.cumsum(hist) / volume
    return luts


def _tile_centers(edges):
    return (edges[:-1] + edges[1:]) / 2.0 - 0.5


def _interp_coords(coords, centers):
    """Lower tile index and fractional weight for each coordinate."""
    if len(centers) == 1:
        return np.zeros(len(coords), dtype=int), np.zeros(len(coords))
    t = np.clip(np.searchsorted(centers, coords) - 1, 0, len(centers) - 2)
    frac = (coords - centers[t]) / (centers[t + 1] - centers[t])
    return t, np.clip(frac, 0.0, 1.0)


def clahe3d(v: Volume, cfg: PreprocessConfig) -> Volume:
    """Contrast-limited adaptive histogram equalization over 3D tiles.

    Per-tile histograms are clipped at ``clip_limit * tile_volume`` with the
    excess spread uniformly; each voxel's value comes from trilinear
    interpolation between the mappings of its neighboring tiles.
    """
    vox = v.voxels
    kernel = cfg.clahe_kernel or tuple(math.ceil(d / 8) for d in vox.shape)
    bins = cfg.clahe_bins
    edges = [_tile_edges(vox.shape[i], kernel[i]) for i in range(3)]
    luts = _tile_luts(vox, edges, bins, cfg.clahe_clip_limit)

    bin_idx = np.clip((vox * bins).astype(np.int64), 0, bins - 1)
    ti, wi = [], []
    for axis in range(3):
        centers = _tile_centers(edges[axis])
        t, w = _interp_coords(np.arange(vox.shape[axis], dtype=np.float64), centers)
        ti.append(t)
        wi.append(w)

    tx = ti[0][:, None, None]
    ty = ti[1][None, :, None]
    tz = ti[2][None, None, :]
    wx = wi[0][:, None, None]
    wy = wi[1][None, :, None]
    wz = wi[2][None, None, :]
    nt = [len(e) - 1 for e in edges]

    out = np.zeros(vox.shape, dtype=np.float64)
    for dx in (0, 1):
        ax = np.minimum(tx + dx, nt[0] - 1)
        fx = wx if dx else 1.0 - wx
        for dy in (0, 1):
            ay = np.minimum(ty + dy, nt[1] - 1)
            fy = wy if dy else 1.0 - wy
            for dz in (0, 1):
                az = np.minimum(tz + dz, nt[2] - 1)
                fz = wz if dz else 1.0 - wz
                mapped = luts[ax, ay, az, bin_idx]
                out += fx * fy * fz * mapped
    return v.with_voxels(np.clip(out, 0.0, 1.0).astype(np.float32))


# --- 2.5D assembly ---

def assemble_stacks(v: Volume, k: int) -> list[SliceStack]:
    """One (2k+1)-channel stack per slice; margins use edge replication."""
    n = v.slice_count
    stacks = []
    for i in range(n):
        idx = np.clip(np.arange(i - k, i + k + 1), 0, n - 1)
        channels = np.stack([v.voxels[:, :, j] for j in idx]).astype(np.float32)
        stacks.append(SliceStack(channels=channels, target_index=i))
    return stacks


# --- full chain ---

def preprocess_volume(v: Volume, cfg: PreprocessConfig,
                      stats: NormalizationStats | None = None) -> Volume:
    """Run the full chain in order; z-normalization is skipped without stats."""
    if v.preprocessed:
        raise AlreadyPreprocessed(f"{v.source_id or 'volume'} already preprocessed")
    out = reorient_canonical(v)
    out = rescale_inplane(out, cfg.rescale_factor)
    out = clip_intensities(out, cfg.clip_lo, cfg.clip_hi)
    out = standardize_range(out)
    if cfg.apply_clahe:
        out = clahe3d(out, cfg)
    if stats is not None:
        out = znormalize(out, stats)
    return out.with_voxels(out.voxels, preprocessed=True)
