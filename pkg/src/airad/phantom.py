"""Synthetic CT phantom with known geometry and disjoint intensity bands.

Stands in for real data when verifying the pipeline end to end: the
generator emits both the volume and its ground-truth merged mask.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SpecOverlap
from .types import LabelMask, Volume


@dataclass
class Ellipsoid:
    center: tuple[float, float, float]
    radii: tuple[float, float, float]
    band: tuple[float, float]


@dataclass
class Sphere:
    center: tuple[float, float, float]
    radius: float
    band: tuple[float, float]


@dataclass
class Tube:
    """Axis-aligned cylinder: `axis` is 0, 1 or 2; spans the liver extent."""
    axis: int
    center: tuple[float, float]  # coordinates in the two non-axis dims
    radius: float
    band: tuple[float, float]


@dataclass
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    liver: Ellipsoid = field(default_factory=lambda: Ellipsoid(
        center=(32, 32, 32), radii=(22, 18, 20), band=(80.0, 120.0)))
    tumors: list[Sphere] = field(default_factory=lambda: [
        Sphere(center=(26, 30, 30), radius=6, band=(220.0, 260.0))])
    vessels: list[Tube] = field(default_factory=lambda: [
        Tube(axis=2, center=(38, 34), radius=3, band=(330.0, 370.0))])
    background: float = -200.0
    noise: float = 0.0

    def bands(self):
        out = [tuple(self.liver.band)]
        out += [tuple(t.band) for t in self.tumors]
        out += [tuple(t.band) for t in self.vessels]
        return out

    def validate(self):
        bands = self.bands() + [(self.background, self.background)]
        for i, (lo1, hi1) in enumerate(bands):
            for lo2, hi2 in bands[i + 1:]:
                if max(lo1, lo2) <= min(hi1, hi2):
                    raise SpecOverlap(f"intensity bands overlap: "
                                      f"[{lo1},{hi1}] and [{lo2},{hi2}]")
        c = np.asarray(self.liver.center)
        r = np.asarray(self.liver.radii)
        for s in self.tumors:
            if np.sum(((np.asarray(s.center) - c) / r) ** 2) > 1.0:
                raise SpecOverlap(f"tumor at {s.center} not inside the liver")

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        doc = json.loads(text)
        spec = cls(
            dims=tuple(doc.get("dims", (64, 64, 64))),
            liver=Ellipsoid(**doc["liver"]) if "liver" in doc else cls().liver,
            tumors=[Sphere(**s) for s in doc.get("tumors", [])] or cls().tumors,
            vessels=[Tube(**t) for t in doc.get("vessels", [])] or cls().vessels,
            background=doc.get("background", -200.0),
            noise=doc.get("noise", 0.0),
        )
        return spec


def _grids(dims):
    return np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")


def generate_phantom(spec: PhantomSpec, seed: int = 0):
    """Deterministic (Volume, ground-truth merged LabelMask) pair."""
    spec.validate()
    x, y, z = _grids(spec.dims)
    c, r = spec.liver.center, spec.liver.radii
    liver = (((x - c[0]) / r[0]) ** 2 + ((y - c[1]) / r[1]) ** 2 +
             ((z - c[2]) / r[2]) ** 2) <= 1.0

    tumor = np.zeros(spec.dims, dtype=bool)
    for s in spec.tumors:
        tumor |= ((x - s.center[0]) ** 2 + (y - s.center[1]) ** 2 +
                  (z - s.center[2]) ** 2) <= s.radius ** 2
    tumor &= liver

    vessel = np.zeros(spec.dims, dtype=bool)
    coords = (x, y, z)
    for t in spec.vessels:
        others = [coords[a] for a in range(3) if a != t.axis]
        vessel |= ((others[0] - t.center[0]) ** 2 +
                   (others[1] - t.center[1]) ** 2) <= t.radius ** 2
    vessel &= liver

    labels = np.zeros(spec.dims, dtype=np.uint8)
    labels[liver] = 1
    labels[tumor] = 2
    labels[vessel] = 3

    def mid(band):
        return (band[0] + band[1]) / 2.0

    vox = np.full(spec.dims, spec.background, dtype=np.float32)
    vox[liver] = mid(spec.liver.band)
    for s in spec.tumors:
        vox[(labels == 2)] = mid(s.band)
    for t in spec.vessels:
        vox[(labels == 3)] = mid(t.band)

    if spec.noise > 0:
        rng = np.random.default_rng(seed)
        vox = vox + rng.uniform(-spec.noise, spec.noise, spec.dims).astype(np.float32)

    volume = Volume.from_array(vox, source_id=f"phantom_{seed}")
    mask = LabelMask.from_array(labels, source_id=f"phantom_{seed}")
    return volume, mask
