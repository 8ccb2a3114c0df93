"""Batch job execution: record inspection, per-volume cascade runs, and the
fixed five-file output bundle per successful volume.
"""
from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from . import mesh3d, nifti
from .cascade import CascadeConfig, run_cascade
from .errors import AiradError
from .types import LabelMask, Volume

PHASES = ("queued", "preprocessing", "liver", "tumors", "vessels",
          "reconstructing", "writing", "done", "failed")

# cumulative percent at the start of each phase
_PHASE_BASE = {"preprocessing": 0, "liver": 15, "tumors": 45, "vessels": 70,
               "reconstructing": 75, "writing": 90, "done": 100}
_PHASE_SPAN = {"preprocessing": 15, "liver": 30, "tumors": 25, "vessels": 5,
               "reconstructing": 15, "writing": 10}

OUTPUT_FILES = ("liver.nii.gz", "tumors.nii.gz", "vessels.nii.gz",
                "complete_model.obj", "complete_model.mtl")


def inspect_records(paths):
    """Header-only metadata per file; parse failures become error entries."""
    rows = []
    for path in paths:
        path = Path(path)
        try:
            hdr = nifti.read_header(path)
            rows.append({
                "source_id": nifti._source_id(path),
                "path": str(path),
                "dims": list(hdr.dims),
                "spacing_mm": [round(s, 6) for s in hdr.pixdim],
                "slice_count": hdr.dims[2],
                "datatype": hdr.datatype_code,
                "file_size": path.stat().st_size,
            })
        except (AiradError, OSError) as exc:
            rows.append({"path": str(path), "error": str(exc)})
    return rows


@dataclass
class VolumeState:
    path: str
    stem: str
    phase: str = "queued"
    percent: int = 0
    error: str | None = None
    outputs: list[str] = field(default_factory=list)


@dataclass
class Job:
    id: str
    volumes: list[VolumeState]
    config: CascadeConfig
    out_dir: str
    created: float = field(default_factory=time.time)

    @classmethod
    def create(cls, volume_paths, config: CascadeConfig, out_dir) -> "Job":
        vols = [VolumeState(path=str(p), stem=_stem(p)) for p in volume_paths]
        return cls(id=uuid.uuid4().hex[:12], volumes=vols, config=config,
                   out_dir=str(out_dir))

    def as_dict(self):
        return {
            "id": self.id,
            "created": self.created,
            "out_dir": self.out_dir,
            "volumes": [{
                "path": v.path, "stem": v.stem, "phase": v.phase,
                "percent": v.percent, "error": v.error, "outputs": v.outputs,
            } for v in self.volumes],
            "done": all(v.phase in ("done", "failed") for v in self.volumes),
        }


def _stem(path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return Path(path).stem


def write_bundle(result, out_dir: Path, stem: str) -> list[str]:
    """Emit the five per-volume output files under a stem-named folder."""
    folder = Path(out_dir) / stem
    folder.mkdir(parents=True, exist_ok=True)
    nifti.write_nifti(result.liver, folder / "liver.nii.gz")
    nifti.write_nifti(result.tumors, folder / "tumors.nii.gz")
    nifti.write_nifti(result.vessels, folder / "vessels.nii.gz")
    scene = mesh3d.build_scene(result.merged)
    mesh3d.write_obj_mtl(scene, folder / "complete_model.obj",
                         folder / "complete_model.mtl")
    return [str(folder / name) for name in OUTPUT_FILES]


def run_job(job: Job, on_event=None) -> None:
    """Run every volume; failures are isolated per volume."""

    def emit(vol: VolumeState, phase: str, percent: int, message: str = ""):
        vol.phase = phase
        vol.percent = max(vol.percent, min(int(percent), 100))
        if on_event is not None:
            on_event({"job": job.id, "volume": vol.stem, "phase": phase,
                      "percent": vol.percent, "message": message})

    for vol in job.volumes:
        try:
            emit(vol, "preprocessing", 0, "reading volume")
            volume = nifti.read_nifti(vol.path)

            def progress(phase, frac, vol=vol):
                base = _PHASE_BASE.get(phase, 0)
                span = _PHASE_SPAN.get(phase, 0)
                emit(vol, phase, base + span * frac)

            result = run_cascade(volume, job.config, progress=progress)
            emit(vol, "reconstructing", _PHASE_BASE["reconstructing"])
            emit(vol, "writing", _PHASE_BASE["writing"])
            vol.outputs = write_bundle(result, Path(job.out_dir), vol.stem)
            emit(vol, "done", 100, "complete")
        except (AiradError, OSError, ValueError) as exc:
            vol.error = str(exc)
            vol.phase = "failed"
            if on_event is not None:
                on_event({"job": job.id, "volume": vol.stem, "phase": "failed",
                          "percent": vol.percent, "error": str(exc)})
