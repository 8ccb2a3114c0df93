"""Command-line entry points: segment, inspect, phantom, evaluate, serve."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import metrics, nifti
from .cascade import CascadeConfig
from .errors import AiradError
from .jobs import Job, inspect_records, run_job
from .phantom import PhantomSpec, generate_phantom
from .types import LabelMask

import numpy as np


def _model_binding(path: str):
    """A model argument is either a weight binary or a JSON binding spec."""
    p = Path(path)
    if p.suffix == ".json":
        doc = json.loads(p.read_text())
        if "kind" not in doc:
            raise AiradError(f"{path}: binding spec needs a 'kind' field")
        return doc
    config = Path(str(p) + ".config.json")
    if not config.exists():
        raise AiradError(f"{path}: missing config sidecar {config.name}")
    return {"kind": "unet", "weights": str(p), "config": str(config)}


def _cmd_segment(args) -> int:
    config = CascadeConfig(
        liver_model=_model_binding(args.liver_model),
        tumor_model=_model_binding(args.tumor_model),
        vessel_model=_model_binding(args.vessel_model),
        threshold=args.threshold,
        restore_native=not args.no_restore_native,
    )
    out_dir = args.out or os.environ.get("AIRAD_OUT_DIR", "airad_out")
    job = Job.create(args.input, config, out_dir)

    def on_event(event):
        msg = event.get("error") or event.get("message", "")
        print(f"[{event['volume']}] {event['phase']} {event['percent']}% {msg}".rstrip())

    run_job(job, on_event=on_event)
    failed = [v for v in job.volumes if v.phase == "failed"]
    for v in failed:
        print(f"FAILED {v.path}: {v.error}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_inspect(args) -> int:
    rows = inspect_records(args.input)
    print(json.dumps(rows, indent=2))
    return 1 if any("error" in r for r in rows) else 0


def _cmd_phantom(args) -> int:
    spec = PhantomSpec.from_json(Path(args.spec).read_text()) if args.spec else PhantomSpec()
    volume, gt = generate_phantom(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nifti.write_nifti(volume, out / f"{volume.source_id}.nii.gz")
    nifti.write_nifti(gt, out / f"{volume.source_id}_gt.nii.gz")
    print(f"wrote {volume.source_id}.nii.gz and ground truth to {out}")
    return 0


def _load_merged(root: Path) -> LabelMask:
    parts = {name: root / f"{name}.nii.gz"
             for name in ("liver", "tumors", "vessels")}
    if all(p.exists() for p in parts.values()):
        liver = nifti.read_labelmask(parts["liver"])
        tumors = nifti.read_labelmask(parts["tumors"])
        vessels = nifti.read_labelmask(parts["vessels"])
        merged = np.zeros(liver.shape, dtype=np.uint8)
        merged[liver.labels != 0] = 1
        merged[tumors.labels != 0] = 2
        merged[vessels.labels != 0] = 3
        return liver.with_labels(merged)
    candidates = sorted(root.glob("*.nii.gz")) if root.is_dir() else [root]
    if len(candidates) != 1:
        raise AiradError(f"{root}: expected per-tissue masks or one merged mask")
    return nifti.read_labelmask(candidates[0])


def _cmd_evaluate(args) -> int:
    pred = _load_merged(Path(args.pred))
    gt = _load_merged(Path(args.gt))
    reports = metrics.evaluate(pred, gt)
    print(json.dumps({k: v.as_dict() for k, v in reports.items()}, indent=2))
    return 0


def _cmd_serve(args) -> int:
    from .service import serve
    serve(bind=args.bind, static_dir=args.static)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airad",
                                     description="Liver CT segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="run the cascade on NIfTI volumes")
    seg.add_argument("--input", nargs="+", required=True)
    seg.add_argument("--liver-model", required=True)
    seg.add_argument("--tumor-model", required=True)
    seg.add_argument("--vessel-model", required=True)
    seg.add_argument("--threshold", type=float, default=0.5)
    seg.add_argument("--out")
    seg.add_argument("--no-restore-native", action="store_true")
    seg.set_defaults(func=_cmd_segment)

    ins = sub.add_parser("inspect", help="print header metadata")
    ins.add_argument("input", nargs="+")
    ins.set_defaults(func=_cmd_inspect)

    pha = sub.add_parser("phantom", help="generate a synthetic phantom")
    pha.add_argument("--spec")
    pha.add_argument("--seed", type=int, default=0)
    pha.add_argument("--out", required=True)
    pha.set_defaults(func=_cmd_phantom)

    ev = sub.add_parser("evaluate", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.set_defaults(func=_cmd_evaluate)

    srv = sub.add_parser("serve", help="run the job service")
    srv.add_argument("--bind", default="127.0.0.1:8000")
    srv.add_argument("--static")
    srv.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AiradError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
