"""The same workflow through the command-line interface: generate a
phantom, segment it, and score the prediction against ground truth.

Equivalent shell session:

    airad phantom --out data --seed 0
    airad segment --input data/phantom_0.nii.gz \
        --liver-model liver.json --tumor-model tumor.json \
        --vessel-model vessel.json --out results
    airad evaluate --pred results/phantom_0 --gt data/phantom_0_gt.nii.gz
"""
import json
import tempfile
from pathlib import Path

from airad.cli import main

root = Path(tempfile.mkdtemp(prefix="airad_demo_"))
bindings = {
    "liver": {"kind": "threshold", "lo": 0.3, "hi": 1.01},
    "tumor": {"kind": "threshold", "lo": 0.66, "hi": 0.86},
    "vessel": {"kind": "threshold", "lo": 0.9, "hi": 1.01},
}
for name, spec in bindings.items():
    (root / f"{name}.json").write_text(json.dumps(spec))

assert main(["phantom", "--out", str(root / "data"), "--seed", "0"]) == 0
assert main(["inspect", str(root / "data" / "phantom_0.nii.gz")]) == 0
assert main([
    "segment", "--input", str(root / "data" / "phantom_0.nii.gz"),
    "--liver-model", str(root / "liver.json"),
    "--tumor-model", str(root / "tumor.json"),
    "--vessel-model", str(root / "vessel.json"),
    "--out", str(root / "results"),
]) == 0
assert main([
    "evaluate", "--pred", str(root / "results" / "phantom_0"),
    "--gt", str(root / "data" / "phantom_0_gt.nii.gz"),
]) == 0
print(f"\nartifacts under {root}")
