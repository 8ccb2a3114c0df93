"""Pure-numpy U-Net inference.

Builds a small encoder/decoder, saves and reloads its weights, and
segments a phantom volume slice by slice using 2.5D input stacks.
"""
import tempfile
from pathlib import Path

from airad import unet
from airad.phantom import PhantomSpec, generate_phantom
from airad.preprocess import PreprocessConfig, preprocess_volume

cfg = unet.UNetConfig(levels=2, channels_per_level=(8, 16), in_channels=5)
per_layer, total = unet.param_count(cfg)
print(f"mini config: {total:,} parameters across {len(per_layer)} tensors")

full = unet.UNetConfig()
per_layer, total = unet.param_count(full)
print(f"default config: {total:,} parameters; deepest conv "
      f"{per_layer['enc4.conv2']:,}")

weights = unet.random_weights(cfg, seed=0)
store_path = Path(tempfile.mkdtemp(prefix="airad_demo_")) / "mini.unetw"
weights.save(store_path)
reloaded = unet.WeightStore.load(store_path)
reloaded.validate(cfg)
print(f"weight store round trip ok ({store_path.stat().st_size:,} bytes)")

volume, _ = generate_phantom(PhantomSpec())
pre = preprocess_volume(volume, PreprocessConfig(rescale_factor=1.0,
                                                 apply_clahe=False))
mask = unet.segment_slicewise(
    pre, cfg, reloaded,
    progress=lambda f: print(f"  segmented {f:.0%}") if f in (1.0,) else None)
print(f"predicted foreground voxels: {int(mask.labels.sum()):,} "
      f"of {mask.labels.size:,} (random weights, so ~half)")
