"""Forward-pass U-Net inference in plain numpy.

Encoder/decoder with skip concatenations, 3x3 convolutions (padding 1,
stride 1) so spatial dimensions are preserved and no cropping is needed,
2x2 max-pooling between encoder levels, and a sigmoid single-channel head.
Only inference is implemented; training lives outside this package.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import MissingWeights, ModelLoadError, ShapeMismatch
from .preprocess import SliceStack, assemble_stacks
from .types import LabelMask, Volume

WEIGHT_MAGIC = b"UNETW1\x00"

DEFAULT_CHANNELS = (64, 128, 256, 512, 512)
ORIGINAL_CHANNELS = (64, 128, 256, 512, 1024)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    padding: int = 1
    stride: int = 1
    has_bias: bool = True

    @property
    def param_count(self) -> int:
        n = self.in_channels * self.out_channels * self.kernel ** 2
        return n + (self.out_channels if self.has_bias else 0)


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 5
    channels_per_level: tuple[int, ...] = DEFAULT_CHANNELS
    in_channels: int = 5
    out_channels: int = 1
    upsample_mode: str = "transposed_conv"  # or "bilinear_then_conv"

    def __post_init__(self):
        if len(self.channels_per_level) != self.levels:
            raise ValueError("channels_per_level length must equal levels")
        if self.upsample_mode not in ("transposed_conv", "bilinear_then_conv"):
            raise ValueError(f"unknown upsample_mode {self.upsample_mode!r}")
        object.__setattr__(self, "channels_per_level", tuple(self.channels_per_level))

    def to_json(self) -> str:
        return json.dumps({
            "levels": self.levels,
            "channels_per_level": list(self.channels_per_level),
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "upsample_mode": self.upsample_mode,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "UNetConfig":
        doc = json.loads(text)
        return cls(levels=doc["levels"],
                   channels_per_level=tuple(doc["channels_per_level"]),
                   in_channels=doc["in_channels"],
                   out_channels=doc.get("out_channels", 1),
                   upsample_mode=doc.get("upsample_mode", "transposed_conv"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass(frozen=True)
class ProbabilityMap:
    values: np.ndarray  # (H, W) f32 in (0, 1)
    target_index: int


def layer_specs(cfg: UNetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs for every tensor the config requires."""
    ch = cfg.channels_per_level
    specs: list[tuple[str, tuple[int, ...]]] = []

    def conv(name, cin, cout, k=3):
        specs.append((f"{name}.weight", (cout, cin, k, k)))
        specs.append((f"{name}.bias", (cout,)))

    prev = cfg.in_channels
    for lev in range(cfg.levels):
        conv(f"enc{lev}.conv1", prev, ch[lev])
        conv(f"enc{lev}.conv2", ch[lev], ch[lev])
        prev = ch[lev]
    for lev in range(cfg.levels - 2, -1, -1):
        if cfg.upsample_mode == "transposed_conv":
            specs.append((f"dec{lev}.up.weight", (ch[lev + 1], ch[lev], 2, 2)))
            specs.append((f"dec{lev}.up.bias", (ch[lev],)))
        else:
            conv(f"dec{lev}.up", ch[lev + 1], ch[lev])
        conv(f"dec{lev}.conv1", 2 * ch[lev], ch[lev])
        conv(f"dec{lev}.conv2", ch[lev], ch[lev])
    conv("head", ch[0], cfg.out_channels, k=1)
    return specs


def param_count(cfg: UNetConfig):
    """Per-layer and total parameter counts."""
    per_layer = {}
    for name, shape in layer_specs(cfg):
        base = name.rsplit(".", 1)[0]
        per_layer[base] = per_layer.get(base, 0) + int(np.prod(shape))
    return per_layer, sum(per_layer.values())


class WeightStore:
    """Immutable named-tensor container bound to a config by hash."""

    def __init__(self, entries: dict[str, np.ndarray], config_hash: str):
        self.entries = {k: np.asarray(v, dtype=np.float32) for k, v in entries.items()}
        self.config_hash = config_hash

    def require(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise MissingWeights(f"layer {name!r} absent from weight store") from None

    def validate(self, cfg: UNetConfig) -> None:
        expected = dict(layer_specs(cfg))
        for name, shape in expected.items():
            if name not in self.entries:
                raise MissingWeights(f"missing layer {name!r}")
            if self.entries[name].shape != shape:
                raise MissingWeights(
                    f"layer {name!r} has shape {self.entries[name].shape}, wants {shape}")
        extras = set(self.entries) - set(expected)
        if extras:
            raise MissingWeights(f"unexpected layers: {sorted(extras)}")

    def save(self, path) -> None:
        names = sorted(self.entries)
        blob = bytearray()
        layers = []
        for name in names:
            arr = np.ascontiguousarray(self.entries[name], dtype="<f4")
            layers.append({"name": name, "shape": list(arr.shape), "offset": len(blob)})
            blob += arr.tobytes()
        manifest = json.dumps({"config_hash": self.config_hash, "layers": layers}).encode()
        with open(path, "wb") as fh:
            fh.write(WEIGHT_MAGIC)
            fh.write(struct.pack("<I", len(manifest)))
            fh.write(manifest)
            fh.write(bytes(blob))

    @classmethod
    def load(cls, path) -> "WeightStore":
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise ModelLoadError(str(exc)) from exc
        if raw[:7] != WEIGHT_MAGIC:
            raise ModelLoadError(f"{path}: not a weight file")
        (mlen,) = struct.unpack_from("<I", raw, 7)
        manifest = json.loads(raw[11:11 + mlen])
        blob_start = 11 + mlen
        entries = {}
        for layer in manifest["layers"]:
            shape = tuple(layer["shape"])
            count = int(np.prod(shape))
            off = blob_start + layer["offset"]
            if off + count * 4 > len(raw):
                raise ModelLoadError(f"{path}: truncated tensor {layer['name']!r}")
            entries[layer["name"]] = np.frombuffer(
                raw, dtype="<f4", count=count, offset=off).reshape(shape).copy()
        return cls(entries, manifest.get("config_hash", ""))


def random_weights(cfg: UNetConfig, seed: int = 0) -> WeightStore:
    """He-initialized random weights, for demos and contract tests."""
    rng = np.random.default_rng(seed)
    entries = {}
    for name, shape in layer_specs(cfg):
        if name.endswith(".bias"):
            entries[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            entries[name] = (rng.standard_normal(shape) *
                             np.sqrt(2.0 / fan_in)).astype(np.float32)
    return WeightStore(entries, cfg.config_hash)


# --- primitive layers ---

def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None,
           padding: int = 1, stride: int = 1) -> np.ndarray:
    """Zero-padded cross-correlation on a CHW tensor."""
    x = np.asarray(x, dtype=np.float32)
    weight = np.asarray(weight, dtype=np.float32)
    cout, cin, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != cin:
        raise ShapeMismatch(f"input has {x.shape} but kernel wants {cin} channels")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
    if stride != 1:
        windows = windows[:, ::stride, ::stride]
    out = np.tensordot(weight, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float32)[:, None, None]
    return out.astype(np.float32)


def relu(x):
    return np.maximum(x, 0.0)


def maxpool2(x):
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def conv_transpose2x2(x, weight, bias):
    """2x2 stride-2 transposed convolution; weight is (C_in, C_out, 2, 2)."""
    y = np.einsum("chw,coab->ohawb", x, weight, optimize=True)
    o = weight.shape[1]
    h, w = x.shape[1], x.shape[2]
    y = y.reshape(o, 2 * h, 2 * w)
    return (y + bias[:, None, None]).astype(np.float32)


def upsample_bilinear2(x):
    return np.stack([
        ndimage.zoom(ch, 2.0, order=1, mode="nearest", prefilter=False) for ch in x
    ]).astype(np.float32)


def _sigmoid(x):
    out = 1.0 / (1.0 + np.exp(-x.astype(np.float64)))
    return np.clip(out, 1e-7, 1.0 - 1e-7).astype(np.float32)


# --- full network ---

def forward(stack: SliceStack, cfg: UNetConfig, weights: WeightStore) -> ProbabilityMap:
    """Run the encoder/decoder graph on one slice stack."""
    x = stack.channels.astype(np.float32)
    if x.shape[0] != cfg.in_channels:
        raise ShapeMismatch(f"stack has {x.shape[0]} channels, config wants {cfg.in_channels}")
    divisor = 2 ** (cfg.levels - 1)
    if x.shape[1] % divisor or x.shape[2] % divisor:
        raise ShapeMismatch(f"spatial dims {x.shape[1:]} not divisible by {divisor}")

    def block(name, t):
        t = relu(conv2d(t, weights.require(f"{name}.conv1.weight"),
                        weights.require(f"{name}.conv1.bias")))
        t = relu(conv2d(t, weights.require(f"{name}.conv2.weight"),
                        weights.require(f"{name}.conv2.bias")))
        return t

    skips = []
    for lev in range(cfg.levels):
        if lev:
            x = maxpool2(x)
        x = block(f"enc{lev}", x)
        skips.append(x)

    for lev in range(cfg.levels - 2, -1, -1):
        if cfg.upsample_mode == "transposed_conv":
            x = conv_transpose2x2(x, weights.require(f"dec{lev}.up.weight"),
                                  weights.require(f"dec{lev}.up.bias"))
        else:
            x = conv2d(upsample_bilinear2(x), weights.require(f"dec{lev}.up.weight"),
                       weights.require(f"dec{lev}.up.bias"))
        x = np.concatenate([skips[lev], x], axis=0)
        x = block(f"dec{lev}", x)

    logits = conv2d(x, weights.require("head.weight"), weights.require("head.bias"),
                    padding=0)
    return ProbabilityMap(values=_sigmoid(logits[0]), target_index=stack.target_index)


def segment_slicewise(v: Volume, cfg: UNetConfig, weights: WeightStore,
                      threshold: float = 0.5, k: int | None = None,
                      progress=None) -> LabelMask:
    """Segment every slice through the network; >= threshold is foreground."""
    if k is None:
        k = (cfg.in_channels - 1) // 2
    out = np.zeros(v.shape, dtype=np.uint8)
    n = v.slice_count
    for stack in assemble_stacks(v, k):
        prob = forward(stack, cfg, weights)
        out[:, :, stack.target_index] = (prob.values >= threshold).astype(np.uint8)
        if progress is not None:
            progress((stack.target_index + 1) / n)
    return LabelMask(labels=out, spacing=v.spacing, affine=v.affine,
                     source_id=v.source_id)


def threshold_segment(v: Volume, lo: float, hi: float) -> LabelMask:
    """Analytic band segmenter: foreground where lo <= voxel <= hi."""
    mask = ((v.voxels >= lo) & (v.voxels <= hi)).astype(np.uint8)
    return LabelMask(labels=mask, spacing=v.spacing, affine=v.affine,
                     source_id=v.source_id)


# --- pluggable segmenter backends ---

class ThresholdSegmenter:
    """Deterministic oracle backend; bounds are in preprocessed intensity units."""

    def __init__(self, lo: float, hi: float):
        self.lo, self.hi = lo, hi

    def segment(self, v: Volume, progress=None) -> LabelMask:
        mask = threshold_segment(v, self.lo, self.hi)
        if progress is not None:
            progress(1.0)
        return mask


class UNetSegmenter:
    def __init__(self, cfg: UNetConfig, weights: WeightStore, threshold: float = 0.5):
        weights.validate(cfg)
        self.cfg, self.weights, self.threshold = cfg, weights, threshold

    @classmethod
    def from_files(cls, weight_path, config_path, threshold: float = 0.5):
        try:
            cfg = UNetConfig.from_json(Path(config_path).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ModelLoadError(f"{config_path}: {exc}") from exc
        return cls(cfg, WeightStore.load(weight_path), threshold)

    def segment(self, v: Volume, progress=None) -> LabelMask:
        return segment_slicewise(v, self.cfg, self.weights, self.threshold,
                                 progress=progress)
