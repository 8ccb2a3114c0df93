import numpy as np
import pytest

from airad import unet
from airad.errors import MissingWeights, ShapeMismatch
from airad.preprocess import SliceStack
from airad.types import Volume

from conftest import random_volume


def conv_bruteforce(x, weight, bias, padding=1, stride=1):
    """Six-loop reference cross-correlation."""
    cout, cin, kh, kw = weight.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    oh = (xp.shape[1] - kh) // stride + 1
    ow = (xp.shape[2] - kw) // stride + 1
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for o in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for c in range(cin):
                    for a in range(kh):
                        for b in range(kw):
                            acc += weight[o, c, a, b] * xp[c, i * stride + a, j * stride + b]
                out[o, i, j] = acc + (bias[o] if bias is not None else 0.0)
    return out


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 6, 6)).astype(np.float32)
    w = np.zeros((1, 1, 3, 3), dtype=np.float32)
    w[0, 0, 1, 1] = 1.0
    out = unet.conv2d(x, w, np.zeros(1, dtype=np.float32))
    np.testing.assert_allclose(out, x, atol=1e-6)


def test_conv_ones_kernel_interior():
    x = np.ones((1, 5, 5), dtype=np.float32)
    w = np.ones((1, 1, 3, 3), dtype=np.float32)
    out = unet.conv2d(x, w, np.array([0.5], dtype=np.float32))
    assert out[0, 2, 2] == pytest.approx(9.5)


def test_conv_matches_bruteforce(rng):
    for _ in range(5):
        x = rng.standard_normal((3, 8, 8)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        fast = unet.conv2d(x, w, b)
        slow = conv_bruteforce(x, w, b)
        assert np.max(np.abs(fast - slow)) < 1e-5


def test_conv_channel_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        unet.conv2d(np.zeros((2, 4, 4), dtype=np.float32),
                    np.zeros((1, 3, 3, 3), dtype=np.float32))


def test_param_count_anchors():
    assert ConvCount(512, 512) == 2_359_808
    assert ConvCount(1024, 1024) == 9_438_208
    assert ConvCount(1, 1) == 10
    _, total_default = unet.param_count(unet.UNetConfig())
    per_default, _ = unet.param_count(unet.UNetConfig())
    assert per_default["enc4.conv2"] == 2_359_808
    per_orig, _ = unet.param_count(
        unet.UNetConfig(channels_per_level=(64, 128, 256, 512, 1024)))
    assert per_orig["enc4.conv2"] == 9_438_208


def ConvCount(cin, cout):
    return unet.ConvSpec(cin, cout).param_count


def naive_forward(stack, cfg, weights):
    """Straight-line reimplementation of the 2-level graph with loop ops."""
    w = weights.entries

    def conv(name, x, padding=1):
        return conv_bruteforce(x, w[f"{name}.weight"], w[f"{name}.bias"], padding)

    def pool(x):
        c, h, wd = x.shape
        out = np.zeros((c, h // 2, wd // 2))
        for ci in range(c):
            for i in range(h // 2):
                for j in range(wd // 2):
                    out[ci, i, j] = x[ci, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
        return out

    def up(x, wt, bias):
        cin, cout = wt.shape[0], wt.shape[1]
        h, wd = x.shape[1], x.shape[2]
        out = np.zeros((cout, 2 * h, 2 * wd))
        for o in range(cout):
            for i in range(h):
                for j in range(wd):
                    for a in range(2):
                        for b in range(2):
                            out[o, 2 * i + a, 2 * j + b] = sum(
                                x[c, i, j] * wt[c, o, a, b] for c in range(cin))
            out[o] += bias[o]
        return out

    x = stack.channels.astype(np.float64)
    e0 = np.maximum(conv("enc0.conv2", np.maximum(conv("enc0.conv1", x), 0)), 0)
    x = pool(e0)
    x = np.maximum(conv("enc1.conv2", np.maximum(conv("enc1.conv1", x), 0)), 0)
    x = up(x, w["dec0.up.weight"], w["dec0.up.bias"])
    x = np.concatenate([e0, x], axis=0)
    x = np.maximum(conv("dec0.conv2", np.maximum(conv("dec0.conv1", x), 0)), 0)
    logits = conv("head", x, padding=0)
    return 1.0 / (1.0 + np.exp(-logits[0]))


def test_toy_forward_matches_naive_oracle(rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=3)
    weights = unet.random_weights(cfg, seed=7)
    stack = SliceStack(channels=rng.standard_normal((3, 8, 8)).astype(np.float32),
                       target_index=0)
    fast = unet.forward(stack, cfg, weights).values
    slow = naive_forward(stack, cfg, weights)
    assert np.max(np.abs(fast - slow)) < 1e-5


def test_full_config_output_contract(rng):
    cfg = unet.UNetConfig()
    weights = unet.random_weights(cfg, seed=3)
    stack = SliceStack(channels=rng.standard_normal((5, 256, 256)).astype(np.float32),
                       target_index=0)
    out = unet.forward(stack, cfg, weights).values
    assert out.shape == (256, 256)
    assert out.min() > 0.0 and out.max() < 1.0


def test_zero_weights_give_half(rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=1)
    entries = {name: np.zeros(shape, dtype=np.float32)
               for name, shape in unet.layer_specs(cfg)}
    weights = unet.WeightStore(entries, cfg.config_hash)
    stack = SliceStack(channels=rng.standard_normal((1, 8, 8)).astype(np.float32),
                       target_index=0)
    out = unet.forward(stack, cfg, weights).values
    np.testing.assert_allclose(out, 0.5)


def test_forward_deterministic(rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=3)
    weights = unet.random_weights(cfg, seed=1)
    stack = SliceStack(channels=rng.standard_normal((3, 16, 16)).astype(np.float32),
                       target_index=0)
    a = unet.forward(stack, cfg, weights).values
    b = unet.forward(stack, cfg, weights).values
    assert a.tobytes() == b.tobytes()


def test_forward_shape_checks(rng):
    cfg = unet.UNetConfig(levels=3, channels_per_level=(2, 4, 8), in_channels=1)
    weights = unet.random_weights(cfg, seed=0)
    bad = SliceStack(channels=np.zeros((1, 10, 10), dtype=np.float32), target_index=0)
    with pytest.raises(ShapeMismatch):
        unet.forward(bad, cfg, weights)
    bad_ch = SliceStack(channels=np.zeros((2, 8, 8), dtype=np.float32), target_index=0)
    with pytest.raises(ShapeMismatch):
        unet.forward(bad_ch, cfg, weights)


def test_missing_weights(rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=1)
    weights = unet.random_weights(cfg, seed=0)
    del weights.entries["head.weight"]
    stack = SliceStack(channels=np.zeros((1, 8, 8), dtype=np.float32), target_index=0)
    with pytest.raises(MissingWeights):
        unet.forward(stack, cfg, weights)
    with pytest.raises(MissingWeights):
        weights.validate(cfg)


def test_bilinear_upsample_mode_runs(rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=1,
                          upsample_mode="bilinear_then_conv")
    weights = unet.random_weights(cfg, seed=0)
    stack = SliceStack(channels=rng.standard_normal((1, 8, 8)).astype(np.float32),
                       target_index=0)
    out = unet.forward(stack, cfg, weights).values
    assert out.shape == (8, 8)


def test_weight_store_round_trip(tmp_path, rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=3)
    weights = unet.random_weights(cfg, seed=9)
    path = tmp_path / "w.unetw"
    weights.save(path)
    back = unet.WeightStore.load(path)
    assert back.config_hash == cfg.config_hash
    assert set(back.entries) == set(weights.entries)
    for name in weights.entries:
        np.testing.assert_array_equal(back.entries[name], weights.entries[name])


def test_segment_slicewise_threshold_ties(rng):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=1)
    entries = {name: np.zeros(shape, dtype=np.float32)
               for name, shape in unet.layer_specs(cfg)}
    weights = unet.WeightStore(entries, cfg.config_hash)
    v = random_volume(rng, shape=(8, 8, 3))
    mask_half = unet.segment_slicewise(v, cfg, weights, threshold=0.5, k=0)
    assert mask_half.labels.all()  # 0.5 >= 0.5: foreground
    mask_one = unet.segment_slicewise(v, cfg, weights, threshold=1.0, k=0)
    assert not mask_one.labels.any()  # sigmoid < 1 always


@pytest.mark.parametrize("slices", [1, 7, 100])
def test_segment_slicewise_slice_counts(rng, slices):
    cfg = unet.UNetConfig(levels=2, channels_per_level=(2, 4), in_channels=3)
    weights = unet.random_weights(cfg, seed=0)
    v = random_volume(rng, shape=(8, 8, slices))
    mask = unet.segment_slicewise(v, cfg, weights, k=1)
    assert mask.shape[2] == slices


def test_threshold_segmenter_bounds(rng):
    v = random_volume(rng, lo=0, hi=100)
    assert not unet.threshold_segment(v, 10.0, 5.0).labels.any()  # lo > hi: empty
    assert unet.threshold_segment(v, -np.inf, np.inf).labels.all()


def test_segmenter_interface_substitutability(rng):
    v = random_volume(rng, lo=0, hi=1)
    direct = unet.threshold_segment(v, 0.3, 0.7)
    via_interface = unet.ThresholdSegmenter(0.3, 0.7).segment(v)
    np.testing.assert_array_equal(direct.labels, via_interface.labels)
