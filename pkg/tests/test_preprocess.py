import numpy as np
import pytest

from airad import preprocess as pp
from airad.errors import AlreadyPreprocessed, ConstantVolume, ObliqueAffine, ZeroVariance
from airad.types import LabelMask, Volume, voxel_to_world

from conftest import random_volume


def test_reorient_identity_unchanged(rng):
    v = random_volume(rng)
    out = pp.reorient_canonical(v)
    np.testing.assert_array_equal(out.voxels, v.voxels)
    np.testing.assert_allclose(out.affine, v.affine)


def test_reorient_flip_x_idempotent(rng):
    v = random_volume(rng)
    affine = v.affine.copy()
    affine[0, 0] = -1.0
    flipped = Volume(voxels=v.voxels, spacing=v.spacing, affine=affine)
    once = pp.reorient_canonical(flipped)
    np.testing.assert_array_equal(once.voxels, v.voxels[::-1, :, :])
    twice = pp.reorient_canonical(once)
    np.testing.assert_array_equal(twice.voxels, once.voxels)
    np.testing.assert_allclose(twice.affine, once.affine)


def test_reorient_lps_world_coordinates_preserved(rng):
    # LPS: x and y axes negated relative to RAS
    v = random_volume(rng, shape=(5, 4, 3), spacing=(1.1, 1.2, 1.3))
    affine = np.zeros((3, 4))
    affine[0, 0], affine[1, 1], affine[2, 2] = -1.1, -1.2, 1.3
    affine[:, 3] = (10.0, 20.0, 30.0)
    lps = Volume(voxels=v.voxels, spacing=v.spacing, affine=affine)
    out = pp.reorient_canonical(lps)
    np.testing.assert_array_equal(out.voxels, v.voxels[::-1, ::-1, :])
    # brute force: every voxel's world coordinate must be identical
    for idx in [(0, 0, 0), (4, 3, 2), (2, 1, 1)]:
        old_world = voxel_to_world(affine, idx)[0]
        nx = lps.shape[0] - 1 - idx[0]
        ny = lps.shape[1] - 1 - idx[1]
        new_world = voxel_to_world(out.affine, (nx, ny, idx[2]))[0]
        np.testing.assert_allclose(new_world, old_world, atol=1e-4)
        assert out.voxels[nx, ny, idx[2]] == lps.voxels[idx]


def test_reorient_oblique_rejected(rng):
    v = random_volume(rng)
    affine = v.affine.copy()
    affine[0, 1] = 0.5  # genuine rotation component
    with pytest.raises(ObliqueAffine):
        pp.reorient_canonical(Volume(voxels=v.voxels, spacing=v.spacing, affine=affine))


def test_rescale_half(rng):
    v = random_volume(rng, shape=(512, 512, 3))
    out = pp.rescale_inplane(v, 0.5)
    assert out.shape == (256, 256, 3)
    assert out.spacing[0] == pytest.approx(v.spacing[0] * 2)
    assert out.spacing[2] == v.spacing[2]


def test_rescale_identity(rng):
    v = random_volume(rng)
    out = pp.rescale_inplane(v, 1.0)
    np.testing.assert_array_equal(out.voxels, v.voxels)


def test_rescale_constant_slice_stays_constant():
    v = Volume.from_array(np.full((16, 16, 2), 7.5, dtype=np.float32))
    out = pp.rescale_inplane(v, 0.5)
    np.testing.assert_allclose(out.voxels, 7.5)


def test_rescale_mask_preserves_alphabet(rng):
    labels = rng.integers(0, 4, (32, 32, 4)).astype(np.uint8)
    m = LabelMask.from_array(labels)
    out = pp.rescale_mask_inplane(m, 0.5)
    assert set(np.unique(out.labels)) <= set(np.unique(labels))
    assert out.shape == (16, 16, 4)


@pytest.mark.parametrize("value,expected", [(-150, -100), (150, 150), (1000, 400)])
def test_clip_cases(value, expected):
    v = Volume.from_array(np.full((2, 2, 2), value, dtype=np.float32))
    assert pp.clip_intensities(v).voxels[0, 0, 0] == expected


def test_clip_idempotent(rng):
    v = random_volume(rng)
    once = pp.clip_intensities(v)
    np.testing.assert_array_equal(pp.clip_intensities(once).voxels, once.voxels)


def test_standardize_after_clip_is_affine(rng):
    vox = rng.uniform(-500, 900, (20, 20, 4)).astype(np.float32)
    vox.flat[0], vox.flat[1] = -150.0, 800.0  # force both extremes post-clip
    v = pp.clip_intensities(Volume.from_array(vox))
    out = pp.standardize_range(v)
    expected = (v.voxels + 100.0) / 500.0
    assert np.max(np.abs(out.voxels - expected)) == 0.0
    assert out.voxels.min() == 0.0 and out.voxels.max() == 1.0


def test_standardize_midpoint():
    vox = np.array([-100.0, 150.0, 400.0], dtype=np.float32).reshape(3, 1, 1)
    out = pp.standardize_range(Volume.from_array(vox))
    assert out.voxels[1, 0, 0] == pytest.approx(0.5)


def test_standardize_two_voxel():
    vox = np.array([3.0, 7.0], dtype=np.float32).reshape(2, 1, 1)
    out = pp.standardize_range(Volume.from_array(vox))
    np.testing.assert_allclose(out.voxels.ravel(), [0.0, 1.0])


def test_standardize_constant_rejected():
    with pytest.raises(ConstantVolume):
        pp.standardize_range(Volume.from_array(np.ones((2, 2, 2))))


def test_stats_two_point():
    vox = np.array([0.0, 1.0] * 8, dtype=np.float32).reshape(4, 2, 2)
    stats = pp.compute_stats([Volume.from_array(vox)])
    assert stats.mu == pytest.approx(0.5)
    assert stats.sigma == pytest.approx(0.5)


def test_stats_constant_rejected():
    with pytest.raises(ZeroVariance):
        pp.compute_stats([Volume.from_array(np.full((2, 2, 2), 0.5))])


def test_stats_match_two_pass_oracle(rng):
    vols = [random_volume(rng, shape=tuple(rng.integers(2, 8, 3))) for _ in range(4)]
    stats = pp.compute_stats(vols)
    allvox = np.concatenate([v.voxels.ravel() for v in vols]).astype(np.float64)
    assert stats.mu == pytest.approx(allvox.mean(), abs=1e-6)
    assert stats.sigma == pytest.approx(allvox.std(), abs=1e-6)


def test_znormalize_formula():
    stats = pp.NormalizationStats(mu=0.3, sigma=0.2)
    vox = np.array([0.3, 0.5, 0.9], dtype=np.float32).reshape(3, 1, 1)
    out = pp.znormalize(Volume.from_array(vox), stats)
    np.testing.assert_allclose(out.voxels.ravel(), [0.0, 1.0, 3.0], rtol=1e-6)


def test_znormalized_corpus_is_standard(rng):
    vols = [random_volume(rng, shape=(8, 8, 4)) for _ in range(3)]
    chain = [pp.standardize_range(pp.clip_intensities(v)) for v in vols]
    stats = pp.compute_stats(chain)
    normed = [pp.znormalize(v, stats) for v in chain]
    allvox = np.concatenate([v.voxels.ravel() for v in normed]).astype(np.float64)
    assert abs(allvox.mean()) < 1e-5
    assert abs(allvox.std() - 1.0) < 1e-5


def test_stats_sidecar_round_trip(tmp_path):
    stats = pp.NormalizationStats(mu=0.25, sigma=0.75)
    path = tmp_path / "stats.json"
    pp.save_stats(stats, path, corpus=["a", "b"])
    back = pp.load_stats(path)
    assert back.mu == stats.mu and back.sigma == stats.sigma


def test_assemble_stacks_edges(rng):
    v = random_volume(rng, shape=(4, 4, 100))
    stacks = pp.assemble_stacks(v, k=2)
    assert len(stacks) == 100
    first = stacks[0]
    for ch, j in zip(first.channels, [0, 0, 0, 1, 2]):
        np.testing.assert_array_equal(ch, v.voxels[:, :, j])
    # middle channel is the target slice, bit-exact
    for i in (0, 50, 99):
        np.testing.assert_array_equal(stacks[i].middle, v.voxels[:, :, i])


def test_assemble_stacks_k0(rng):
    v = random_volume(rng, shape=(4, 4, 7))
    stacks = pp.assemble_stacks(v, k=0)
    assert all(s.channels.shape[0] == 1 for s in stacks)


def test_assemble_stacks_single_slice(rng):
    v = random_volume(rng, shape=(4, 4, 1))
    (stack,) = pp.assemble_stacks(v, k=3)
    assert stack.channels.shape[0] == 7
    for ch in stack.channels:
        np.testing.assert_array_equal(ch, v.voxels[:, :, 0])


def test_full_chain_guard_and_range(rng):
    v = random_volume(rng, shape=(16, 16, 4))
    cfg = pp.PreprocessConfig(rescale_factor=1.0, k=1)
    out = pp.preprocess_volume(v, cfg)
    assert out.preprocessed
    assert out.voxels.min() >= 0.0 and out.voxels.max() <= 1.0
    with pytest.raises(AlreadyPreprocessed):
        pp.preprocess_volume(out, cfg)
