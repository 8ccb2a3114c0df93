import numpy as np
import pytest

from airad.types import LabelMask, Volume


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_volume(rng, shape=(6, 5, 4), spacing=(1.0, 1.0, 1.0), lo=-500, hi=800):
    vox = rng.uniform(lo, hi, shape).astype(np.float32)
    return Volume.from_array(vox, spacing=spacing, source_id="rand")


def random_mask(rng, shape=(6, 5, 4), p=0.5, spacing=(1.0, 1.0, 1.0)):
    return LabelMask.from_array((rng.random(shape) < p).astype(np.uint8),
                                spacing=spacing)
