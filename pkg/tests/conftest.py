import numpy as np
import pytest

from branchstereo.geometry import StereoRig


@pytest.fixture
def rig800():
    # W = 80 px*m
    return StereoRig.from_values(800, 800, 320, 240, 0.1)


@pytest.fixture
def desk_rig():
    return StereoRig.from_values(700, 700, 320, 180, 0.063)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def noise_image(rng, h, w, sigma=1.0):
    """Smooth random texture, uint8."""
    from scipy.ndimage import gaussian_filter

    img = gaussian_filter(rng.random((h, w)), sigma)
    img = (img - img.min()) / (img.max() - img.min())
    return np.floor(32 + 192 * img + 0.5).astype(np.uint8)
