import numpy as np
import pytest

from nbb import backbone

FIXTURE_SEED = 0


@pytest.fixture(scope="session")
def weights_path(tmp_path_factory):
    """Deterministic randomized NBBW file with the full 13-layer schema.

    Generated from a fixed seed so the suite never needs the real
    pretrained checkpoint.
    """
    path = tmp_path_factory.mktemp("weights") / "random.nbbw"
    backbone.write_weights(str(path), backbone.random_weights(FIXTURE_SEED).layers)
    return str(path)


@pytest.fixture(scope="session")
def weights(weights_path):
    return backbone.load_weights(weights_path)


def blob_image(center, size=64, sigma=6.0):
    """Bright gaussian blob on black, uint8 RGB."""
    ys, xs = np.mgrid[0:size, 0:size]
    blob = np.exp(-((xs - center[0]) ** 2 + (ys - center[1]) ** 2) / (2 * sigma ** 2))
    img = np.stack([blob, blob * 0.8, blob * 0.6], axis=2)
    return (img * 255).astype(np.uint8)


@pytest.fixture(scope="session")
def blob_pair():
    """Fixed synthetic pair: the same blob translated by (+16, +16)."""
    return blob_image((24, 24)), blob_image((40, 40))


@pytest.fixture(scope="session")
def blob_pyramids(blob_pair, weights):
    a, b = blob_pair
    pyr_a = backbone.extract_pyramid(backbone.preprocess(a, 64), weights, (64, 64))
    pyr_b = backbone.extract_pyramid(backbone.preprocess(b, 64), weights, (64, 64))
    return pyr_a, pyr_b
