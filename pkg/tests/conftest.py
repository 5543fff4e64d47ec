import numpy as np
import pytest

from facedeid.imagecore import Image


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, h=8, w=8, c=1):
    return Image(rng.random((h, w, c)))
