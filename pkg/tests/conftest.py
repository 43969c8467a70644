import numpy as np
import pytest

from pointsal.gridnet import GridNet
from pointsal.labels import SparseLabels
from pointsal.seeding import rng_for


@pytest.fixture
def tiny_net():
    # 2 hidden conv layers, narrow, on single-channel input
    return GridNet.create("test", in_channels=1, seed=3, hidden=(4, 4))


@pytest.fixture
def tiny_image():
    return rng_for(11, "tiny_image").uniform(0.0, 1.0, size=(6, 6, 1))


def random_labels(image_id, h, w, n, seed, round=0):
    labels = SparseLabels(image_id, h, w)
    rng = rng_for(seed, "labels", image_id)
    coords = rng.choice(h * w, size=n, replace=False)
    for k, flat in enumerate(coords):
        labels.add_point(int(flat // w), int(flat % w), int(rng.integers(0, 2)),
                         "queried", round)
    return labels
