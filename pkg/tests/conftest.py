import numpy as np
import pytest

from permkron import datasets, models


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def patched_split(data: datasets.LabeledImages, patch_size: int = 4,
                  test_fraction: float = 0.2) -> dict:
    """Patchified train/test dict in the shape the trainer expects."""
    train_part, test_part = datasets.train_test_split(data, test_fraction)
    return {
        "train_x": models.patchify_batch(train_part.images, patch_size),
        "train_y": train_part.labels,
        "test_x": models.patchify_batch(test_part.images, patch_size),
        "test_y": test_part.labels,
    }
