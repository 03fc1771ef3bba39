import numpy as np
import pytest

from conftest import patched_split
from permkron import datasets, models, training


def test_patch_pattern_balance_and_determinism():
    data = datasets.patch_pattern_task(seed=4, n=102)
    counts = np.bincount(data.labels, minlength=4)
    assert counts.max() - counts.min() <= 1
    again = datasets.patch_pattern_task(seed=4, n=102)
    assert np.array_equal(data.images, again.images)
    assert np.array_equal(data.labels, again.labels)
    assert data.images.min() >= 0.0 and data.images.max() <= 1.0


def test_patch_pattern_oracle_is_perfect():
    data = datasets.patch_pattern_task(seed=11, n=400)
    assert np.array_equal(datasets.quadrant_oracle(data.images), data.labels)


def test_gaussian_blobs_balance_and_determinism():
    data = datasets.gaussian_blobs_task(seed=2, n=51, num_classes=3)
    counts = np.bincount(data.labels, minlength=3)
    assert counts.max() - counts.min() <= 1
    again = datasets.gaussian_blobs_task(seed=2, n=51, num_classes=3)
    assert np.array_equal(data.images, again.images)


def test_parse_source():
    assert datasets.parse_source("synthetic:patch-pattern,7,100") == (
        "synthetic", "patch-pattern", 7, 100)
    assert datasets.parse_source("some/file.csv") == ("file", "some/file.csv")
    with pytest.raises(ValueError):
        datasets.parse_source("synthetic:patch-pattern,7")
    with pytest.raises(ValueError):
        datasets.parse_source("synthetic:patch-pattern,x,100")


def test_load_dataset_synthetic_and_split():
    data = datasets.load_dataset("synthetic:gaussian-blobs,5,40")
    assert len(data.labels) == 40
    train_part, test_part = datasets.train_test_split(data, 0.25)
    assert len(train_part.labels) == 30 and len(test_part.labels) == 10
    assert np.array_equal(test_part.images, data.images[30:])
    with pytest.raises(FileNotFoundError):
        datasets.load_dataset("missing-file.csv")


def test_text_round_trip(tmp_path):
    data = datasets.patch_pattern_task(seed=1, n=6, height=4, width=4)
    path = tmp_path / "tiny.csv"
    datasets.write_delimited(path, data)
    loaded = datasets.read_delimited(path)
    assert np.array_equal(loaded.labels, data.labels)
    assert np.abs(loaded.images - data.images).max() == 0.0


def test_text_malformed_row_names_the_row(tmp_path):
    path = tmp_path / "bad.csv"
    good = ",".join(["1"] + ["0.5"] * 12)
    short = ",".join(["0"] + ["0.5"] * 7)
    path.write_text(good + "\n" + short + "\n")
    with pytest.raises(ValueError, match="row 2"):
        datasets.read_delimited(path, height=2, width=2)

    path.write_text(",".join(["0"] + ["0.5"] * 11 + ["oops"]) + "\n")
    with pytest.raises(ValueError, match="row 1"):
        datasets.read_delimited(path, height=2, width=2)


def test_label_out_of_range_detected(tmp_path):
    data = datasets.gaussian_blobs_task(seed=0, n=4, height=4, width=4, num_classes=2)
    path = tmp_path / "two.csv"
    datasets.write_delimited(path, data)
    with pytest.raises(ValueError, match="out of range"):
        datasets.load_dataset(str(path), num_classes=1)


def test_binary_round_trip_and_truncation(tmp_path):
    data = datasets.patch_pattern_task(seed=2, n=5, height=4, width=4)
    path = tmp_path / "tiny.bin"
    datasets.write_binary(path, data)
    loaded = datasets.read_binary(path)
    assert np.array_equal(loaded.labels, data.labels)
    assert np.abs(loaded.images - data.images).max() == 0.0
    blob = path.read_bytes()
    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(blob[:-10])
    with pytest.raises(ValueError, match="truncated"):
        datasets.read_binary(truncated)


def _train_quadrant(cfg, data, epochs=35, seed=0, params=None):
    params = params if params is not None else models.init_mixer_params(cfg, seed=seed)
    _, history = training.train(cfg, params, patched_split(data),
                                training.TrainConfig(epochs=epochs, batch_size=64,
                                                     learning_rate=0.02, seed=seed))
    return max(row["test_acc"] for row in history)


def test_quadrant_task_needs_token_mixing():
    """The class signal is positional: freezing token mixing at identity
    leaves only channel mixing, which pools away the position. A full mixer
    solves the task; the ablated one stays near chance."""
    data = datasets.patch_pattern_task(seed=11, n=400)
    cfg = models.MixerConfig(variant="s_mixer", in_tokens=16, in_channels=48,
                             tokens=16, channels=16, depth=2, num_classes=4)

    full_acc = _train_quadrant(cfg, data)

    ablated = models.init_mixer_params(cfg, seed=0)
    for layer in range(cfg.depth):
        ablated.update(f"block{layer}.token.weight", np.eye(16))
        ablated.set_trainable(f"block{layer}.token.weight", False)
    ablated.update("block0.skip.weight", np.eye(16))
    ablated.set_trainable("block0.skip.weight", False)
    ablated_acc = _train_quadrant(cfg, data, params=ablated)

    assert full_acc > 0.9
    assert ablated_acc < 0.45  # four classes, chance is 0.25
