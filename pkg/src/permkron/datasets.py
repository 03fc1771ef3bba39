"""Synthetic tasks and file-backed image datasets.

Sources come as a spec string:

  * ``synthetic:<kind>,<seed>,<n>`` generates images on the fly
    (kinds: ``patch-pattern``, ``gaussian-blobs``);
  * anything else is a path to a delimited text file or a raw binary file
    in the layouts below.

Text layout: one sample per line, comma separated, label first, then
H*W*3 values in [0, 1], pixels row-major with channels innermost. Binary
layout: int32 header (count, height, width), then per sample one int32
label followed by H*W*3 float64 values in the same order.

The train/test split is deterministic: the last floor(n * test_fraction)
samples are the test set, in source order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SYNTHETIC_KINDS = ("patch-pattern", "gaussian-blobs")


@dataclass(frozen=True)
class LabeledImages:
    images: np.ndarray   # (N, H, W, 3) float64 in [0, 1]
    labels: np.ndarray   # (N,) int64
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise ValueError(f"images must be (N, H, W, 3), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ValueError("label count does not match image count")


def _balanced_labels(n: int, num_classes: int, rng) -> np.ndarray:
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    return labels


def patch_pattern_task(seed: int, n: int, height: int = 16, width: int = 16) -> LabeledImages:
    """Four-class task: the label is the quadrant carrying a planted stripe texture.

    Background values stay in [0.35, 0.65]; the labeled quadrant's first
    channel is overwritten with 0.1/0.9 column stripes, so adjacent-column
    contrast identifies the quadrant deterministically (see
    ``quadrant_oracle``). The class signal is purely positional: averaged
    over token position the four classes look identical.
    """
    if height % 2 or width % 2:
        raise ValueError("height and width must be even")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, 4, rng)
    images = 0.35 + 0.3 * rng.random((n, height, width, 3))
    h2, w2 = height // 2, width // 2
    stripes = np.tile(np.where(np.arange(w2) % 2 == 1, 0.9, 0.1), (h2, 1))
    for i, q in enumerate(labels):
        r0 = 0 if q < 2 else h2
        c0 = 0 if q % 2 == 0 else w2
        images[i, r0:r0 + h2, c0:c0 + w2, 0] = stripes
    return LabeledImages(images, labels, 4)


def quadrant_oracle(images: np.ndarray) -> np.ndarray:
    """Rule-based classifier for the patch-pattern task: argmax of per-quadrant
    adjacent-column contrast in channel 0. Correct on every generated sample."""
    images = np.asarray(images)
    n, height, width, _ = images.shape
    h2, w2 = height // 2, width // 2
    scores = np.zeros((n, 4))
    for q in range(4):
        r0 = 0 if q < 2 else h2
        c0 = 0 if q % 2 == 0 else w2
        block = images[:, r0:r0 + h2, c0:c0 + w2, 0]
        scores[:, q] = np.abs(np.diff(block, axis=2)).mean(axis=(1, 2))
    return np.argmax(scores, axis=1)


def gaussian_blobs_task(seed: int, n: int, height: int = 16, width: int = 16,
                        num_classes: int = 2, noise: float = 0.05) -> LabeledImages:
    """Classes are fixed smooth template images plus pixel noise; widely
    separated templates keep the task linearly separable at small noise."""
    rng = np.random.default_rng(seed)
    template_rng = np.random.default_rng([seed, 7919])
    templates = 0.5 + 0.4 * np.sign(template_rng.standard_normal((num_classes, height, width, 3)))
    labels = _balanced_labels(n, num_classes, rng)
    images = templates[labels] + noise * rng.standard_normal((n, height, width, 3))
    return LabeledImages(np.clip(images, 0.0, 1.0), labels, num_classes)


def synthetic_task(kind: str, seed: int, n: int, height: int = 16, width: int = 16,
                   num_classes: int | None = None) -> LabeledImages:
    if kind == "patch-pattern":
        return patch_pattern_task(seed, n, height, width)
    if kind == "gaussian-blobs":
        return gaussian_blobs_task(seed, n, height, width, num_classes or 2)
    raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")


def parse_source(source: str):
    """Split a source spec into ("synthetic", kind, seed, n) or ("file", path)."""
    if source.startswith("synthetic:"):
        body = source[len("synthetic:"):]
        parts = body.split(",")
        if len(parts) != 3:
            raise ValueError(f"synthetic source needs kind,seed,n, got {source!r}")
        kind = parts[0].strip()
        try:
            seed, n = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ValueError(f"bad synthetic source {source!r}") from exc
        return ("synthetic", kind, seed, n)
    return ("file", source)


def load_dataset(source: str, height: int | None = None, width: int | None = None,
                 num_classes: int | None = None) -> LabeledImages:
    parsed = parse_source(source)
    if parsed[0] == "synthetic":
        _, kind, seed, n = parsed
        return synthetic_task(kind, seed, n, height or 16, width or 16, num_classes)
    path = Path(parsed[1])
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if path.suffix == ".bin":
        data = read_binary(path)
    else:
        data = read_delimited(path, height=height, width=width)
    if num_classes is not None:
        if data.labels.max() >= num_classes:
            raise ValueError(
                f"label {int(data.labels.max())} out of range for {num_classes} classes"
            )
        data = LabeledImages(data.images, data.labels, num_classes)
    return data


def train_test_split(data: LabeledImages, test_fraction: float = 0.2):
    """Deterministic split: the trailing fraction is the test set."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(data.labels)
    n_test = max(1, int(np.floor(n * test_fraction)))
    n_train = n - n_test
    if n_train < 1:
        raise ValueError("split leaves no training samples")
    return (
        LabeledImages(data.images[:n_train], data.labels[:n_train], data.num_classes),
        LabeledImages(data.images[n_train:], data.labels[n_train:], data.num_classes),
    )


# ---------------------------------------------------------------------------
# file formats


def write_delimited(path, data: LabeledImages):
    with open(path, "w") as fh:
        for label, image in zip(data.labels, data.images):
            values = ",".join(repr(float(v)) for v in image.reshape(-1))
            fh.write(f"{int(label)},{values}\n")


def read_delimited(path, height: int | None = None, width: int | None = None) -> LabeledImages:
    images = []
    labels = []
    expected = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                label = int(parts[0])
                values = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"row {lineno}: malformed value") from exc
            if label < 0:
                raise ValueError(f"row {lineno}: negative label")
            if expected is None:
                if height is None or width is None:
                    side = int(round((len(values) / 3) ** 0.5))
                    if side * side * 3 != len(values):
                        raise ValueError(
                            f"row {lineno}: cannot infer square image from {len(values)} values;"
                            " pass height and width"
                        )
                    height, width = side, side
                expected = height * width * 3
            if len(values) != expected:
                raise ValueError(f"row {lineno}: expected {expected} values, got {len(values)}")
            if values.min() < 0.0 or values.max() > 1.0:
                raise ValueError(f"row {lineno}: values outside [0, 1]")
            images.append(values.reshape(height, width, 3))
            labels.append(label)
    if not images:
        raise ValueError(f"no samples in {path}")
    labels = np.array(labels, dtype=np.int64)
    return LabeledImages(np.stack(images), labels, int(labels.max()) + 1)


def write_binary(path, data: LabeledImages):
    n, height, width, _ = data.images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<iii", n, height, width))
        for label, image in zip(data.labels, data.images):
            fh.write(struct.pack("<i", int(label)))
            fh.write(np.ascontiguousarray(image, dtype="<f8").tobytes())


def read_binary(path) -> LabeledImages:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise ValueError("binary dataset: truncated header")
        n, height, width = struct.unpack("<iii", header)
        if n < 1 or height < 1 or width < 1:
            raise ValueError("binary dataset: bad header")
        per_sample = height * width * 3
        images = np.empty((n, height, width, 3), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            raw_label = fh.read(4)
            raw = fh.read(8 * per_sample)
            if len(raw_label) != 4 or len(raw) != 8 * per_sample:
                raise ValueError(f"binary dataset: truncated at sample {i}")
            labels[i] = struct.unpack("<i", raw_label)[0]
            images[i] = np.frombuffer(raw, dtype="<f8").reshape(height, width, 3)
    if labels.min() < 0:
        raise ValueError("binary dataset: negative label")
    if images.min() < 0.0 or images.max() > 1.0:
        raise ValueError("binary dataset: values outside [0, 1]")
    return LabeledImages(images, labels, int(labels.max()) + 1)
