"""Scene datasets: a procedural generator and class-folder PPM loading.

On disk a dataset is one subdirectory per class holding P6 images; labels
follow the sorted subdirectory names. Samples of the blob and ring classes
may carry a ground-truth mask, stored next to the image as
`<stem>.mask.pgm`.
"""
import dataclasses
import os
from collections.abc import Callable, Sequence
from typing import Optional

import numpy as np
from absl import logging

from eam_classifier.configs import EXTENT_MULTIPLE
from eam_classifier.utils import images

MAX_SYNTH_CLASSES = 8
NOISE_SIGMA = 0.05
MASK_SUFFIX = ".mask.pgm"
IMAGE_SUFFIX = ".ppm"

# Foreground colours of the synthetic classes, jittered per sample.
_PALETTE = np.array([
    [0.9, 0.8, 0.3],
    [0.3, 0.8, 0.9],
    [0.8, 0.4, 0.8],
    [0.9, 0.9, 0.9],
    [0.9, 0.5, 0.3],
    [0.4, 0.9, 0.4],
    [0.9, 0.3, 0.4],
    [0.6, 0.6, 0.9],
])


class DatasetError(Exception):
    """Raised when a dataset file or directory cannot be used."""

    def __init__(self, path, reason: str):
        self.path = os.fspath(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class EmptyDatasetError(DatasetError):

    def __init__(self, path):
        super().__init__(path, "dataset contains no images")


@dataclasses.dataclass
class SceneSample:
    """One (3, H, W) image in [0, 1] with its class index."""
    image: np.ndarray
    label: int
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(
                f"Expected a (3, H, W) image, got {self.image.shape}")
        if self.image.min() < 0 or self.image.max() > 1:
            raise ValueError("Image values must lie in [0, 1]")
        if self.label < 0:
            raise ValueError(f"Label must be non-negative, got {self.label}")
        if self.mask is not None and self.mask.shape != self.image.shape[1:]:
            raise ValueError(f"Mask extent {self.mask.shape} does not match "
                             f"image extent {self.image.shape[1:]}")

    @property
    def extent(self) -> tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


def stack(samples: Sequence[SceneSample]) -> tuple[np.ndarray, np.ndarray]:
    """Returns (images (n, 3, H, W), labels (n,))."""
    if not samples:
        raise ValueError("Cannot stack an empty list of samples")
    batch = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return batch, labels


def num_classes(samples: Sequence[SceneSample]) -> int:
    return max(s.label for s in samples) + 1


# Synthetic classes. Each returns (pattern in [0, 1] of shape (H, W), mask).


def _grid(extent: int) -> np.ndarray:
    """(2, extent, extent) array of row and column coordinates."""
    return np.mgrid[0:extent, 0:extent].astype(np.float64)


def _stripes(rng, extent, axis):
    period = rng.uniform(extent / 8, extent / 4)
    phase = rng.uniform(0, period)
    coord = _grid(extent)[axis]
    return 0.5 + 0.5 * np.sin(2 * np.pi * (coord + phase) / period), None


def _hstripes(rng, extent):
    return _stripes(rng, extent, 0)


def _vstripes(rng, extent):
    return _stripes(rng, extent, 1)


def _checker(rng, extent):
    cell = rng.uniform(extent / 8, extent / 4)
    y, x = _grid(extent) + rng.uniform(0, cell, size=2)[:, None, None]
    pattern = (np.floor(y / cell) + np.floor(x / cell)) % 2
    return pattern, None


def _disc(extent, center, radius):
    y, x = _grid(extent)
    dist = np.hypot(y - center[0], x - center[1])
    pattern = np.clip(1.0 - (dist - radius) / 2.0, 0.0, 1.0)
    return pattern, dist <= radius


def _centered_blob(rng, extent):
    radius = rng.uniform(extent / 8, extent / 5)
    center = extent / 2 + rng.uniform(-extent / 16, extent / 16, size=2)
    return _disc(extent, center, radius)


def _corner_blob(rng, extent):
    radius = rng.uniform(extent / 8, extent / 5)
    corner = rng.integers(0, 2, size=2)
    offset = radius + rng.uniform(0, extent / 16, size=2)
    center = np.where(corner == 0, offset, extent - 1 - offset)
    return _disc(extent, center, radius)


def _diagonal_gradient(rng, extent):
    y, x = _grid(extent)
    if rng.random() < 0.5:
        x = extent - 1 - x
    shift = rng.uniform(-0.2, 0.2)
    return np.clip((x + y) / (2 * (extent - 1)) + shift, 0.0, 1.0), None


def _ring(rng, extent):
    radius = rng.uniform(extent / 5, extent / 3)
    thickness = extent / 16
    center = extent / 2 + rng.uniform(-extent / 8, extent / 8, size=2)
    y, x = _grid(extent)
    off_ring = np.abs(np.hypot(y - center[0], x - center[1]) - radius)
    pattern = np.clip(1.0 - (off_ring - thickness) / 2.0, 0.0, 1.0)
    return pattern, off_ring <= thickness


def _noise_texture(rng, extent):
    cell = 4
    coarse = rng.uniform(size=(extent // cell, extent // cell))
    return np.kron(coarse, np.ones((cell, cell))), None


SYNTH_CLASSES: dict[str, Callable] = {
    "hstripes": _hstripes,
    "vstripes": _vstripes,
    "checker": _checker,
    "centered_blob": _centered_blob,
    "corner_blob": _corner_blob,
    "diagonal_gradient": _diagonal_gradient,
    "ring": _ring,
    "noise_texture": _noise_texture,
}


def synth_class_names(k_classes: int) -> list[str]:
    names = list(SYNTH_CLASSES)[:k_classes]
    return [f"{i:02d}_{name}" for i, name in enumerate(names)]


def _synth_sample(rng, label: int, extent: int) -> SceneSample:
    generator = list(SYNTH_CLASSES.values())[label]
    pattern, mask = generator(rng, extent)

    foreground = np.clip(_PALETTE[label] + rng.uniform(-0.1, 0.1, size=3), 0,
                         1)
    background = rng.uniform(0.05, 0.3, size=3)
    image = (background[:, None, None] * (1.0 - pattern) +
             foreground[:, None, None] * pattern)
    image = image + rng.normal(0.0, NOISE_SIGMA, size=image.shape)
    return SceneSample(image=np.clip(image, 0.0, 1.0),
                       label=label,
                       mask=mask)


def synth_dataset(k_classes: int,
                  n_per_class: int,
                  extent: int,
                  seed: int = 0) -> list[SceneSample]:
    """Balanced procedural dataset, deterministic for a fixed seed.

    Samples are ordered by class, then by index within the class.
    """
    if not 2 <= k_classes <= MAX_SYNTH_CLASSES:
        raise ValueError(f"Synthetic datasets support 2 to "
                         f"{MAX_SYNTH_CLASSES} classes, got {k_classes}")
    if extent < EXTENT_MULTIPLE or extent % EXTENT_MULTIPLE:
        raise ValueError(f"Extent must be a positive multiple of "
                         f"{EXTENT_MULTIPLE}, got {extent}")
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be positive, got {n_per_class}")

    rng = np.random.default_rng(seed)
    samples = [
        _synth_sample(rng, label, extent)
        for label in range(k_classes)
        for _ in range(n_per_class)
    ]
    logging.info("Generated %d synthetic samples (%d classes, %dx%d)",
                 len(samples), k_classes, extent, extent)
    return samples


def load_dataset(path) -> list[SceneSample]:
    """Loads class subfolders of P6 images; labels by sorted folder name."""
    if not os.path.isdir(path):
        raise DatasetError(path, "not a directory")

    class_dirs = sorted(entry.name
                        for entry in os.scandir(path)
                        if entry.is_dir())
    samples = []
    extent = None
    for label, class_name in enumerate(class_dirs):
        class_dir = os.path.join(path, class_name)
        for filename in sorted(os.listdir(class_dir)):
            if not filename.lower().endswith(IMAGE_SUFFIX):
                continue
            file_path = os.path.join(class_dir, filename)
            try:
                image = images.read_ppm(file_path)
            except images.ImageFormatError as err:
                raise DatasetError(file_path, err.reason) from err

            if extent is None:
                extent = image.shape[1:]
            elif image.shape[1:] != extent:
                raise DatasetError(
                    file_path, f"extent {image.shape[1:]} differs from "
                    f"{extent}")

            mask = None
            mask_path = file_path[:-len(IMAGE_SUFFIX)] + MASK_SUFFIX
            if os.path.exists(mask_path):
                try:
                    mask = images.read_pgm(mask_path) >= 0.5
                except images.ImageFormatError as err:
                    raise DatasetError(mask_path, err.reason) from err
            samples.append(SceneSample(image=image, label=label, mask=mask))

    if not samples:
        raise EmptyDatasetError(path)
    logging.info("Loaded %d samples in %d classes from %s", len(samples),
                 len(class_dirs), path)
    return samples


def write_dataset(samples: Sequence[SceneSample],
                  path,
                  class_names: Optional[Sequence[str]] = None) -> None:
    """Writes `samples` as class folders readable by `load_dataset`.

    Folder names must sort in label order; the default is `classNN`.
    """
    if class_names is None:
        class_names = [f"class{i:02d}" for i in range(num_classes(samples))]
    if list(class_names) != sorted(class_names):
        raise ValueError("Class names must sort in label order")

    counters = {}
    for sample in samples:
        class_dir = os.path.join(path, class_names[sample.label])
        os.makedirs(class_dir, exist_ok=True)
        index = counters.get(sample.label, 0)
        counters[sample.label] = index + 1

        stem = os.path.join(class_dir, f"{index:04d}")
        images.write_ppm(stem + IMAGE_SUFFIX, sample.image)
        if sample.mask is not None:
            images.write_pgm(stem + MASK_SUFFIX, sample.mask.astype(float))
    logging.info("Wrote %d samples to %s", len(samples), path)
