"""Horizontal flips and random crops resized back to the input extent."""
import dataclasses
from typing import Optional

import numpy as np

from eam_classifier.training.datasets import SceneSample

FLIP_PROBABILITY = 0.5
CROP_FRACTION = 0.875


def hflip(sample: SceneSample) -> SceneSample:
    mask = sample.mask[:, ::-1].copy() if sample.mask is not None else None
    return dataclasses.replace(sample,
                               image=sample.image[:, :, ::-1].copy(),
                               mask=mask)


def _nearest_indices(start: int, size: int, extent: int) -> np.ndarray:
    return start + (np.arange(extent) * size) // extent


def crop_resize(sample: SceneSample, top: int, left: int,
                size: tuple[int, int]) -> SceneSample:
    """Crops `size` at (top, left) and resizes back with nearest neighbour."""
    height, width = sample.extent
    rows = _nearest_indices(top, size[0], height)
    cols = _nearest_indices(left, size[1], width)
    image = sample.image[:, rows[:, None], cols[None, :]]
    mask = None
    if sample.mask is not None:
        mask = sample.mask[rows[:, None], cols[None, :]]
    return dataclasses.replace(sample, image=image, mask=mask)


def random_crop(sample: SceneSample,
                rng: np.random.Generator,
                fraction: float = CROP_FRACTION) -> SceneSample:
    height, width = sample.extent
    size = (max(1, round(fraction * height)), max(1, round(fraction * width)))
    top = int(rng.integers(0, height - size[0] + 1))
    left = int(rng.integers(0, width - size[1] + 1))
    return crop_resize(sample, top, left, size)


def augment(sample: SceneSample,
            rng: np.random.Generator,
            flip: Optional[bool] = None) -> SceneSample:
    """Random flip (forced when `flip` is given) then a random crop.

    The label is never changed; the mask follows the image.
    """
    if flip is None:
        flip = rng.random() < FLIP_PROBABILITY
    if flip:
        sample = hflip(sample)
    return random_crop(sample, rng)
