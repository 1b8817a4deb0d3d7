"""Gradient-weighted class activation maps.

Maps are rectified and then divided by their maximum, so the peak is 1 and
uncovered regions stay at 0; no minimum is subtracted.
"""
import enum

import numpy as np
from absl import logging

from eam_classifier import multiscale
from eam_classifier.autodiff import backward, ops
from eam_classifier.configs import LEVELS
from eam_classifier.model import EamClassifier

DEFAULT_LEVEL = LEVELS[-1]


class CamTarget(enum.Enum):
    # Attention output S''_i.
    EAM = "eam"
    # Raw backbone tap S_i.
    TAP = "tap"


def upsample_nearest(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = plane.shape
    rows = (np.arange(height) * h) // height
    cols = (np.arange(width) * w) // width
    return plane[rows[:, None], cols[None, :]]


def cam_from_activation(activation: np.ndarray,
                        gradient: np.ndarray) -> np.ndarray:
    """relu(sum_c alpha_c * A_c) / max, alpha_c = spatial mean of dY/dA_c.

    `activation` and `gradient` are (c, h, w). A map without a positive
    entry is returned as zeros.
    """
    alpha = gradient.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(alpha, activation, axes=(0, 0)), 0.0)
    peak = cam.max()
    if peak <= 0:
        return np.zeros_like(cam)
    return cam / peak


def grad_cam(model: EamClassifier,
             image: np.ndarray,
             class_index: int,
             level: int = DEFAULT_LEVEL,
             target: CamTarget = CamTarget.EAM) -> np.ndarray:
    """Heatmap in [0, 1] at the input extent for one (3, H, W) image."""
    if level not in LEVELS:
        raise ValueError(f"Level must be one of {LEVELS}, got {level}")
    target = CamTarget(target)
    if target == CamTarget.EAM and not model.config.strategy.uses_eam:
        raise ValueError(f"Strategy {model.config.strategy.value} has no "
                         "attention output; use the 'tap' target")
    multiscale.check_labels([class_index], model.config.num_classes)

    if image.ndim == 3:
        image = image[None]
    trace = model.forward(image)
    index = LEVELS.index(level)
    if target == CamTarget.EAM:
        activation = trace.enriched[index]
    else:
        activation = trace.taps[index]

    score = ops.select(trace.logits, (0, class_index))
    backward(score)
    if activation.grad is None:
        logging.info("Class %d score does not depend on level %d", class_index,
                     level)
        gradient = np.zeros_like(activation.value)
    else:
        gradient = activation.grad
    model.store.zero_grad()

    cam = cam_from_activation(activation.value[0], gradient[0])
    return upsample_nearest(cam, image.shape[2], image.shape[3])
