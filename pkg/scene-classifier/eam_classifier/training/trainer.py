"""Mini-batch training of one model on one train:test split."""
import dataclasses
from collections.abc import Sequence
from typing import Optional

import numpy as np
from absl import logging
from scene_common import events

from eam_classifier import multiscale
from eam_classifier.autodiff import backward, constant
from eam_classifier.configs import ModelConfig, TrainConfig
from eam_classifier.event_logger import BaseEventLogger
from eam_classifier.model import EamClassifier
from eam_classifier.training.augment import augment as augment_sample
from eam_classifier.training import datasets
from eam_classifier.training.metrics import CurvePoint, Metrics
from eam_classifier.training.optimizer import (
    AdamState,
    NonFiniteGradientError,
    adam_step,
)

EVAL_BATCH_SIZE = 32


class TrainingDivergedError(Exception):
    """Raised when the loss or a gradient stops being finite."""

    def __init__(self, epoch: int, parameter: Optional[str] = None):
        self.epoch = epoch
        self.parameter = parameter
        message = f"Training diverged at epoch {epoch}"
        if parameter is not None:
            message += f" (parameter '{parameter}')"
        super().__init__(message)


@dataclasses.dataclass
class TrainResult:
    model: EamClassifier
    # Held-out metrics: the test set when given, else the validation set.
    metrics: Optional[Metrics]
    curve: list[CurvePoint]
    train_accuracy: float


def evaluate(model: EamClassifier,
             samples: Sequence[datasets.SceneSample],
             batch_size: int = EVAL_BATCH_SIZE) -> tuple[float, Metrics]:
    """Mean cross-entropy and metrics of `model` on `samples`."""
    images, labels = datasets.stack(samples)
    logits = model.predict_logits(images, batch_size)
    loss = multiscale.cross_entropy(constant(logits), labels)
    metrics = Metrics.from_predictions(labels, logits.argmax(axis=1),
                                       model.config.num_classes)
    return float(loss.value), metrics


def _split_validation(samples, fraction, rng):
    if not fraction or len(samples) < 2:
        return list(samples), []
    order = rng.permutation(len(samples))
    n_val = min(len(samples) - 1, int(round(fraction * len(samples))))
    val = [samples[i] for i in sorted(order[:n_val])]
    train = [samples[i] for i in sorted(order[n_val:])]
    return train, val


def _check_dataset(samples, num_classes: int) -> None:
    if not samples:
        raise ValueError("Cannot train on an empty dataset")
    labels = {s.label for s in samples}
    if len(labels) < 2:
        raise ValueError(
            f"Training needs at least 2 classes, got {sorted(labels)}")
    multiscale.check_labels(sorted(labels), num_classes)


def train(dataset: Sequence[datasets.SceneSample],
          model_config: ModelConfig,
          train_config: TrainConfig,
          *,
          test_set: Optional[Sequence[datasets.SceneSample]] = None,
          event_logger: Optional[BaseEventLogger] = None,
          split: int = 0) -> TrainResult:
    """Trains a freshly initialised model with Adam.

    A `validation_fraction` of `dataset` is held out for the curves. The
    curve starts at epoch 0, evaluated before any update.

    Raises:
        TrainingDivergedError: when the loss or a gradient is not finite.
    """
    _check_dataset(dataset, model_config.num_classes)
    rng = np.random.default_rng(train_config.seed)
    train_set, val_set = _split_validation(dataset,
                                           train_config.validation_fraction,
                                           rng)
    model = EamClassifier(model_config,
                          seed=train_config.seed,
                          event_logger=event_logger)
    state = AdamState()
    logging.info("Split %d: training on %d samples, validating on %d", split,
                 len(train_set), len(val_set))

    def record(epoch, train_loss, train_acc):
        val_loss = val_acc = float("nan")
        if val_set:
            val_loss, val_metrics = evaluate(model, val_set)
            val_acc = val_metrics.overall_accuracy
        point = CurvePoint(epoch, train_loss, val_loss, train_acc, val_acc)
        logging.info(
            "Split %d epoch %d: train_loss=%.4f val_loss=%.4f "
            "train_acc=%.4f val_acc=%.4f", split, epoch, train_loss,
            val_loss, train_acc, val_acc)
        if event_logger is not None:
            event_logger.log(
                events.EpochCompleted(split=split,
                                      epoch=epoch,
                                      train_loss=train_loss,
                                      val_loss=val_loss,
                                      train_acc=train_acc,
                                      val_acc=val_acc))
        return point

    def diverged(epoch, parameter=None):
        if event_logger is not None:
            event_logger.log(
                events.TrainingDiverged(split=split,
                                        epoch=epoch,
                                        parameter=parameter))
        return TrainingDivergedError(epoch, parameter)

    initial_loss, initial_metrics = evaluate(model, train_set)
    curve = [record(0, initial_loss, initial_metrics.overall_accuracy)]

    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(len(train_set))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), train_config.batch_size):
            batch = [train_set[i] for i in order[start:start +
                                                 train_config.batch_size]]
            if train_config.augment:
                batch = [augment_sample(s, rng) for s in batch]
            images, labels = datasets.stack(batch)

            model.store.zero_grad()
            loss, logits = model.loss(images, labels)
            if not np.isfinite(loss.value):
                raise diverged(epoch)
            backward(loss)
            try:
                adam_step(model.store.trainable(), state, train_config.lr,
                          train_config.weight_decay)
            except NonFiniteGradientError as err:
                raise diverged(epoch, err.name) from err

            loss_sum += float(loss.value) * len(batch)
            correct += int((logits.value.argmax(axis=1) == labels).sum())

        curve.append(
            record(epoch, loss_sum / len(train_set), correct / len(train_set)))

    _, train_metrics = evaluate(model, train_set)
    held_out = test_set if test_set else val_set
    metrics = evaluate(model, held_out)[1] if held_out else None
    return TrainResult(model=model,
                       metrics=metrics,
                       curve=curve,
                       train_accuracy=train_metrics.overall_accuracy)
