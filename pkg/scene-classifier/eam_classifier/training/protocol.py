"""Five seeded, stratified train:test splits and their aggregation."""
from collections.abc import Callable, Sequence
from typing import Optional, Union

import numpy as np
from absl import logging
from scene_common import events

from eam_classifier.configs import ModelConfig, TrainConfig
from eam_classifier.event_logger import BaseEventLogger
from eam_classifier.training import trainer
from eam_classifier.training.datasets import SceneSample
from eam_classifier.training.metrics import Metrics
from eam_classifier.utils.threads import ExceptionThread

NUM_SPLITS = 5
RATIO_PRESETS = ("10:90", "20:80", "50:50")

FitFn = Callable[..., trainer.TrainResult]


class StratificationError(ValueError):

    def __init__(self, label: int, count: int):
        self.label = label
        self.count = count
        super().__init__(
            f"Class {label} has {count} sample(s); at least 2 are needed to "
            "put one on each side of a split")


def parse_ratio(ratio: Union[str, float]) -> float:
    """Training fraction of an `A:B` ratio (or of a number in (0, 1))."""
    if isinstance(ratio, str) and ":" in ratio:
        parts = ratio.split(":")
        try:
            a, b = (float(p) for p in parts)
        except ValueError as err:
            raise ValueError(f"Invalid ratio '{ratio}'") from err
        if len(parts) != 2 or a <= 0 or b <= 0:
            raise ValueError(f"Invalid ratio '{ratio}'")
        return a / (a + b)

    fraction = float(ratio)
    if not 0 < fraction < 1:
        raise ValueError(f"Training fraction must lie in (0, 1), got {ratio}")
    return fraction


def format_ratio(ratio: Union[str, float]) -> str:
    if isinstance(ratio, str) and ":" in ratio:
        return ratio
    percent = 100 * parse_ratio(ratio)
    return f"{percent:g}:{100 - percent:g}"


def stratified_split(
    samples: Sequence[SceneSample],
    ratio: Union[str, float],
    seed: int,
) -> tuple[list[SceneSample], list[SceneSample]]:
    """Per class, round(n_c * ratio) samples train and the rest test.

    Every class keeps at least one sample on each side. Both lists keep
    the input order.
    """
    fraction = parse_ratio(ratio)
    rng = np.random.default_rng(seed)
    labels = np.array([s.label for s in samples])

    train_indices = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        if len(members) < 2:
            raise StratificationError(int(label), len(members))
        n_train = min(max(round(len(members) * fraction), 1), len(members) - 1)
        train_indices.extend(rng.permutation(members)[:n_train])

    in_train = np.zeros(len(samples), dtype=bool)
    in_train[train_indices] = True
    train = [s for s, keep in zip(samples, in_train) if keep]
    test = [s for s, keep in zip(samples, in_train) if not keep]
    return train, test


def run_split(dataset: Sequence[SceneSample],
              ratio: Union[str, float],
              split: int,
              train_config: TrainConfig,
              model_config: ModelConfig,
              fit_fn: FitFn = trainer.train,
              event_logger: Optional[BaseEventLogger] = None
             ) -> trainer.TrainResult:
    """Trains and evaluates split `split`, seeded with seed + split."""
    seed = train_config.seed + split
    train_set, test_set = stratified_split(dataset, ratio, seed)
    split_config = train_config.copy(update={"seed": seed})
    result = fit_fn(train_set,
                    model_config,
                    split_config,
                    test_set=test_set,
                    event_logger=event_logger,
                    split=split)

    accuracy = result.metrics.overall_accuracy
    logging.info("Split %d (%s, %s/%s): accuracy %.4f", split,
                 format_ratio(ratio), model_config.strategy.value,
                 model_config.eam.variant.value, accuracy)
    if event_logger is not None:
        event_logger.log(
            events.SplitCompleted(
                split=split,
                ratio=format_ratio(ratio),
                strategy=model_config.strategy.value,
                variant=model_config.eam.variant.value,
                conv_features=model_config.eam.include_conv_features,
                accuracy=accuracy))
    return result


def _run_parallel(run: Callable[[int], trainer.TrainResult], num_splits: int,
                  jobs: int) -> list[trainer.TrainResult]:
    results = {}
    for first in range(0, num_splits, jobs):
        threads = {
            split: ExceptionThread(target=run, args=(split,))
            for split in range(first, min(first + jobs, num_splits))
        }
        for thread in threads.values():
            thread.start()
        for split, thread in threads.items():
            thread.join()
            if thread.exception is not None:
                raise thread.exception
            results[split] = thread.result
    return [results[split] for split in sorted(results)]


def five_split_protocol(dataset: Sequence[SceneSample],
                        ratio: Union[str, float],
                        train_config: TrainConfig,
                        model_config: ModelConfig,
                        *,
                        fit_fn: FitFn = trainer.train,
                        jobs: int = 1,
                        num_splits: int = NUM_SPLITS,
                        event_logger: Optional[BaseEventLogger] = None
                       ) -> Metrics:
    """Mean and population std of the test accuracy over seeded splits.

    With `jobs > 1` splits train on separate threads; the result does not
    depend on the number of jobs.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be positive, got {jobs}")

    def run(split):
        return run_split(dataset, ratio, split, train_config, model_config,
                         fit_fn, event_logger)

    if jobs == 1:
        results = [run(split) for split in range(num_splits)]
    else:
        results = _run_parallel(run, num_splits, jobs)

    metrics = Metrics.pooled([r.metrics for r in results])
    logging.info("%d splits at %s: %.4f ± %.4f", num_splits,
                 format_ratio(ratio), metrics.mean, metrics.std)
    return metrics
