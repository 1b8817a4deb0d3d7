"""Events related to model training and evaluation."""
from typing import Optional

import scene_common.events.schemas as event_schemas


class TrainingEvent(event_schemas.Event):
    # Index of the train:test split the event belongs to.
    split: int = 0


class EpochCompleted(TrainingEvent):
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


class TrainingDiverged(TrainingEvent):
    epoch: int
    parameter: Optional[str] = None


class SplitCompleted(TrainingEvent):
    ratio: str
    strategy: str
    variant: str
    conv_features: bool
    accuracy: float


class AsppDilationClamped(event_schemas.Event):
    level: int
    branch: int
    requested_dilation: int
    effective_dilation: int
    extent: int
