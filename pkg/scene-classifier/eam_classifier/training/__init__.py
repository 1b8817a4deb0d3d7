# noqa: D104
from eam_classifier.training.augment import augment  # noqa: I001
from eam_classifier.training.datasets import (
    DatasetError,
    EmptyDatasetError,
    SceneSample,
    load_dataset,
    synth_dataset,
    write_dataset,
)
from eam_classifier.training.metrics import Metrics
from eam_classifier.training.optimizer import (
    AdamState,
    NonFiniteGradientError,
    adam_step,
)
from eam_classifier.training.protocol import (
    StratificationError,
    five_split_protocol,
    stratified_split,
)
from eam_classifier.training.trainer import (
    TrainingDivergedError,
    TrainResult,
    train,
)
