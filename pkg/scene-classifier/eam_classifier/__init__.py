# noqa: D104
from eam_classifier.configs import (
    AttentionVariant,
    EamConfig,
    ModelConfig,
    Strategy,
    TrainConfig,
)
from eam_classifier.event_logger import (
    BaseEventLogger,
    FileEventLogger,
    LoggingEventLogger,
)
from eam_classifier.model import EamClassifier
from eam_classifier.checkpoint import load_checkpoint, save_checkpoint
from eam_classifier.explain import CamTarget, grad_cam
