"""The multi-level attention scene classifier."""
import threading
from typing import Optional, Union

import numpy as np
from absl import logging
from scene_common import events

from eam_classifier import attention, multiscale, tensor_core
from eam_classifier.autodiff import Node, constant, no_grad
from eam_classifier.configs import LEVELS, ModelConfig
from eam_classifier.event_logger import BaseEventLogger
from eam_classifier.params import ParamStore

BACKBONE_PREFIX = "backbone"
DEFAULT_PREDICT_BATCH = 32


class EamClassifier:
    """Backbone, per-level EAM and ASPP, and the fused linear head.

    Which components exist follows `config.strategy`: a GAP-only model has
    no EAM or ASPP parameters. Parameters live in one `ParamStore` whose
    names are stable across runs with the same config.
    """

    def __init__(self,
                 config: ModelConfig,
                 seed: int = 0,
                 zero_head: bool = True,
                 zero_attention: bool = False,
                 event_logger: Optional[BaseEventLogger] = None):
        self.config = config
        self.seed = seed
        self.event_logger = event_logger
        self.store = ParamStore(np.random.default_rng(seed))

        self.backbone = multiscale.build_backbone_params(
            self.store, config, prefix=BACKBONE_PREFIX)

        self.eams: Optional[list[attention.EamParams]] = None
        if config.strategy.uses_eam:
            self.eams = [
                attention.build_eam_params(
                    self.store,
                    f"eam{level}",
                    config.level_input_channels(level),
                    config.eam,
                    zero_attention=zero_attention) for level in LEVELS
            ]

        self.aspps: Optional[list[multiscale.AsppParams]] = None
        if config.strategy.uses_aspp:
            self.aspps = [
                multiscale.build_aspp_params(self.store, f"aspp{level}",
                                             config.enriched_channels(level),
                                             config.aspp_width,
                                             config.aspp_width)
                for level in LEVELS
            ]

        self.head = multiscale.build_head_params(self.store,
                                                 config.fused_width,
                                                 config.num_classes,
                                                 zero_init=zero_head)

        self._clamp_lock = threading.Lock()
        self._clamps_seen = set()

        if config.freeze_backbone:
            self.freeze_backbone()

        logging.info(
            "Built %s model with %d tensors (%d values), strategy=%s, "
            "variant=%s", config.backbone_channels, len(self.store),
            self.store.num_values(), config.strategy.value,
            config.eam.variant.value)

    @classmethod
    def build(cls, config: ModelConfig, seed: int = 0, **kwargs):
        return cls(config, seed=seed, **kwargs)

    def _on_clamp(self, level, branch, requested, effective, extent):
        key = (level, branch, extent)
        with self._clamp_lock:
            if key in self._clamps_seen:
                return
            self._clamps_seen.add(key)

        logging.warning(
            "ASPP level %d branch %d: dilation %d clamped to %d on a %dx%d "
            "map", level, branch, requested, effective, extent, extent)
        if self.event_logger is not None:
            self.event_logger.log(
                events.AsppDilationClamped(level=level,
                                           branch=branch,
                                           requested_dilation=requested,
                                           effective_dilation=effective,
                                           extent=extent))

    def _as_node(self, images: Union[np.ndarray, Node]) -> Node:
        if isinstance(images, Node):
            return images
        images = tensor_core.check_tensor4(tensor_core.asarray(images),
                                           "EamClassifier")
        expected = self.config.image_extent
        if images.shape[2:] != (expected, expected):
            raise tensor_core.DimensionError("h", (expected, expected),
                                             images.shape[2:],
                                             op="EamClassifier.forward")
        return constant(images, name="images")

    def forward(self, images: Union[np.ndarray, Node]) -> multiscale.FusionTrace:
        taps = multiscale.backbone_forward(self._as_node(images),
                                           self.backbone)
        return multiscale.fuse_and_trace(taps, self.eams, self.aspps,
                                         self.head, self.config,
                                         self._on_clamp)

    def logits(self, images) -> Node:
        return self.forward(images).logits

    def loss(self, images, labels) -> tuple[Node, Node]:
        """Returns (mean cross-entropy, logits)."""
        logits = self.logits(images)
        return multiscale.cross_entropy(logits, labels), logits

    def predict_logits(self,
                       images: np.ndarray,
                       batch_size: int = DEFAULT_PREDICT_BATCH) -> np.ndarray:
        outputs = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                outputs.append(
                    self.logits(images[start:start + batch_size]).value)
        if not outputs:
            return np.zeros((0, self.config.num_classes))
        return np.concatenate(outputs, axis=0)

    def predict(self,
                images: np.ndarray,
                batch_size: int = DEFAULT_PREDICT_BATCH) -> np.ndarray:
        return self.predict_logits(images, batch_size).argmax(axis=1)

    def state_dict(self) -> dict[str, np.ndarray]:
        return self.store.state_dict()

    def load_state_dict(self, state) -> None:
        self.store.load_state_dict(state)

    def freeze_backbone(self) -> int:
        return self.store.freeze(f"{BACKBONE_PREFIX}.")
