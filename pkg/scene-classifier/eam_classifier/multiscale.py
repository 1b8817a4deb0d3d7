"""Backbone taps, ASPP enrichment, GAP aggregation and four-level fusion."""
import dataclasses
from collections.abc import Callable, Sequence
from typing import Optional

import numpy as np

from eam_classifier import attention
from eam_classifier.autodiff import Node, ops
from eam_classifier.configs import ASPP_BRANCHES, EXTENT_MULTIPLE, LEVELS
from eam_classifier.configs import ModelConfig
from eam_classifier.params import ParamStore
from eam_classifier.tensor_core import Conv2dParams, DimensionError

IMAGE_CHANNELS = 3

# Called as on_clamp(branch, requested_dilation, effective_dilation, extent).
ClampCallback = Callable[[int, int, int, int], None]


class LabelError(ValueError):

    def __init__(self, label, num_classes: int):
        self.label = label
        self.num_classes = num_classes
        super().__init__(
            f"Label {label} is outside the valid range [0, {num_classes}).")


@dataclasses.dataclass
class BackboneParams:
    """Stem plus four stages of two 3x3 convolutions.

    Stage i (2..5) starts with a stride-2 convolution; its second
    convolution's activation is the tap S_i.
    """
    stem: Conv2dParams
    stages: list[tuple[Conv2dParams, Conv2dParams]]

    def __post_init__(self):
        if len(self.stages) != len(LEVELS):
            raise ValueError(f"Expected {len(LEVELS)} backbone stages, got "
                             f"{len(self.stages)}")
        in_channels = self.stem.out_channels
        for level, (entry, body) in zip(LEVELS, self.stages):
            if entry.in_channels != in_channels:
                raise DimensionError("c", in_channels, entry.in_channels,
                                     op=f"backbone.stage{level}")
            if entry.out_channels != 2 * in_channels:
                raise ValueError(
                    f"Stage {level} must double its input channels "
                    f"({in_channels} -> {2 * in_channels}), got "
                    f"{entry.out_channels}")
            if entry.stride != 2 or body.stride != 1:
                raise ValueError(f"Stage {level} must enter with stride 2")
            in_channels = body.out_channels

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(body.out_channels for _, body in self.stages)


@dataclasses.dataclass
class AsppParams:
    branches: list[Conv2dParams]
    projection: Conv2dParams

    def __post_init__(self):
        if len(self.branches) != len(ASPP_BRANCHES):
            raise ValueError(f"Expected {len(ASPP_BRANCHES)} ASPP branches, "
                             f"got {len(self.branches)}")
        in_channels = self.branches[0].in_channels
        for branch in self.branches:
            if branch.in_channels != in_channels:
                raise DimensionError("c", in_channels, branch.in_channels,
                                     op="AsppParams.branches")
            if branch.kernel_size > 1 and branch.padding != branch.dilation:
                raise ValueError("ASPP branches must pad by their dilation")
        concat_width = sum(b.out_channels for b in self.branches)
        if self.projection.kernel_size != 1:
            raise ValueError("ASPP projection must be a 1x1 convolution")
        if self.projection.in_channels != concat_width:
            raise DimensionError("c", concat_width,
                                 self.projection.in_channels,
                                 op="AsppParams.projection")

    @property
    def in_channels(self) -> int:
        return self.branches[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.projection.out_channels


@dataclasses.dataclass
class HeadParams:
    weight: Node
    bias: Node

    def __post_init__(self):
        in_width, num_classes = self.weight.shape
        if self.bias.shape != (num_classes,):
            raise DimensionError("c", num_classes, self.bias.shape,
                                 op="HeadParams.bias")

    @property
    def in_width(self) -> int:
        return self.weight.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]


@dataclasses.dataclass
class FusionTrace:
    """Every intermediate of one forward pass, indexed like LEVELS."""
    taps: list[Node]
    enriched: list[Node]
    aspp: list[Optional[Node]]
    pooled: list[Node]
    fused: Node
    logits: Node


def build_backbone_params(store: ParamStore,
                          cfg: ModelConfig,
                          prefix: str = "backbone") -> BackboneParams:
    stem = store.conv(f"{prefix}.stem",
                      IMAGE_CHANNELS,
                      cfg.stem_channels,
                      3,
                      padding=1)
    stages = []
    in_channels = cfg.stem_channels
    for level, out_channels in zip(LEVELS, cfg.backbone_channels):
        name = f"{prefix}.stage{level}"
        entry = store.conv(f"{name}.conv1",
                           in_channels,
                           out_channels,
                           3,
                           stride=2,
                           padding=1)
        body = store.conv(f"{name}.conv2",
                          out_channels,
                          out_channels,
                          3,
                          padding=1)
        stages.append((entry, body))
        in_channels = out_channels
    return BackboneParams(stem=stem, stages=stages)


def build_aspp_params(store: ParamStore, prefix: str, in_channels: int,
                      width: int, out_channels: int) -> AsppParams:
    branches = []
    for index, (kernel, dilation) in enumerate(ASPP_BRANCHES):
        branches.append(
            store.conv(f"{prefix}.branch{index}",
                       in_channels,
                       width,
                       kernel,
                       padding=dilation if kernel > 1 else 0,
                       dilation=dilation))
    projection = store.conv(f"{prefix}.projection",
                            len(ASPP_BRANCHES) * width, out_channels, 1)
    return AsppParams(branches=branches, projection=projection)


def build_head_params(store: ParamStore,
                      in_width: int,
                      num_classes: int,
                      zero_init: bool = True,
                      prefix: str = "head") -> HeadParams:
    if zero_init:
        weight = store.zeros(f"{prefix}.weight", (in_width, num_classes))
    else:
        weight = store.he_normal(f"{prefix}.weight", (in_width, num_classes),
                                 in_width)
    return HeadParams(weight=weight,
                      bias=store.zeros(f"{prefix}.bias", (num_classes,)))


def backbone_forward(image: Node, p: BackboneParams) -> list[Node]:
    """Returns the taps [S2, S3, S4, S5] at strides 4, 8, 16 and 32."""
    if image.ndim != 4:
        raise DimensionError("rank", 4, image.ndim, op="backbone_forward")
    _, c, h, w = image.shape
    if c != p.stem.in_channels:
        raise DimensionError("c", p.stem.in_channels, c,
                             op="backbone_forward")
    for axis, extent in (("h", h), ("w", w)):
        if extent % EXTENT_MULTIPLE:
            raise DimensionError(axis, f"multiple of {EXTENT_MULTIPLE}",
                                 extent, op="backbone_forward")

    x = ops.max_pool2(ops.relu(ops.conv2d(image, p.stem)))
    taps = []
    for entry, body in p.stages:
        x = ops.relu(ops.conv2d(x, entry))
        x = ops.relu(ops.conv2d(x, body))
        taps.append(x)
    return taps


def effective_dilation(dilation: int, extent: int) -> int:
    """Dilation actually used on an extent-by-extent map.

    A dilation that reaches past the whole map is clamped to
    max(1, (extent - 1) // 2).
    """
    if dilation < extent:
        return dilation
    return max(1, (extent - 1) // 2)


def aspp_branch_outputs(x: Node,
                        p: AsppParams,
                        on_clamp: Optional[ClampCallback] = None) -> list[Node]:
    if x.shape[1] != p.in_channels:
        raise DimensionError("c", p.in_channels, x.shape[1],
                             op="aspp_forward")
    extent = min(x.shape[2], x.shape[3])
    outputs = []
    for index, branch in enumerate(p.branches):
        if branch.kernel_size > 1:
            dilation = effective_dilation(branch.dilation, extent)
            if dilation != branch.dilation:
                if on_clamp is not None:
                    on_clamp(index, branch.dilation, dilation, extent)
                branch = branch.with_dilation(dilation)
        outputs.append(ops.conv2d(x, branch))
    return outputs


def aspp_forward(x: Node,
                 p: AsppParams,
                 on_clamp: Optional[ClampCallback] = None) -> Node:
    """relu(proj1x1([b0(x); b1(x); b2(x); b3(x)])), extent preserving."""
    branches = aspp_branch_outputs(x, p, on_clamp)
    return ops.relu(ops.conv2d(ops.concat_channels(branches), p.projection))


def fuse_and_trace(
    taps: Sequence[Node],
    eams: Optional[Sequence[attention.EamParams]],
    aspps: Optional[Sequence[AsppParams]],
    head: HeadParams,
    cfg: ModelConfig,
    on_clamp: Optional[Callable[[int, int, int, int, int], None]] = None,
) -> FusionTrace:
    """Runs the per-level strategy and the classifier on backbone taps.

    `on_clamp` receives the level followed by the ASPP clamp arguments.
    """
    if len(taps) != len(LEVELS):
        raise ValueError(f"Expected {len(LEVELS)} levels, got {len(taps)}")
    strategy = cfg.strategy
    if strategy.uses_eam and (eams is None or len(eams) != len(LEVELS)):
        raise ValueError(f"Strategy {strategy.value} needs one EAM per level")
    if strategy.uses_aspp and (aspps is None or len(aspps) != len(LEVELS)):
        raise ValueError(f"Strategy {strategy.value} needs one ASPP per level")

    enriched, aspp_outputs, pooled = [], [], []
    for i, (level, tap) in enumerate(zip(LEVELS, taps)):
        features = tap
        if strategy.uses_eam:
            features = attention.eam_forward(tap, eams[i], cfg.eam)
        enriched.append(features)

        aspp_out = None
        if strategy.uses_aspp:
            level_clamp = None
            if on_clamp is not None:
                level_clamp = (lambda *args, level=level: on_clamp(
                    level, *args))
            aspp_out = aspp_forward(features, aspps[i], level_clamp)
            features = aspp_out
        aspp_outputs.append(aspp_out)
        pooled.append(ops.global_avg_pool(features))

    fused = ops.concat_channels(pooled)
    if fused.shape[1] != head.in_width:
        raise DimensionError("c", head.in_width, fused.shape[1],
                             op="fuse_and_classify")
    logits = ops.linear(fused, head.weight, head.bias)
    return FusionTrace(taps=list(taps),
                       enriched=enriched,
                       aspp=aspp_outputs,
                       pooled=pooled,
                       fused=fused,
                       logits=logits)


def fuse_and_classify(taps, eams, aspps, head, cfg, on_clamp=None) -> Node:
    return fuse_and_trace(taps, eams, aspps, head, cfg, on_clamp).logits


def check_labels(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise LabelError(labels, num_classes)
    bad = labels[(labels < 0) | (labels >= num_classes)]
    if bad.size:
        raise LabelError(int(bad[0]), num_classes)
    return labels


def cross_entropy(logits: Node, labels) -> Node:
    """Mean negative log-likelihood of `labels` under softmax(logits)."""
    n, num_classes = logits.shape
    labels = check_labels(labels, num_classes)
    if labels.shape[0] != n:
        raise DimensionError("n", n, labels.shape[0], op="cross_entropy")
    return ops.softmax_cross_entropy(logits, labels)
