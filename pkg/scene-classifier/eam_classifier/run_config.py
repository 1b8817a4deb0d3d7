"""Command-line flags and the merged run configuration.

Every value is resolved per field as: explicit flag, then the `--config`
file (key=value lines, '#' comments), then the default. Flag names may be
written with dashes (`--no-conv-features`, `--tol-abs`).
"""
import os
from collections.abc import Sequence
from typing import Optional

from absl import flags
from pydantic import BaseModel, Field, validator

from eam_classifier import tensor_core
from eam_classifier.configs import (
    DESK_BACKBONE_CHANNELS,
    LEVELS,
    RESNET50_BACKBONE_CHANNELS,
    AttentionVariant,
    EamConfig,
    ModelConfig,
    Strategy,
    TrainConfig,
)
from eam_classifier.explain import CamTarget
from eam_classifier.training import protocol

DESK_PRESET = "desk"
RESNET50_PRESET = "resnet50"
_CHANNEL_PRESETS = {
    DESK_PRESET: DESK_BACKBONE_CHANNELS,
    RESNET50_PRESET: RESNET50_BACKBONE_CHANNELS,
}
_STRATEGY_NAMES = [s.value for s in Strategy]

# Flags whose RunConfig field has another name.
_FIELD_BY_FLAG = {"class": "class_index"}


class ConfigFileError(ValueError):

    def __init__(self, path, line_number: int, reason: str):
        self.path = os.fspath(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {reason}")


def define_flags(flag_values: flags.FlagValues = flags.FLAGS) -> None:
    """Declares the command-line flags on `flag_values`."""
    fv = flag_values
    flags.DEFINE_string("synthetic", None,
                        "Synthetic dataset as K,N,EXTENT (classes, samples "
                        "per class, image extent).", flag_values=fv)
    flags.DEFINE_string("data", None,
                        "Directory with one subdirectory of PPM images per "
                        "class.", flag_values=fv)
    flags.DEFINE_string("ratio", "50:50",
                        "Train:test ratio A:B, e.g. 10:90, 20:80 or 50:50.",
                        flag_values=fv)
    flags.DEFINE_enum("strategy", Strategy.EAM_ASPP_GAP.value,
                      _STRATEGY_NAMES, "Per-level component combination.",
                      flag_values=fv)
    flags.DEFINE_list("strategies", _STRATEGY_NAMES,
                      "Strategies of the ablation grid.", flag_values=fv)
    flags.DEFINE_enum("variant", AttentionVariant.ICBAM.value,
                      [v.value for v in AttentionVariant],
                      "Attention block variant.", flag_values=fv)
    flags.DEFINE_boolean("conv_features", True,
                         "Concatenate the reduced convolutional features "
                         "with the attention output.", flag_values=fv)
    flags.DEFINE_boolean("share_attention", True,
                         "Share channel MLP and spatial convolution between "
                         "the upper and middle blocks.", flag_values=fv)
    flags.DEFINE_integer("c_prime", 16, "Reduced channel count C'.",
                         flag_values=fv)
    flags.DEFINE_integer("mlp_reduction", 16, "Channel-MLP reduction ratio.",
                         flag_values=fv)
    flags.DEFINE_integer("aspp_out", None,
                         "ASPP branch and output width (default 2C').",
                         flag_values=fv)
    flags.DEFINE_string("backbone_channels", DESK_PRESET,
                        "Stage 2-5 widths: 'desk', 'resnet50' or four "
                        "comma-separated integers.", flag_values=fv)
    flags.DEFINE_boolean("freeze_backbone", False,
                         "Do not update backbone parameters.", flag_values=fv)
    flags.DEFINE_float("lr", 3e-3, "Adam learning rate.", flag_values=fv)
    flags.DEFINE_float("wd", 1e-4, "L2 weight decay.", flag_values=fv)
    flags.DEFINE_integer("batch", 16, "Mini-batch size.", flag_values=fv)
    flags.DEFINE_integer("epochs", 50, "Training epochs.", flag_values=fv)
    flags.DEFINE_integer("seed", 0, "Seed of data, splits and weights.",
                         flag_values=fv)
    flags.DEFINE_boolean("augment", True,
                         "Random flips and crops during training.",
                         flag_values=fv)
    flags.DEFINE_float("validation_fraction", 0.1,
                       "Share of the training split held out for the "
                       "curves.", flag_values=fv)
    flags.DEFINE_string("out", None, "Output directory.", flag_values=fv)
    flags.DEFINE_integer("jobs", 1, "Splits trained in parallel.",
                         flag_values=fv)
    flags.DEFINE_enum("precision", tensor_core.DEFAULT_PRECISION,
                      list(tensor_core.PRECISIONS), "Floating-point type.",
                      flag_values=fv)
    flags.DEFINE_string("config", None, "key=value configuration file.",
                        flag_values=fv)
    flags.DEFINE_string("model", None, "Checkpoint (.eamc) to load.",
                        flag_values=fv)
    flags.DEFINE_string("image", None, "PPM image for Grad-CAM.",
                        flag_values=fv)
    flags.DEFINE_integer("class", None, "Class index explained by Grad-CAM.",
                         flag_values=fv)
    flags.DEFINE_integer("level", LEVELS[-1], "Backbone level (2-5).",
                         flag_values=fv)
    flags.DEFINE_enum("target", CamTarget.EAM.value,
                      [t.value for t in CamTarget],
                      "Grad-CAM activation: attention output or raw tap.",
                      flag_values=fv)
    flags.DEFINE_list("op", [], "Gradient checks to run (default: all).",
                      flag_values=fv)
    flags.DEFINE_float("tol", 1e-4, "Relative gradient-check tolerance.",
                       flag_values=fv)
    flags.DEFINE_float("tol_abs", 0.0,
                       "Absolute gradient-check tolerance (0 disables).",
                       flag_values=fv)


def normalize_argv(argv: Sequence[str],
                   flag_values: flags.FlagValues = flags.FLAGS) -> list[str]:
    """Rewrites dashed flag names to the declared underscore names.

    `--no-foo-bar` becomes `--nofoo_bar` when `foo_bar` is a boolean flag.
    Arguments after a bare `--` are left untouched.
    """
    normalized = list(argv[:1])
    args = iter(argv[1:])
    for arg in args:
        if arg == "--":
            normalized.append(arg)
            normalized.extend(args)
            break
        if not arg.startswith("--"):
            normalized.append(arg)
            continue

        name, eq, value = arg[2:].partition("=")
        name = name.replace("-", "_")
        if name.startswith("no_") and name[3:] in flag_values and isinstance(
                flag_values[name[3:]], flags.BooleanFlag):
            name = "no" + name[3:]
        normalized.append(f"--{name}{eq}{value}")
    return normalized


def read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as err:
        raise ConfigFileError(path, 0, f"cannot read file ({err})") from err

    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not eq or not key:
            raise ConfigFileError(path, number, f"expected key=value: {line}")
        if key in values:
            raise ConfigFileError(path, number, f"duplicate key '{key}'")
        values[key] = value.strip()
    return values


def parse_synthetic(spec: str) -> tuple[int, int, int]:
    try:
        k, n, extent = (int(part) for part in spec.split(","))
    except ValueError as err:
        raise ValueError(
            f"--synthetic expects K,N,EXTENT integers, got '{spec}'") from err
    return k, n, extent


def parse_backbone_channels(spec: str) -> tuple[int, int, int, int]:
    if spec in _CHANNEL_PRESETS:
        return _CHANNEL_PRESETS[spec]
    try:
        channels = tuple(int(part) for part in spec.split(","))
    except ValueError as err:
        raise ValueError(f"Invalid backbone channels '{spec}'") from err
    if len(channels) != len(LEVELS):
        raise ValueError(f"Expected {len(LEVELS)} backbone widths, got "
                         f"{len(channels)}")
    return channels


def _split_list(value):
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class RunConfig(BaseModel):
    """Resolved settings of one command run."""
    synthetic: Optional[str] = None
    data: Optional[str] = None
    ratio: str = "50:50"
    strategy: Strategy = Strategy.EAM_ASPP_GAP
    strategies: list[Strategy] = Field(default_factory=lambda: list(Strategy))
    variant: AttentionVariant = AttentionVariant.ICBAM
    conv_features: bool = True
    share_attention: bool = True
    c_prime: int = Field(default=16, ge=1)
    mlp_reduction: int = Field(default=16, ge=1)
    aspp_out: Optional[int] = Field(default=None, ge=1)
    backbone_channels: str = DESK_PRESET
    freeze_backbone: bool = False
    lr: float = Field(default=3e-3, ge=0)
    wd: float = Field(default=1e-4, ge=0)
    batch: int = Field(default=16, ge=1)
    epochs: int = Field(default=50, ge=0)
    seed: int = 0
    augment: bool = True
    validation_fraction: float = Field(default=0.1, ge=0, lt=1)
    out: Optional[str] = None
    jobs: int = Field(default=1, ge=1)
    precision: str = tensor_core.DEFAULT_PRECISION
    model: Optional[str] = None
    image: Optional[str] = None
    class_index: Optional[int] = Field(default=None, alias="class", ge=0)
    level: int = LEVELS[-1]
    target: CamTarget = CamTarget.EAM
    op: list[str] = Field(default_factory=list)
    tol: float = Field(default=1e-4, gt=0)
    tol_abs: float = Field(default=0.0, ge=0)

    class Config:
        extra = "forbid"
        allow_population_by_field_name = True

    _split_strategies = validator("strategies", "op", pre=True,
                                  allow_reuse=True)(_split_list)

    @validator("synthetic")
    def _check_synthetic(cls, value):  # noqa: N805
        if value is not None:
            parse_synthetic(value)
        return value

    @validator("ratio")
    def _check_ratio(cls, value):  # noqa: N805
        protocol.parse_ratio(value)
        return value

    @validator("backbone_channels")
    def _check_channels(cls, value):  # noqa: N805
        parse_backbone_channels(value)
        return value

    @validator("precision")
    def _check_precision(cls, value):  # noqa: N805
        if value not in tensor_core.PRECISIONS:
            raise ValueError(f"precision must be one of "
                             f"{list(tensor_core.PRECISIONS)}")
        return value

    @validator("level")
    def _check_level(cls, value):  # noqa: N805
        if value not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        return value

    @classmethod
    def from_flags(cls,
                   flag_values: flags.FlagValues = flags.FLAGS) -> "RunConfig":
        """Merges explicit flags over the `--config` file over defaults.

        Raises:
            ConfigFileError: when the file cannot be parsed.
            pydantic.ValidationError: for unknown keys and invalid values.
        """
        values = {}
        if flag_values["config"].value:
            values.update(read_config_file(flag_values["config"].value))

        for flag_name in flag_values:
            if flag_name == "config" or not flag_values[flag_name].present:
                continue
            field = _FIELD_BY_FLAG.get(flag_name, flag_name)
            if field in cls.__fields__:
                values.pop(flag_name, None)
                values[field] = flag_values[flag_name].value
        return cls(**values)

    def model_config(self, num_classes: int, image_extent: int,
                     strategy: Optional[Strategy] = None,
                     variant: Optional[AttentionVariant] = None,
                     conv_features: Optional[bool] = None) -> ModelConfig:
        """ModelConfig for this run; the keyword arguments override it."""
        eam = EamConfig(
            c_prime=self.c_prime,
            mlp_reduction_r=self.mlp_reduction,
            variant=variant if variant is not None else self.variant,
            include_conv_features=(conv_features if conv_features is not None
                                   else self.conv_features),
            share_attention=self.share_attention)
        return ModelConfig(
            num_classes=num_classes,
            image_extent=image_extent,
            backbone_channels=parse_backbone_channels(self.backbone_channels),
            eam=eam,
            aspp_out=self.aspp_out,
            strategy=strategy if strategy is not None else self.strategy,
            freeze_backbone=self.freeze_backbone)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr,
                           weight_decay=self.wd,
                           batch_size=self.batch,
                           epochs=self.epochs,
                           seed=self.seed,
                           augment=self.augment,
                           validation_fraction=self.validation_fraction)
