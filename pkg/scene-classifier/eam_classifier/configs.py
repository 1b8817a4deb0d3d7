"""Structural and training hyperparameters.

The models are pydantic so that invalid combinations are rejected when a
configuration is built (from flags, a config file or a checkpoint) rather
than deep inside a forward pass. `ModelConfig.json()` is the config block
stored in checkpoints.
"""
import enum
from typing import Optional

from pydantic import BaseModel, Field, root_validator, validator

DESK_BACKBONE_CHANNELS = (16, 32, 64, 128)
RESNET50_BACKBONE_CHANNELS = (256, 512, 1024, 2048)
ASPP_BRANCHES = ((1, 1), (3, 6), (3, 12), (3, 18))  # (kernel, dilation)
LEVELS = (2, 3, 4, 5)
EXTENT_MULTIPLE = 32
MIN_HIDDEN_WIDTH = 4


class AttentionVariant(enum.Enum):
    ICBAM = "icbam"
    CBAM = "cbam"


class Strategy(enum.Enum):
    """Combination of components applied on every backbone level."""
    GAP = "gap"
    ASPP_GAP = "aspp+gap"
    EAM_GAP = "eam+gap"
    EAM_ASPP_GAP = "eam+aspp+gap"

    @property
    def uses_eam(self) -> bool:
        return self in (Strategy.EAM_GAP, Strategy.EAM_ASPP_GAP)

    @property
    def uses_aspp(self) -> bool:
        return self in (Strategy.ASPP_GAP, Strategy.EAM_ASPP_GAP)


class EamConfig(BaseModel):
    """Hyperparameters of the attention module shared by the four levels."""
    c_prime: int = Field(default=16, ge=1)
    mlp_reduction_r: int = Field(default=16, ge=1)
    variant: AttentionVariant = AttentionVariant.ICBAM
    include_conv_features: bool = True
    share_attention: bool = True

    class Config:
        extra = "forbid"

    @root_validator(skip_on_failure=True)
    def _check_reduction(cls, values):  # noqa: N805
        c_prime, r = values["c_prime"], values["mlp_reduction_r"]
        if c_prime < r or c_prime % r:
            raise ValueError(
                f"c_prime ({c_prime}) must be a multiple of, and not smaller "
                f"than, mlp_reduction_r ({r})")
        return values

    @property
    def hidden_width(self) -> int:
        """Channel-MLP hidden width, clamped to at least 4 units."""
        return max(self.c_prime // self.mlp_reduction_r,
                   min(MIN_HIDDEN_WIDTH, self.c_prime))

    @property
    def out_channels(self) -> int:
        factor = 2 if self.include_conv_features else 1
        return factor * self.c_prime


class ModelConfig(BaseModel):
    num_classes: int = Field(default=4, ge=2)
    image_extent: int = Field(default=64, ge=EXTENT_MULTIPLE)
    backbone_channels: tuple[int, int, int, int] = DESK_BACKBONE_CHANNELS
    eam: EamConfig = Field(default_factory=EamConfig)
    aspp_out: Optional[int] = Field(default=None, ge=1)
    strategy: Strategy = Strategy.EAM_ASPP_GAP
    freeze_backbone: bool = False

    class Config:
        extra = "forbid"

    @validator("image_extent")
    def _check_extent(cls, value):  # noqa: N805
        if value % EXTENT_MULTIPLE:
            raise ValueError(f"image_extent ({value}) must be divisible by "
                             f"{EXTENT_MULTIPLE}")
        return value

    @validator("backbone_channels")
    def _check_doubling(cls, value):  # noqa: N805
        if value[0] < 2 or value[0] % 2:
            raise ValueError("backbone_channels[0] must be an even number >= 2")
        for low, high in zip(value[:-1], value[1:]):
            if high != 2 * low:
                raise ValueError(
                    f"backbone_channels must double per stage, got {value}")
        return value

    @root_validator(skip_on_failure=True)
    def _check_reduced_width(cls, values):  # noqa: N805
        if values["strategy"].uses_eam:
            narrowest = min(values["backbone_channels"])
            if values["eam"].c_prime > narrowest:
                raise ValueError(
                    f"c_prime ({values['eam'].c_prime}) must not exceed the "
                    f"narrowest backbone tap ({narrowest})")
        return values

    @property
    def stem_channels(self) -> int:
        return self.backbone_channels[0] // 2

    @property
    def aspp_width(self) -> int:
        """Branch width B and projection width; 2C' unless overridden."""
        if self.aspp_out is not None:
            return self.aspp_out
        return 2 * self.eam.c_prime

    def level_input_channels(self, level: int) -> int:
        return self.backbone_channels[LEVELS.index(level)]

    def enriched_channels(self, level: int) -> int:
        """Width of a level's features entering ASPP (or GAP)."""
        if self.strategy.uses_eam:
            return self.eam.out_channels
        return self.level_input_channels(level)

    def pooled_width(self, level: int) -> int:
        if self.strategy.uses_aspp:
            return self.aspp_width
        return self.enriched_channels(level)

    @property
    def fused_width(self) -> int:
        return sum(self.pooled_width(level) for level in LEVELS)


class TrainConfig(BaseModel):
    lr: float = Field(default=3e-3, ge=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=16, ge=1)
    epochs: int = Field(default=50, ge=0)
    seed: int = 0
    augment: bool = True
    validation_fraction: float = Field(default=0.1, ge=0, lt=1)

    class Config:
        extra = "forbid"
