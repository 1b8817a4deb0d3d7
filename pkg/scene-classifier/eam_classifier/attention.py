"""Channel/spatial attention, CBAM, ICBAM and the enhanced attention module.

The enhanced attention module (EAM) reduces a backbone tap to C' channels
with a 1x1 convolution, runs it through the attention block and, by default,
concatenates the reduced convolutional features with the attention output:

    I'  = f1x1(S)
    F'  = Channel(I') * I'          F'' = Spatial(F') * F'
    beta = Spatial(I') * I'         delta = F' * beta
    X   = F'' + delta
    out = [I'; X]

With the CBAM variant `X = F''`. Channel(I') is computed once and serves as
both the upper block's channel gate and the middle block's lambda.
"""
import dataclasses
from typing import Optional

from eam_classifier.autodiff import Node, ops
from eam_classifier.configs import AttentionVariant, EamConfig
from eam_classifier.params import ParamStore
from eam_classifier.tensor_core import Conv2dParams, DimensionError, MlpParams

SPATIAL_KERNEL = 7
SPATIAL_PADDING = 3
UPPER = "upper"
MIDDLE = "middle"


@dataclasses.dataclass
class EamParams:
    """Parameters of one EAM instance.

    `middle_channel_mlp` and `middle_spatial_conv` are only set when the
    middle block does not share the upper block's attention parameters.
    """
    reduce: Conv2dParams
    channel_mlp: MlpParams
    spatial_conv: Conv2dParams
    middle_channel_mlp: Optional[MlpParams] = None
    middle_spatial_conv: Optional[Conv2dParams] = None

    def __post_init__(self):
        if self.reduce.kernel_size != 1:
            raise DimensionError("h", 1, self.reduce.kernel_size,
                                 op="EamParams.reduce")
        if self.reduce.out_channels > self.reduce.in_channels:
            raise DimensionError("c", f"<= {self.reduce.in_channels}",
                                 self.reduce.out_channels,
                                 op="EamParams.reduce")
        for mlp in (self.channel_mlp, self.middle_channel_mlp):
            if mlp is not None and mlp.in_width != self.c_prime:
                raise DimensionError("c", self.c_prime, mlp.in_width,
                                     op="EamParams.channel_mlp")
        for conv in (self.spatial_conv, self.middle_spatial_conv):
            if conv is None:
                continue
            if (conv.in_channels, conv.out_channels) != (2, 1):
                raise DimensionError("c", (2, 1),
                                     (conv.in_channels, conv.out_channels),
                                     op="EamParams.spatial_conv")
            if conv.padding != conv.kernel_size // 2 or conv.stride != 1:
                raise ValueError("spatial_conv must preserve the extent")

    @property
    def c_prime(self) -> int:
        return self.reduce.out_channels

    @property
    def shares_attention(self) -> bool:
        return self.middle_channel_mlp is None

    def mlp(self, block: str = UPPER) -> MlpParams:
        if block == MIDDLE and self.middle_channel_mlp is not None:
            return self.middle_channel_mlp
        return self.channel_mlp

    def spatial(self, block: str = UPPER) -> Conv2dParams:
        if block == MIDDLE and self.middle_spatial_conv is not None:
            return self.middle_spatial_conv
        return self.spatial_conv


@dataclasses.dataclass
class IcbamTerms:
    """Intermediate tensors of the upper and middle blocks."""
    channel_map: Node
    f_prime: Node
    f_double_prime: Node
    beta: Node
    delta: Node
    x: Node


def build_eam_params(
    store: ParamStore,
    prefix: str,
    in_channels: int,
    cfg: EamConfig,
    zero_attention: bool = False,
) -> EamParams:
    """Creates the parameters of one EAM in `store` under `prefix`."""
    hidden = cfg.hidden_width

    def attention(name):
        mlp = store.mlp(f"{prefix}.{name}channel_mlp",
                        cfg.c_prime,
                        hidden,
                        zero_init=zero_attention)
        conv = store.conv(f"{prefix}.{name}spatial_conv",
                          2,
                          1,
                          SPATIAL_KERNEL,
                          padding=SPATIAL_PADDING,
                          zero_init=zero_attention)
        return mlp, conv

    reduce = store.conv(f"{prefix}.reduce", in_channels, cfg.c_prime, 1)
    channel_mlp, spatial_conv = attention("")
    middle_mlp = middle_conv = None
    if not cfg.share_attention and cfg.variant == AttentionVariant.ICBAM:
        middle_mlp, middle_conv = attention("middle_")

    return EamParams(reduce=reduce,
                     channel_mlp=channel_mlp,
                     spatial_conv=spatial_conv,
                     middle_channel_mlp=middle_mlp,
                     middle_spatial_conv=middle_conv)


def reduce_dim(inputs: Node, p: EamParams) -> Node:
    if inputs.shape[1] != p.reduce.in_channels:
        raise DimensionError("c", p.reduce.in_channels, inputs.shape[1],
                             op="reduce_dim")
    return ops.conv2d(inputs, p.reduce)


def channel_attention(x: Node, p: EamParams, block: str = UPPER) -> Node:
    """sigmoid(MLP(AvgP(x)) + MLP(MaxP(x))), shape (n, C', 1, 1)."""
    if x.shape[1] != p.c_prime:
        raise DimensionError("c", p.c_prime, x.shape[1],
                             op="channel_attention")
    mlp = p.mlp(block)
    avg_branch = ops.mlp_shared(ops.channel_pool_avg(x), mlp)
    max_branch = ops.mlp_shared(ops.channel_pool_max(x), mlp)
    return ops.sigmoid(ops.eltwise_add(avg_branch, max_branch))


def spatial_attention(t: Node, p: EamParams, block: str = UPPER) -> Node:
    """sigmoid(conv7x7([AvgP(t); MaxP(t)])), shape (n, 1, h, w)."""
    return ops.sigmoid(ops.conv2d(ops.spatial_pool(t), p.spatial(block)))


def cbam_forward(reduced: Node, p: EamParams) -> Node:
    """Sequential channel then spatial attention (upper block)."""
    return _upper_block(reduced, p, channel_attention(reduced, p))[1]


def _upper_block(reduced: Node, p: EamParams,
                 channel_map: Node) -> tuple[Node, Node]:
    f_prime = ops.eltwise_mul(channel_map, reduced)
    f_double_prime = ops.eltwise_mul(spatial_attention(f_prime, p), f_prime)
    return f_prime, f_double_prime


def icbam_terms(reduced: Node, p: EamParams) -> IcbamTerms:
    channel_map = channel_attention(reduced, p)
    f_prime, f_double_prime = _upper_block(reduced, p, channel_map)

    if p.shares_attention:
        lam = f_prime
    else:
        lam = ops.eltwise_mul(channel_attention(reduced, p, MIDDLE), reduced)
    beta = ops.eltwise_mul(spatial_attention(reduced, p, MIDDLE), reduced)
    delta = ops.eltwise_mul(lam, beta)
    x = ops.eltwise_add(f_double_prime, delta)

    return IcbamTerms(channel_map=channel_map,
                      f_prime=f_prime,
                      f_double_prime=f_double_prime,
                      beta=beta,
                      delta=delta,
                      x=x)


def icbam_forward(reduced: Node, p: EamParams) -> Node:
    """CBAM output plus the parallel channel x spatial term."""
    return icbam_terms(reduced, p).x


def eam_forward(tap: Node, p: EamParams, cfg: EamConfig) -> Node:
    reduced = reduce_dim(tap, p)
    if cfg.variant == AttentionVariant.CBAM:
        attended = cbam_forward(reduced, p)
    else:
        attended = icbam_forward(reduced, p)

    if cfg.include_conv_features:
        return ops.concat_channels([reduced, attended])
    return attended
