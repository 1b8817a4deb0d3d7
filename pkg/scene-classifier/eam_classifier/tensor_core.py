"""Rank-4 tensors and the primitive numeric kernels of the classifier.

Tensors are plain `numpy.ndarray` objects laid out as (batch, channel,
height, width), row-major and channel-major within a sample. Every kernel in
this module is a pure function of its arguments; the differentiable wrappers
in `eam_classifier.autodiff.ops` pair them with their backward rules.

The numeric precision is a process-wide switch: gradient checks run in
float64, training defaults to float32.
"""
import contextlib
import dataclasses
from collections.abc import Iterator, Sequence
from typing import Generic, TypeVar

import numpy as np
from absl import logging

PRECISIONS = {
    "float32": np.float32,
    "float64": np.float64,
}
DEFAULT_PRECISION = "float32"
AXIS_NAMES = ("n", "c", "h", "w")

# Rank-4 (n, c, h, w) array.
Tensor4 = np.ndarray

T = TypeVar("T")

_precision = DEFAULT_PRECISION


class DimensionError(ValueError):
    """Raised when a tensor extent does not match what an op expects."""

    def __init__(self, axis, expected, actual, op: str = ""):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        self.op = op
        prefix = f"{op}: " if op else ""
        super().__init__(f"{prefix}dimension mismatch on axis '{axis}': "
                         f"expected {expected}, got {actual}")


class BroadcastError(DimensionError):
    """Raised when two shapes cannot be combined elementwise."""

    def __init__(self, shape_a, shape_b, axis: str, op: str = ""):
        index = AXIS_NAMES.index(axis)
        super().__init__(axis, shape_a[index], shape_b[index], op=op)
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)

    def __str__(self):
        return (f"{self.op}: shapes {self.shape_a} and {self.shape_b} are not "
                f"broadcastable on axis '{self.axis}'")


def set_precision(name: str) -> None:
    """Selects the floating point precision used by every new tensor."""
    global _precision
    if name not in PRECISIONS:
        raise ValueError(f"Unknown precision '{name}'. "
                         f"Available: {', '.join(PRECISIONS)}")
    if name != _precision:
        logging.info("Numeric precision set to %s", name)
    _precision = name


def get_precision() -> str:
    return _precision


def get_dtype() -> type:
    return PRECISIONS[_precision]


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switches the process-wide precision."""
    previous = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


def asarray(x) -> np.ndarray:
    """Converts `x` to an array of the configured precision."""
    return np.asarray(x, dtype=get_dtype())


def check_tensor4(x: np.ndarray, op: str = "") -> np.ndarray:
    """Validates the rank-4 tensor invariants and returns `x`."""
    if x.ndim != 4:
        raise DimensionError("rank", 4, x.ndim, op=op)
    for axis, extent in zip(AXIS_NAMES, x.shape):
        if extent < 1:
            raise DimensionError(axis, ">= 1", extent, op=op)
    return x


@dataclasses.dataclass
class Conv2dParams(Generic[T]):
    """Weights and geometry of a 2D convolution.

    `weight` has shape (out_channels, in_channels, k, k) and `bias` shape
    (out_channels,). The container type is either `np.ndarray` (for the raw
    kernels of this module) or an autodiff node (for training).
    """
    weight: T
    bias: T
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        shape = tuple(self.weight.shape)
        if len(shape) != 4:
            raise DimensionError("rank", 4, len(shape), op="Conv2dParams")
        if shape[2] != shape[3] or shape[2] < 1:
            raise ValueError(
                f"Conv2dParams: kernel must be square, got {shape[2:]}")
        if tuple(self.bias.shape) != (shape[0],):
            raise DimensionError("c", shape[0], tuple(self.bias.shape),
                                 op="Conv2dParams.bias")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ValueError(
                f"Invalid convolution geometry: stride={self.stride}, "
                f"padding={self.padding}, dilation={self.dilation}")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def effective_kernel(self) -> int:
        return self.dilation * (self.kernel_size - 1) + 1

    def output_extent(self, size: int, axis: str = "h") -> int:
        padded = size + 2 * self.padding
        if self.effective_kernel > padded:
            raise DimensionError(
                axis, f"padded extent >= {self.effective_kernel}", padded,
                op="conv2d")
        return (padded - self.effective_kernel) // self.stride + 1

    def with_dilation(self, dilation: int) -> "Conv2dParams[T]":
        """Same weights with a different dilation, padding kept equal to it
        for k > 1."""
        padding = dilation if self.kernel_size > 1 else self.padding
        return dataclasses.replace(self, dilation=dilation, padding=padding)


@dataclasses.dataclass
class MlpParams(Generic[T]):
    """One-hidden-layer perceptron shared by the pooled branches.

    `w1` is (c_in, hidden), `w2` is (hidden, c_in); hidden = c_in / r.
    """
    w1: T
    b1: T
    w2: T
    b2: T

    def __post_init__(self):
        c_in, hidden = tuple(self.w1.shape)
        if hidden < 1:
            raise DimensionError("c", ">= 1", hidden, op="MlpParams.w1")
        if tuple(self.w2.shape) != (hidden, c_in):
            raise DimensionError("c", (hidden, c_in), tuple(self.w2.shape),
                                 op="MlpParams.w2")
        if tuple(self.b1.shape) != (hidden,):
            raise DimensionError("c", hidden, tuple(self.b1.shape),
                                 op="MlpParams.b1")
        if tuple(self.b2.shape) != (c_in,):
            raise DimensionError("c", c_in, tuple(self.b2.shape),
                                 op="MlpParams.b2")

    @property
    def in_width(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[1]

    @property
    def reduction(self) -> int:
        return self.in_width // self.hidden_width


# Convolution


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if not padding:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _tap_reaches_input(start: int, stride: int, count: int, padding: int,
                       size: int) -> bool:
    """Whether any of `count` strided positions lands on a real pixel."""
    first = max(0, -(-(padding - start) // stride))
    return first < count and start + stride * first <= padding + size - 1


def _kernel_taps(p: Conv2dParams, h: int, w: int, out_h: int, out_w: int):
    """Yields (ki, kj, rows, cols) for every tap that reads real pixels.

    Taps that only ever read zero padding contribute nothing and are
    skipped, which keeps large dilations on small maps cheap.
    """
    for ki in range(p.kernel_size):
        r0 = ki * p.dilation
        if not _tap_reaches_input(r0, p.stride, out_h, p.padding, h):
            continue
        rows = slice(r0, r0 + p.stride * (out_h - 1) + 1, p.stride)
        for kj in range(p.kernel_size):
            c0 = kj * p.dilation
            if not _tap_reaches_input(c0, p.stride, out_w, p.padding, w):
                continue
            cols = slice(c0, c0 + p.stride * (out_w - 1) + 1, p.stride)
            yield ki, kj, rows, cols


def conv2d(x: Tensor4, p: Conv2dParams[np.ndarray]) -> Tensor4:
    """Zero-padded cross-correlation plus bias."""
    check_tensor4(x, "conv2d")
    if x.shape[1] != p.in_channels:
        raise DimensionError("c", p.in_channels, x.shape[1], op="conv2d")

    n, _, h, w = x.shape
    out_h = p.output_extent(h, "h")
    out_w = p.output_extent(w, "w")
    weight = np.asarray(p.weight)
    xp = _pad(x, p.padding)

    out = np.zeros((n, out_h, out_w, p.out_channels), dtype=x.dtype)
    for ki, kj, rows, cols in _kernel_taps(p, h, w, out_h, out_w):
        out += np.tensordot(xp[:, :, rows, cols],
                            weight[:, :, ki, kj],
                            axes=([1], [1]))

    out = out.transpose(0, 3, 1, 2) + np.asarray(p.bias).reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv2d_backward(
    x: Tensor4,
    p: Conv2dParams[np.ndarray],
    grad_out: Tensor4,
    need_input: bool = True,
    need_params: bool = True,
):
    """Gradients of conv2d w.r.t. input, weight and bias.

    Returns a tuple (dx, dweight, dbias); entries that were not requested
    are None.
    """
    n, _, h, w = x.shape
    _, _, out_h, out_w = grad_out.shape
    weight = np.asarray(p.weight)
    xp = _pad(x, p.padding)

    dxp = np.zeros_like(xp) if need_input else None
    dweight = np.zeros_like(weight) if need_params else None

    for ki, kj, rows, cols in _kernel_taps(p, h, w, out_h, out_w):
        if need_params:
            dweight[:, :, ki, kj] = np.tensordot(grad_out,
                                                 xp[:, :, rows, cols],
                                                 axes=([0, 2, 3], [0, 2, 3]))
        if need_input:
            dxp[:, :, rows, cols] += np.tensordot(
                grad_out, weight[:, :, ki, kj],
                axes=([1], [0])).transpose(0, 3, 1, 2)

    dx = None
    if need_input:
        pad = p.padding
        dx = np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w])
    dbias = grad_out.sum(axis=(0, 2, 3)) if need_params else None

    return dx, dweight, dbias


# Elementwise


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def broadcast_shape(shape_a: Sequence[int],
                    shape_b: Sequence[int],
                    op: str = "") -> tuple[int, ...]:
    """Shape of an elementwise combination of two rank-4 tensors.

    Both tensors share the batch extent; on the channel and spatial axes
    either extent may be 1.
    """
    if len(shape_a) != 4 or len(shape_b) != 4:
        raise DimensionError("rank", 4, (len(shape_a), len(shape_b)), op=op)
    if shape_a[0] != shape_b[0]:
        raise BroadcastError(shape_a, shape_b, "n", op=op)

    out = [shape_a[0]]
    for axis, a, b in zip(AXIS_NAMES[1:], shape_a[1:], shape_b[1:]):
        if a != b and 1 not in (a, b):
            raise BroadcastError(shape_a, shape_b, axis, op=op)
        out.append(max(a, b))
    return tuple(out)


def eltwise_mul(a: Tensor4, b: Tensor4) -> Tensor4:
    broadcast_shape(a.shape, b.shape, "eltwise_mul")
    return np.multiply(a, b)


def eltwise_add(a: Tensor4, b: Tensor4) -> Tensor4:
    broadcast_shape(a.shape, b.shape, "eltwise_add")
    return np.add(a, b)


def unbroadcast(grad: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Sums `grad` over the axes along which `shape` was broadcast."""
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape))
                 if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# Pooling


def channel_pool_avg(x: Tensor4) -> Tensor4:
    """Mean over each channel's spatial plane, shape (n, c, 1, 1)."""
    return check_tensor4(x, "channel_pool_avg").mean(axis=(2, 3),
                                                     keepdims=True)


def channel_pool_max(x: Tensor4) -> Tensor4:
    """Max over each channel's spatial plane, shape (n, c, 1, 1)."""
    return check_tensor4(x, "channel_pool_max").max(axis=(2, 3), keepdims=True)


def channel_pool_argmax(x: Tensor4) -> np.ndarray:
    """Flat spatial index of the first maximum of every (n, c) plane."""
    n, c, h, w = x.shape
    return x.reshape(n, c, h * w).argmax(axis=2)


def spatial_pool(x: Tensor4) -> Tensor4:
    """Per-pixel [mean; max] over channels, shape (n, 2, h, w)."""
    check_tensor4(x, "spatial_pool")
    return np.concatenate(
        [x.mean(axis=1, keepdims=True),
         x.max(axis=1, keepdims=True)], axis=1)


def global_avg_pool(x: Tensor4) -> np.ndarray:
    """Per (n, c) spatial mean; returns an (n, c) matrix."""
    return check_tensor4(x, "global_avg_pool").mean(axis=(2, 3))


def _pool_windows(x: Tensor4) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2,
                     2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2,
                                                            w // 2, 4)


def _check_even(x: Tensor4, op: str) -> None:
    check_tensor4(x, op)
    for axis, extent in zip("hw", x.shape[2:]):
        if extent % 2:
            raise DimensionError(axis, "even extent", extent, op=op)


def max_pool2(x: Tensor4) -> Tensor4:
    """2x2 window, stride 2 maximum."""
    _check_even(x, "max_pool2")
    return _pool_windows(x).max(axis=-1)


def max_pool2_argmax(x: Tensor4) -> np.ndarray:
    """Index (row-major, 0..3) of the first maximum inside each window."""
    _check_even(x, "max_pool2")
    return _pool_windows(x).argmax(axis=-1)


def max_pool2_backward(x: Tensor4, grad_out: Tensor4) -> Tensor4:
    n, c, h, w = x.shape
    index = max_pool2_argmax(x)
    windows = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(windows, index[..., None], grad_out[..., None], axis=-1)
    return windows.reshape(n, c, h // 2, w // 2, 2,
                           2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


# Dense and channel ops


def mlp_shared(v: Tensor4, p: MlpParams[np.ndarray]) -> Tensor4:
    """w2 . relu(w1 . v + b1) + b2 applied to each (c,) vector of `v`."""
    check_tensor4(v, "mlp_shared")
    n, c, h, w = v.shape
    if (h, w) != (1, 1):
        raise DimensionError("h", 1, h, op="mlp_shared")
    if c != p.in_width:
        raise DimensionError("c", p.in_width, c, op="mlp_shared")
    hidden = relu(v.reshape(n, c) @ p.w1 + p.b1)
    return (hidden @ p.w2 + p.b2).reshape(n, c, 1, 1)


def concat_channels(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenates along axis 1; every other extent must agree.

    Works on rank-4 tensors and on (n, c) feature matrices.
    """
    if not parts:
        raise ValueError("concat_channels: at least one part is required")
    first = parts[0].shape
    for part in parts[1:]:
        if part.ndim != len(first):
            raise DimensionError("rank", len(first), part.ndim,
                                 op="concat_channels")
        for i, (a, b) in enumerate(zip(first, part.shape)):
            if i != 1 and a != b:
                raise DimensionError(AXIS_NAMES[i], a, b,
                                     op="concat_channels")
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=1)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Row-vector affine map x . W + b."""
    if x.shape[1] != weight.shape[0]:
        raise DimensionError("c", weight.shape[0], x.shape[1], op="linear")
    return x @ weight + bias


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise DimensionError("c", ">= 2 classes", logits.shape,
                             op="softmax_rows")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
