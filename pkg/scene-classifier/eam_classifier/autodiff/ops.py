"""Differentiable wrappers around the tensor-core kernels.

Every op takes and returns `Node`s. Forward values come from
`eam_classifier.tensor_core`; each op attaches the matching backward rule.
"""
import dataclasses
from collections.abc import Sequence

import numpy as np

from eam_classifier import tensor_core
from eam_classifier.autodiff.node import Node, make_node, note_kink
from eam_classifier.tensor_core import Conv2dParams, DimensionError, MlpParams


def _raw_conv(p: Conv2dParams[Node]) -> Conv2dParams[np.ndarray]:
    return dataclasses.replace(p, weight=p.weight.value, bias=p.bias.value)


def conv2d(x: Node, p: Conv2dParams[Node]) -> Node:
    raw = _raw_conv(p)
    out = tensor_core.conv2d(x.value, raw)

    def backward_fn(grad):
        need_params = p.weight.requires_grad or p.bias.requires_grad
        return tensor_core.conv2d_backward(x.value,
                                           raw,
                                           grad,
                                           need_input=x.requires_grad,
                                           need_params=need_params)

    return make_node(out, (x, p.weight, p.bias), backward_fn, "conv2d")


def sigmoid(x: Node) -> Node:
    out = tensor_core.sigmoid(x.value)

    def backward_fn(grad):
        return (grad * out * (1.0 - out),)

    return make_node(out, (x,), backward_fn, "sigmoid")


def relu(x: Node) -> Node:
    mask = x.value > 0
    note_kink(mask)
    out = tensor_core.relu(x.value)

    def backward_fn(grad):
        return (grad * mask,)

    return make_node(out, (x,), backward_fn, "relu")


def channel_pool_avg(x: Node) -> Node:
    out = tensor_core.channel_pool_avg(x.value)
    n, c, h, w = x.shape

    def backward_fn(grad):
        return (np.broadcast_to(grad / (h * w), (n, c, h, w)).copy(),)

    return make_node(out, (x,), backward_fn, "channel_pool_avg")


def channel_pool_max(x: Node) -> Node:
    out = tensor_core.channel_pool_max(x.value)
    index = tensor_core.channel_pool_argmax(x.value)
    note_kink(index)
    n, c, h, w = x.shape

    def backward_fn(grad):
        dx = np.zeros((n, c, h * w), dtype=grad.dtype)
        np.put_along_axis(dx, index[..., None], grad.reshape(n, c, 1), axis=2)
        return (dx.reshape(n, c, h, w),)

    return make_node(out, (x,), backward_fn, "channel_pool_max")


def spatial_pool(x: Node) -> Node:
    out = tensor_core.spatial_pool(x.value)
    index = x.value.argmax(axis=1)
    note_kink(index)
    n, c, h, w = x.shape

    def backward_fn(grad):
        dx = np.broadcast_to(grad[:, 0:1] / c, (n, c, h, w)).copy()
        max_grad = np.zeros_like(dx)
        np.put_along_axis(max_grad, index[:, None], grad[:, 1:2], axis=1)
        return (dx + max_grad,)

    return make_node(out, (x,), backward_fn, "spatial_pool")


def global_avg_pool(x: Node) -> Node:
    out = tensor_core.global_avg_pool(x.value)
    n, c, h, w = x.shape

    def backward_fn(grad):
        return (np.broadcast_to(grad[:, :, None, None] / (h * w),
                                (n, c, h, w)).copy(),)

    return make_node(out, (x,), backward_fn, "global_avg_pool")


def max_pool2(x: Node) -> Node:
    out = tensor_core.max_pool2(x.value)
    note_kink(tensor_core.max_pool2_argmax(x.value))

    def backward_fn(grad):
        return (tensor_core.max_pool2_backward(x.value, grad),)

    return make_node(out, (x,), backward_fn, "max_pool2")


def eltwise_mul(a: Node, b: Node) -> Node:
    out = tensor_core.eltwise_mul(a.value, b.value)

    def backward_fn(grad):
        da = tensor_core.unbroadcast(grad * b.value, a.shape)
        db = tensor_core.unbroadcast(grad * a.value, b.shape)
        return da, db

    return make_node(out, (a, b), backward_fn, "eltwise_mul")


def eltwise_add(a: Node, b: Node) -> Node:
    out = tensor_core.eltwise_add(a.value, b.value)

    def backward_fn(grad):
        return (tensor_core.unbroadcast(grad, a.shape),
                tensor_core.unbroadcast(grad, b.shape))

    return make_node(out, (a, b), backward_fn, "eltwise_add")


def concat_channels(parts: Sequence[Node]) -> Node:
    if len(parts) == 1:
        return parts[0]
    out = tensor_core.concat_channels([p.value for p in parts])
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward_fn(grad):
        return tuple(grad[:, start:stop]
                     for start, stop in zip(bounds[:-1], bounds[1:]))

    return make_node(out, tuple(parts), backward_fn, "concat_channels")


def reshape(x: Node, shape: Sequence[int]) -> Node:
    out = x.value.reshape(shape)

    def backward_fn(grad):
        return (grad.reshape(x.shape),)

    return make_node(out, (x,), backward_fn, "reshape")


def linear(x: Node, weight: Node, bias: Node) -> Node:
    out = tensor_core.linear(x.value, weight.value, bias.value)

    def backward_fn(grad):
        return (grad @ weight.value.T, x.value.T @ grad, grad.sum(axis=0))

    return make_node(out, (x, weight, bias), backward_fn, "linear")


def mlp_shared(v: Node, p: MlpParams[Node]) -> Node:
    """w2 . relu(w1 . v + b1) + b2 over the channel vector of `v`."""
    n, c, h, w = v.shape
    if (h, w) != (1, 1):
        raise DimensionError("h", 1, h, op="mlp_shared")
    if c != p.in_width:
        raise DimensionError("c", p.in_width, c, op="mlp_shared")

    hidden = relu(linear(reshape(v, (n, c)), p.w1, p.b1))
    return reshape(linear(hidden, p.w2, p.b2), (n, c, 1, 1))


def scale(x: Node, factor: float) -> Node:
    out = x.value * factor

    def backward_fn(grad):
        return (grad * factor,)

    return make_node(out, (x,), backward_fn, "scale")


def sum_all(x: Node) -> Node:
    out = np.asarray(x.value.sum(), dtype=x.value.dtype)

    def backward_fn(grad):
        return (np.broadcast_to(grad, x.shape).copy(),)

    return make_node(out, (x,), backward_fn, "sum_all")


def weighted_sum(x: Node, weights: np.ndarray) -> Node:
    """sum(x * weights) with constant weights."""
    out = np.asarray((x.value * weights).sum(), dtype=x.value.dtype)

    def backward_fn(grad):
        return (grad * weights,)

    return make_node(out, (x,), backward_fn, "weighted_sum")


def select(x: Node, index: tuple[int, ...]) -> Node:
    """Picks a single entry of `x` as a scalar node."""
    out = np.asarray(x.value[index], dtype=x.value.dtype)

    def backward_fn(grad):
        dx = np.zeros_like(x.value)
        dx[index] = grad
        return (dx,)

    return make_node(out, (x,), backward_fn, "select")


def softmax_cross_entropy(logits: Node, labels: np.ndarray) -> Node:
    """Mean over the batch of -log softmax(logits)[label]."""
    n = logits.shape[0]
    rows = np.arange(n)
    log_probs = tensor_core.log_softmax_rows(logits.value)
    out = np.asarray(-log_probs[rows, labels].mean(), dtype=logits.value.dtype)

    def backward_fn(grad):
        dlogits = np.exp(log_probs)
        dlogits[rows, labels] -= 1.0
        return (dlogits * (grad / n),)

    return make_node(out, (logits,), backward_fn, "softmax_cross_entropy")
