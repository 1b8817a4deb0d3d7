"""Computation graph nodes and reverse-mode differentiation.

Ops build the graph eagerly: every op result is a `Node` holding its value,
references to its parents and a closure mapping the output gradient to the
parents' gradient contributions. `backward` walks the graph once in reverse
topological order, accumulating contributions additively.

Graph recording and kink recording are thread-local, so distinct graphs may
be built and differentiated on distinct threads.
"""
import contextlib
import threading
from collections.abc import Callable, Iterator, Sequence
from typing import Optional

import numpy as np

from eam_classifier import tensor_core

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


class GraphError(Exception):
    """Raised when backward cannot be run on a graph."""


class Node:
    """A value in the computation graph.

    Attributes:
        value: Array computed by the forward pass.
        grad: Gradient of the loss w.r.t. `value`, allocated lazily by
            `backward`; same shape as `value`.
        parents: Input nodes of the op that produced this node.
        backward_fn: Maps the output gradient to one gradient (or None) per
            parent.
        requires_grad: Whether any parameter is reachable through this node.
    """
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad",
                 "name")

    def __init__(
        self,
        value: np.ndarray,
        parents: Sequence["Node"] = (),
        backward_fn: Optional[BackwardFn] = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.value = value
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self):
        return (f"{self.__class__.__name__}(name={self.name!r}, "
                f"shape={self.shape}, requires_grad={self.requires_grad})")

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.value.dtype).reshape(
                self.value.shape)
        else:
            self.grad += grad

    def backward(self) -> None:
        backward(self)


class Parameter(Node):
    """A learnable leaf node; `trainable` is cleared for frozen layers."""
    __slots__ = ("trainable",)

    def __init__(self, value: np.ndarray, name: str, trainable: bool = True):
        super().__init__(value, requires_grad=True, name=name)
        self.trainable = trainable


def constant(value, name: Optional[str] = None) -> Node:
    """Wraps an input array; constants never receive gradients."""
    return Node(tensor_core.asarray(value), name=name)


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disables graph recording in the current thread."""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextlib.contextmanager
def record_kinks() -> Iterator[list[np.ndarray]]:
    """Collects the selection patterns of ReLU and max ops.

    Two evaluations whose patterns match lie on the same smooth piece of
    the function.
    """
    previous = getattr(_state, "kinks", None)
    patterns = []
    _state.kinks = patterns
    try:
        yield patterns
    finally:
        _state.kinks = previous


def note_kink(pattern: np.ndarray) -> None:
    patterns = getattr(_state, "kinks", None)
    if patterns is not None:
        patterns.append(pattern)


def make_node(
    value: np.ndarray,
    parents: Sequence[Node],
    backward_fn: BackwardFn,
    name: str,
) -> Node:
    """Creates an op result, recording the graph edge when needed."""
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Node(value, parents, backward_fn, requires_grad=True, name=name)
    return Node(value, name=name)


def topological_order(root: Node) -> list[Node]:
    """Nodes reachable from `root` that require grad, parents first."""
    order = []
    state = {}  # id -> 1 (on stack) or 2 (done)
    stack = [(root, 0)]
    state[id(root)] = 1

    while stack:
        node, index = stack.pop()
        if index < len(node.parents):
            stack.append((node, index + 1))
            parent = node.parents[index]
            if not parent.requires_grad:
                continue
            mark = state.get(id(parent))
            if mark == 1:
                raise GraphError(f"Cycle detected at node {parent!r}")
            if mark is None:
                state[id(parent)] = 1
                stack.append((parent, 0))
        else:
            state[id(node)] = 2
            order.append(node)

    return order


def backward(loss: Node) -> None:
    """Populates `grad` of every node that `loss` depends on.

    Intermediate gradients are reset first so that running backward twice
    on the same graph yields identical results; leaf gradients accumulate
    until they are cleared.
    """
    if loss.value.size != 1:
        raise GraphError(
            f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    order = topological_order(loss)
    for node in order:
        if node.parents:
            node.grad = None

    loss.accumulate(np.ones_like(loss.value))
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        contributions = node.backward_fn(node.grad)
        for parent, grad in zip(node.parents, contributions):
            if grad is not None and parent.requires_grad:
                parent.accumulate(grad)
