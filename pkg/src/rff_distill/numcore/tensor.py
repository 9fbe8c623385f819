"""Dense float64 tensors and the gradient tape that differentiates them.

Every differentiable primitive (see :mod:`rff_distill.numcore.ops`) produces a new
:class:`Tensor` and, when any input requires gradients and recording is enabled,
attaches a :class:`TapeNode` describing how to route the output gradient back to its
inputs. :func:`backward` linearises the nodes reachable from a scalar loss into a
:class:`GradTape` and replays it in reverse.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

from ..core.errors import ShapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_GRAD_ENABLED: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "rff_grad_enabled", default=True
)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording inside the block (evaluation passes, frozen teachers)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


def grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


@dataclass(eq=False)
class TapeNode:
    op: str
    inputs: tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: TapeNode | None = None
        self.name = name

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        op = f" op={self.node.op}" if self.node else ""
        return f"Tensor(shape={self.shape}{label}{op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # Operator sugar; the primitives live in ops.
    def __add__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.div(other, self)

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, key: Any) -> "Tensor":
        from . import ops

        return ops.index(self, key)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        from . import ops

        return ops.transpose(self, axes or None)


def as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap a primitive's result, attaching a tape node when gradients are needed."""
    requires = grad_enabled() and any(tensor.requires_grad for tensor in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out.node = TapeNode(op=op, inputs=tuple(inputs), backward=backward_fn)
    return out


class GradTape:
    """Ordered record of the differentiable operations that produced an output.

    ``order`` is a topological ordering (inputs before outputs) of every tensor that
    requires gradients and is reachable from the output.
    """

    def __init__(self, output: Tensor, order: list[Tensor]) -> None:
        self.output = output
        self.order = order

    @classmethod
    def from_output(cls, output: Tensor) -> "GradTape":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.node is not None:
                for parent in reversed(tensor.node.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(output, order)

    @property
    def nodes(self) -> list[Tensor]:
        return [tensor for tensor in self.order if tensor.node is not None]

    @property
    def leaves(self) -> list[Tensor]:
        return [tensor for tensor in self.order if tensor.node is None]

    def ops(self) -> list[str]:
        return [tensor.node.op for tensor in self.nodes]  # type: ignore[union-attr]

    def replay(self) -> dict[int, np.ndarray]:
        """Run every node's backward exactly once, outputs before inputs."""
        grads: dict[int, np.ndarray] = {id(self.output): np.ones_like(self.output.data)}
        for tensor in reversed(self.order):
            node = tensor.node
            if node is None:
                continue
            grad = grads.pop(id(tensor), None)
            if grad is None:
                continue
            input_grads = node.backward(grad)
            for parent, parent_grad in zip(node.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.data.shape:
                    raise ShapeError(
                        f"{node.op} backward produced gradient {parent_grad.shape} "
                        f"for input of shape {parent.data.shape}"
                    )
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad
        return grads


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray]:
    """Differentiate a scalar loss.

    Every leaf that requires gradients and is reachable from ``loss`` gets a fresh
    ``.grad``. Tensors in ``params`` that the loss does not reach get zero gradients.
    Returns the gradients of ``params`` (or of all reached leaves) in order.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = GradTape.from_output(loss)
    grads = tape.replay() if loss.requires_grad else {}
    leaves = tape.leaves
    for leaf in leaves:
        grad = grads.get(id(leaf))
        leaf.grad = grad if grad is not None else np.zeros_like(leaf.data)
    if params is None:
        return [leaf.grad for leaf in leaves if leaf.requires_grad]  # type: ignore[misc]
    result: list[np.ndarray] = []
    for param in params:
        grad = grads.get(id(param))
        param.grad = grad if grad is not None else np.zeros_like(param.data)
        result.append(param.grad)
    return result
