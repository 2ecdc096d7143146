"""
Reverse-mode Automatic Differentiation

A `Tensor` wraps a float64 numpy array. Every differentiable operation is a
`Function` subclass whose `apply` records its inputs on the output tensor;
`Tensor.backward` walks that record in reverse topological order.

Shapes are ordered [channel, height, width] with an optional leading batch
axis. Binary elementwise operations require identical shapes: the only
implicit broadcast is bias addition inside dense/convolution ops, and
anything else goes through an explicit `expand`.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.exceptions import GradientError, ShapeError


logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

# Per-thread so evaluation on one thread never disables recording on another
_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """
    Run forward passes without recording operations

    Example:
        with no_grad():
            frames = rollout(model, inputs, horizon=6)
    """
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


# ============================================================================
# FUNCTION BASE
# ============================================================================

class Function:
    """
    Base class for differentiable operations

    Subclasses implement `forward` on raw arrays and `backward`, which maps
    dL/d(output) to a tuple with one dL/d(input) per parent (None when the
    parent does not need a gradient).
    """

    def __init__(self, *parents: "Tensor"):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        """Run forward on the tensors' data and attach the record to the result"""
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)

    @property
    def name(self) -> str:
        return type(self).__name__


# ============================================================================
# TENSOR
# ============================================================================

class Tensor:
    """
    Dense float64 tensor with optional gradient

    Example:
        >>> x = Tensor([1.0, 2.0], requires_grad=True)
        >>> (x * 2.0).sum().backward()
        >>> x.grad
        array([2., 2.])
    """

    __array_priority__ = 1000  # ndarray <op> Tensor defers to Tensor

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.creator = creator
        self.grad: Optional[np.ndarray] = None
        self.name = name

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # Gradients
    # ------------------------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.shape:
            raise ShapeError(f"Gradient shape {grad.shape} does not match tensor {self.shape}")
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    def backward(self) -> "ComputationRecord":
        """
        Populate .grad on every requires_grad tensor this scalar depends on

        Raises:
            GradientError: If called on a non-scalar tensor
        """
        if self.data.size != 1:
            raise GradientError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GradientError("backward() on a loss that depends on no requires_grad tensor")
        record = ComputationRecord.from_output(self)
        record.backward()
        return record

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------

    def __add__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Add.apply(self, other)
        return AddScalar.apply(self, value=float(other))

    __radd__ = __add__

    def __sub__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Sub.apply(self, other)
        return AddScalar.apply(self, value=-float(other))

    def __rsub__(self, other: Union[float, int]) -> "Tensor":
        return AddScalar.apply(Scale.apply(self, factor=-1.0), value=float(other))

    def __mul__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Mul.apply(self, other)
        return Scale.apply(self, factor=float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(other, Tensor):
            return Div.apply(self, other)
        return Scale.apply(self, factor=1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return Scale.apply(self, factor=-1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return MatMul.apply(self, other)

    def __getitem__(self, index) -> "Tensor":
        return GetItem.apply(self, index=index)

    # ------------------------------------------------------------------
    # Shape and reductions
    # ------------------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, axes: Optional[Sequence[int]] = None) -> "Tensor":
        """Permute axes; default swaps the last two"""
        return Transpose.apply(self, axes=axes)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def expand(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Expand.apply(self, shape=shape)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    # ------------------------------------------------------------------
    # Pointwise
    # ------------------------------------------------------------------

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    def tanh(self) -> "Tensor":
        return Tanh.apply(self)

    def relu(self) -> "Tensor":
        return ReLU.apply(self)

    def clamp(self, low: float, high: float) -> "Tensor":
        return Clamp.apply(self, low=low, high=high)

    def square(self) -> "Tensor":
        return Mul.apply(self, self)


def tensor(data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    """Convenience constructor"""
    return Tensor(data, requires_grad=requires_grad, name=name)


def _as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _require_same_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ============================================================================
# COMPUTATION RECORD
# ============================================================================

class ComputationRecord:
    """
    Ordered log of the operations that produced an output

    Nodes are stored in topological order (inputs before outputs, output
    last). The order only depends on graph structure and argument order,
    so replaying `backward` gives bit-identical gradients every time.
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "ComputationRecord":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in reversed(node.creator.parents):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    @property
    def output(self) -> Tensor:
        return self.nodes[-1]

    @property
    def operations(self) -> List[str]:
        return [n.creator.name for n in self.nodes if n.creator is not None]

    def backward(self) -> None:
        """Propagate d(output)/d(node) to every node and accumulate into .grad"""
        output = self.output
        grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}

        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            node.accumulate_grad(grad)
            if node.creator is None:
                continue

            parent_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


# ============================================================================
# ELEMENTWISE
# ============================================================================

class Add(Function):
    def forward(self, a, b):
        _require_same_shape("add", a, b)
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        _require_same_shape("sub", a, b)
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    """Hadamard product"""

    def forward(self, a, b):
        _require_same_shape("hadamard", a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Div(Function):
    def forward(self, a, b):
        _require_same_shape("div", a, b)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return grad / self.b, -grad * self.a / (self.b * self.b)


class Scale(Function):
    def forward(self, a, factor: float):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


class AddScalar(Function):
    def forward(self, a, value: float):
        return a + value

    def backward(self, grad):
        return (grad,)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp only ever sees non-positive arguments
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Sigmoid(Function):
    def forward(self, a):
        self.out = _sigmoid(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class ReLU(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Clamp(Function):
    def forward(self, a, low: float, high: float):
        self.mask = (a >= low) & (a <= high)
        return np.clip(a, low, high)

    def backward(self, grad):
        return (grad * self.mask,)


# ============================================================================
# SHAPE
# ============================================================================

class Reshape(Function):
    def forward(self, a, shape):
        self.in_shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, a, axes=None):
        if axes is None:
            axes = list(range(a.ndim))
            axes[-1], axes[-2] = axes[-2], axes[-1]
        self.axes = tuple(axes)
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Expand(Function):
    """Explicit numpy-style broadcast to a larger shape"""

    def forward(self, a, shape):
        try:
            out = np.broadcast_to(a, shape)
        except ValueError as e:
            raise ShapeError(f"expand: cannot broadcast {a.shape} to {tuple(shape)}") from e
        self.in_shape = a.shape
        return out.copy()

    def backward(self, grad):
        lead = grad.ndim - len(self.in_shape)
        g = grad.sum(axis=tuple(range(lead))) if lead else grad
        axes = tuple(i for i, n in enumerate(self.in_shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)


class GetItem(Function):
    def forward(self, a, index):
        self.in_shape = a.shape
        self.index = index
        return np.array(a[index])

    def backward(self, grad):
        out = np.zeros(self.in_shape)
        parts = self.index if isinstance(self.index, tuple) else (self.index,)
        if any(isinstance(p, (list, np.ndarray)) for p in parts):
            np.add.at(out, self.index, grad)  # fancy indices may repeat
        else:
            out[self.index] += grad
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError as e:
            raise ShapeError(f"concat: {e}") from e

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


# ============================================================================
# REDUCTIONS AND PRODUCTS
# ============================================================================

class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.in_shape = a.shape
        self.axis = axis
        self.keepdims = keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Sum):
    def forward(self, a, axis=None, keepdims=False):
        out = super().forward(a, axis=axis, keepdims=keepdims)
        self.count = a.size // max(out.size, 1)
        return out / self.count

    def backward(self, grad):
        (g,) = super().backward(grad)
        return (g / self.count,)


class MatMul(Function):
    """numpy matmul over the last two axes; leading axes must match exactly"""

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ np.swapaxes(self.b, -1, -2), np.swapaxes(self.a, -1, -2) @ grad
