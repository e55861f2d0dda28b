"""A small reverse-mode automatic differentiation core over numpy arrays.

Every operation returns a new Tensor that remembers its parents and a
closure propagating the output gradient back to them. `Tensor.backward`
walks the graph in reverse topological order. Values are float64.
"""

from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if parent.requires_grad)

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))

        return Tensor(self.data + other.data, parents=(self, other), backward=backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, parents=(self,), backward=lambda g: self._accumulate(-g))

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor(self.data * other.data, parents=(self, other), backward=backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(_unbroadcast(g / other.data, self.shape))
            other._accumulate(_unbroadcast(-g * self.data / other.data**2, other.shape))

        return Tensor(self.data / other.data, parents=(self, other), backward=backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor(self.data**exponent, parents=(self,), backward=backward)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            a, b = self.data, other.data
            if a.ndim == 1 and b.ndim == 2:
                self._accumulate(b @ g)
                other._accumulate(np.outer(a, g))
                return
            if b.ndim == 1:
                self._accumulate(_unbroadcast(np.multiply.outer(g, b), a.shape))
                other._accumulate(np.tensordot(a, g, axes=(tuple(range(a.ndim - 1)), tuple(range(g.ndim)))))
                return
            self._accumulate(_unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape))
            other._accumulate(_unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape))

        return Tensor(self.data @ other.data, parents=(self, other), backward=backward)

    # shape ----------------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor(
            self.data.reshape(shape),
            parents=(self,),
            backward=lambda g: self._accumulate(g.reshape(original)),
        )

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        return Tensor(
            self.data.transpose(axes),
            parents=(self,),
            backward=lambda g: self._accumulate(g.transpose(inverse)),
        )

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def __getitem__(self, index) -> "Tensor":
        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accumulate(full)

        return Tensor(self.data[index], parents=(self,), backward=backward)

    # reductions -----------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,), backward=backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # elementwise functions --------------------------------------------------
    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * out))

    def log(self) -> "Tensor":
        return Tensor(np.log(self.data), parents=(self,), backward=lambda g: self._accumulate(g / self.data))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * 0.5 / out))

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * (1.0 - out**2)))

    def sigmoid(self) -> "Tensor":
        out = _sigmoid(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * out * (1.0 - out)))

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor(self.data * mask, parents=(self,), backward=lambda g: self._accumulate(g * mask))

    def softplus(self) -> "Tensor":
        out = np.logaddexp(0.0, self.data)
        slope = _sigmoid(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * slope))

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            self._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

        return Tensor(out, parents=(self,), backward=backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(part)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tensors, backward=backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for index, t in enumerate(tensors):
            t._accumulate(np.take(g, index, axis=axis))

    return Tensor(np.stack([t.data for t in tensors], axis=axis), parents=tensors, backward=backward)


def parameters(arrays: Iterable[Tuple[str, np.ndarray]]) -> dict:
    """Wrap named arrays as leaf tensors that collect gradients."""
    return {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays}
