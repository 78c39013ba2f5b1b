"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for the router's forward pass and loss: each operation
records its parents and a closure that pushes the output adjoint back to
them. Tensors are float64 throughout; gradients accumulate via +=.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

Array = np.ndarray


class Tensor:
    """Node in the computation tape wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "parents", "backward_fn", "name")

    def __init__(
        self,
        data: Array | float,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[Array], None] | None = None,
        name: str | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "Tensor | float") -> "Tensor":
        other = _as_tensor(other)
        out_data = self.data + other.data

        def backward(g: Array) -> None:
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor(out_data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        return self + (-1.0) * _as_tensor(other)

    def __rsub__(self, other: float) -> "Tensor":
        return _as_tensor(other) + (-1.0) * self

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        other = _as_tensor(other)
        out_data = self.data * other.data

        def backward(g: Array) -> None:
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        out_data = self.data @ other.data

        def backward(g: Array) -> None:
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)

        return Tensor(out_data, (self, other), backward)

    # -- nonlinearities -----------------------------------------------------

    def relu(self) -> "Tensor":
        out_data = np.maximum(self.data, 0.0)

        def backward(g: Array) -> None:
            self._accumulate(g * (self.data > 0.0))

        return Tensor(out_data, (self,), backward)

    def sigmoid(self) -> "Tensor":
        # Stable two-sided formulation; large |x| saturates cleanly.
        x = self.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g: Array) -> None:
            self._accumulate(g * out_data * (1.0 - out_data))

        return Tensor(out_data, (self,), backward)

    def log(self) -> "Tensor":
        out_data = np.log(self.data)

        def backward(g: Array) -> None:
            self._accumulate(g / self.data)

        return Tensor(out_data, (self,), backward)

    def clamp(self, lo: float, hi: float) -> "Tensor":
        out_data = np.clip(self.data, lo, hi)
        inside = (self.data > lo) & (self.data < hi)

        def backward(g: Array) -> None:
            self._accumulate(g * inside)

        return Tensor(out_data, (self,), backward)

    def sum(self) -> "Tensor":
        out_data = np.asarray(self.data.sum())

        def backward(g: Array) -> None:
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        return Tensor(out_data, (self,), backward)

    def item(self) -> float:
        return float(self.data)


def _as_tensor(value: "Tensor | Array | float") -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a gradient back to the shape an operand was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along columns."""
    parts = list(parts)
    out_data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def backward(g: Array) -> None:
        offset = 0
        for p, w in zip(parts, widths):
            p._accumulate(g[:, offset : offset + w])
            offset += w

    return Tensor(out_data, tuple(parts), backward)


def take_rows(x: Tensor, idx: Array) -> Tensor:
    """Gather rows by index; the backward pass scatter-adds."""
    out_data = x.data[idx]

    def backward(g: Array) -> None:
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, idx, g)

    return Tensor(out_data, (x,), backward)


def backward(loss: Tensor) -> None:
    """Reverse-mode accumulation seeded with d(loss)/d(loss) = 1."""
    if loss.data.ndim != 0:
        raise ValueError("backward() expects a scalar loss tensor")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.asarray(1.0)
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)
