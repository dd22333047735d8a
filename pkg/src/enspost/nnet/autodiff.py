"""Minimal reverse-mode automatic differentiation over numpy arrays (f64)."""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Array node in the computation tape.

    Gradients accumulate into ``grad`` after ``backward()``; only tensors
    created with ``requires_grad=True`` (directly or through recorded ops)
    participate in differentiation.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    # -- graph traversal ----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            topo.append(node)

        visit(self)
        if not topo:
            raise ValueError("gradient requested for an unrecorded tensor")
        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    @staticmethod
    def _wrap(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._wrap(other)
        out_data = self.data + other.data

        def bw(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g, other.data.shape)

        return Tensor(out_data, parents=(self, other), backward=bw)

    __radd__ = __add__

    def __neg__(self):
        def bw(g):
            if self.requires_grad:
                self.grad += -g

        return Tensor(-self.data, parents=(self,), backward=bw)

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        out_data = self.data * other.data

        def bw(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g * other.data, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g * self.data, other.data.shape)

        return Tensor(out_data, parents=(self, other), backward=bw)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._wrap(other)
        out_data = self.data @ other.data

        def bw(g):
            if self.requires_grad:
                self.grad += g @ other.data.T
            if other.requires_grad:
                other.grad += self.data.T @ g

        return Tensor(out_data, parents=(self, other), backward=bw)

    def __pow__(self, exponent: float):
        out_data = self.data ** exponent

        def bw(g):
            if self.requires_grad:
                self.grad += g * exponent * self.data ** (exponent - 1.0)

        return Tensor(out_data, parents=(self,), backward=bw)

    # -- shape and reductions -------------------------------------------------

    def expand_dims(self, axis: int):
        out_data = np.expand_dims(self.data, axis)

        def bw(g):
            if self.requires_grad:
                self.grad += np.squeeze(g, axis=axis)

        return Tensor(out_data, parents=(self,), backward=bw)

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if not self.requires_grad:
                return
            if axis is None:
                self.grad += np.broadcast_to(g, self.data.shape)
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self.grad += np.broadcast_to(gg, self.data.shape)

        return Tensor(out_data, parents=(self,), backward=bw)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def rows(self, start: int, stop: int):
        """Contiguous row slice with scatter-add gradient."""
        out_data = self.data[start:stop]

        def bw(g):
            if self.requires_grad:
                self.grad[start:stop] += g

        return Tensor(out_data, parents=(self,), backward=bw)

    # -- nonlinearities -------------------------------------------------------

    def relu(self):
        mask = self.data > 0
        out_data = self.data * mask

        def bw(g):
            if self.requires_grad:
                self.grad += g * mask

        return Tensor(out_data, parents=(self,), backward=bw)

    def abs(self):
        """Absolute value with sign(0) = 0 subgradient."""
        out_data = np.abs(self.data)
        sign = np.sign(self.data)

        def bw(g):
            if self.requires_grad:
                self.grad += g * sign

        return Tensor(out_data, parents=(self,), backward=bw)

    def sqrt(self):
        return self ** 0.5
