"""Minimal reverse-mode autodiff over numpy arrays.

Every operation builds a node holding its inputs and a closure that maps
the output gradient to input gradients; ``backward`` walks the graph in
reverse topological order. Arrays keep whatever float dtype they carry,
so the same graph runs in float32 for training and float64 for
finite-difference checks.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor", "tensor", "const",
    "matmul", "softmax", "log_softmax", "layer_norm", "gelu", "softplus",
    "embedding", "gather_rows", "take", "transpose", "reshape",
    "sqrt", "concat",
]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"

    # -- graph mechanics ------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward(node.grad)):
                if pgrad is None or not parent.requires_grad:
                    continue
                pgrad = _unbroadcast(np.asarray(pgrad, dtype=parent.data.dtype), parent.shape)
                if parent.grad is None:
                    parent.grad = pgrad
                else:
                    parent.grad = parent.grad + pgrad

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic ------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        return Tensor(
            self.data + other.data,
            parents=(self, other),
            backward=lambda g: (g, g),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, parents=(self,), backward=lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        return Tensor(
            self.data * other.data,
            parents=(self, other),
            backward=lambda g: (g * other.data, g * self.data),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._coerce(other)
        return Tensor(
            self.data / other.data,
            parents=(self, other),
            backward=lambda g: (
                g / other.data,
                -g * self.data / (other.data * other.data),
            ),
        )

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def back(g: np.ndarray):
            if axis is None:
                return (np.broadcast_to(g, self.shape),)
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            return (np.broadcast_to(gg, self.shape),)

        return Tensor(out, parents=(self,), backward=back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def const(data, dtype=None) -> Tensor:
    arr = np.asarray(data) if dtype is None else np.asarray(data, dtype=dtype)
    return Tensor(arr)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def back(g: np.ndarray):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return Tensor(out, parents=(a, b), backward=back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g: np.ndarray):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return Tensor(y, parents=(x,), backward=back)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz

    def back(g: np.ndarray):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor(y, parents=(x,), backward=back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def back(g: np.ndarray):
        axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return Tensor(out, parents=(x, gamma, beta), backward=back)


_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT_2))
    out = x.data * cdf

    def back(g: np.ndarray):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return (g * (cdf + x.data * pdf),)

    return Tensor(out, parents=(x,), backward=back)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably; gradient is sigmoid(x)."""
    out = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def back(g: np.ndarray):
        sig = np.where(
            x.data >= 0,
            1.0 / (1.0 + np.exp(-x.data)),
            np.exp(x.data) / (1.0 + np.exp(x.data)),
        )
        return (g * sig,)

    return Tensor(out, parents=(x,), backward=back)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out = weight.data[ids]

    def back(g: np.ndarray):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.data.shape[-1]))
        return (gw,)

    return Tensor(out, parents=(weight,), backward=back)


def gather_rows(x: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; gradient scatter-adds them back."""
    indices = np.asarray(indices)
    out = x.data[indices]

    def back(g: np.ndarray):
        gx = np.zeros_like(x.data)
        np.add.at(gx, indices, g)
        return (gx,)

    return Tensor(out, parents=(x,), backward=back)


def take(x: Tensor, indices, axis: int) -> Tensor:
    indices = np.asarray(indices)
    out = np.take(x.data, indices, axis=axis)

    def back(g: np.ndarray):
        gx = np.zeros_like(x.data)
        idx: list = [slice(None)] * x.data.ndim
        idx[axis] = indices
        np.add.at(gx, tuple(idx), g)
        return (gx,)

    return Tensor(out, parents=(x,), backward=back)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = np.argsort(axes)
    return Tensor(
        x.data.transpose(axes),
        parents=(x,),
        backward=lambda g: (g.transpose(inverse),),
    )


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    original = x.data.shape
    return Tensor(
        x.data.reshape(shape),
        parents=(x,),
        backward=lambda g: (g.reshape(original),),
    )


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor(out, parents=(x,), backward=lambda g: (g / (2.0 * out),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, parents=tuple(parts), backward=back)
