"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations needed by the encoders, the contrastive loss, and the
downstream MLP heads are implemented.  Broadcasting follows numpy rules;
gradients of broadcast operands are summed back to the operand's shape.
"""

from __future__ import annotations

import numpy as np


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes that numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph wrapping a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ----------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        return out

    def backward(self):
        """Accumulate gradients of this scalar into every reachable parameter."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("loss is NaN/Inf; aborting backward pass")
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accum(-g)

        return Tensor._make(-a.data, (a,), backward)

    def __sub__(self, other):
        return self + (-Tensor._coerce(other))

    def __rsub__(self, other):
        return Tensor._coerce(other) + (-self)

    def __mul__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._make(a.data / b.data, (a, b), backward)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a, p = self, float(exponent)

        def backward(g):
            a._accum(g * p * a.data ** (p - 1.0))

        return Tensor._make(a.data**p, (a,), backward)

    def __matmul__(self, other):
        other = Tensor._coerce(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def backward(g):
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)

        return Tensor._make(a.data @ b.data, (a, b), backward)

    # -- elementwise nonlinearities -------------------------------------------

    def sin(self):
        a = self

        def backward(g):
            a._accum(g * np.cos(a.data))

        return Tensor._make(np.sin(a.data), (a,), backward)

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            a._accum(g * out_data)

        return Tensor._make(out_data, (a,), backward)

    def log(self):
        a = self

        def backward(g):
            a._accum(g / a.data)

        return Tensor._make(np.log(a.data), (a,), backward)

    def relu(self):
        a = self
        mask = a.data > 0.0

        def backward(g):
            a._accum(g * mask)

        return Tensor._make(np.where(mask, a.data, 0.0), (a,), backward)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self

        def backward(g):
            if axis is None:
                a._accum(np.broadcast_to(g, a.shape).copy())
            else:
                a._accum(np.broadcast_to(
                    g if keepdims else np.expand_dims(g, axis), a.shape).copy())

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def logsumexp(self, axis):
        """Numerically stable log(sum(exp(x))) along one axis, keepdims dropped."""
        a = self
        m = a.data.max(axis=axis, keepdims=True)
        shifted = np.exp(a.data - m)
        total = shifted.sum(axis=axis, keepdims=True)
        out_data = (m + np.log(total)).squeeze(axis=axis)
        softmax = shifted / total

        def backward(g):
            a._accum(np.expand_dims(g, axis) * softmax)

        return Tensor._make(out_data, (a,), backward)

    # -- structural ------------------------------------------------------------

    @property
    def T(self):
        a = self

        def backward(g):
            a._accum(g.T)

        return Tensor._make(a.data.T, (a,), backward)

    def diagonal(self):
        a = self
        if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"diagonal() needs a square matrix, got {a.shape}")

        def backward(g):
            full = np.zeros_like(a.data)
            np.fill_diagonal(full, g)
            a._accum(full)

        return Tensor._make(np.diagonal(a.data).copy(), (a,), backward)

    def gather_rows(self, index):
        """out[i] = x[i, index[i]] for a 2-d tensor and integer index vector."""
        a = self
        index = np.asarray(index)
        if a.data.ndim != 2 or index.shape != (a.shape[0],):
            raise ValueError(f"gather_rows: got {a.shape} with index {index.shape}")
        rows = np.arange(a.shape[0])

        def backward(g):
            full = np.zeros_like(a.data)
            full[rows, index] = g
            a._accum(full)

        return Tensor._make(a.data[rows, index].copy(), (a,), backward)

    def item(self):
        return float(self.data.reshape(()))


def parameter(data) -> Tensor:
    """A trainable tensor (requires_grad=True)."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)
