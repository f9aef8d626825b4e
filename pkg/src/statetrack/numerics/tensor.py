"""Reverse-mode autodiff over dense float64 numpy arrays.

Each Tensor remembers its parents as (tensor, pull) pairs, where pull maps the
child's upstream gradient to that parent's gradient contribution. backward()
runs an iterative topological sort, so graph depth is bounded by memory, not
Python's recursion limit. Only the ops this tracker composes are provided.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        raise TypeError("expected raw data, got Tensor")
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, parents=()):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def zeros(shape) -> "Tensor":
        return Tensor(np.zeros(shape))

    @staticmethod
    def ones(shape) -> "Tensor":
        return Tensor(np.ones(shape))

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- graph plumbing -------------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents) -> "Tensor":
        if _grad_enabled and any(p.requires_grad for p, _ in parents):
            return Tensor(data, requires_grad=True, parents=parents)
        return Tensor(data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            g = node.grad
            if g is None:
                continue
            for parent, pull in node._parents:
                if not parent.requires_grad:
                    continue
                contrib = pull(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        out = self.data + other.data
        return Tensor._make(out, (
            (self, lambda g: _unbroadcast(g, self.shape)),
            (other, lambda g: _unbroadcast(g, other.shape)),
        ))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, ((self, lambda g: -g),))

    def __sub__(self, other):
        other = self._coerce(other)
        out = self.data - other.data
        return Tensor._make(out, (
            (self, lambda g: _unbroadcast(g, self.shape)),
            (other, lambda g: _unbroadcast(-g, other.shape)),
        ))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out = self.data * other.data
        return Tensor._make(out, (
            (self, lambda g: _unbroadcast(g * other.data, self.shape)),
            (other, lambda g: _unbroadcast(g * self.data, other.shape)),
        ))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = self.data / other.data
        return Tensor._make(out, (
            (self, lambda g: _unbroadcast(g / other.data, self.shape)),
            (other, lambda g: _unbroadcast(-g * self.data / other.data ** 2, other.shape)),
        ))

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("only scalar exponents are supported")
        out = self.data ** exponent
        return Tensor._make(out, (
            (self, lambda g: g * exponent * self.data ** (exponent - 1)),
        ))

    def __matmul__(self, other):
        other = self._coerce(other)
        out = self.data @ other.data
        a, b = self.data, other.data

        def pull_a(g):
            return _unbroadcast(g @ np.swapaxes(b, -1, -2), self.shape)

        def pull_b(g):
            return _unbroadcast(np.swapaxes(a, -1, -2) @ g, other.shape)

        return Tensor._make(out, ((self, pull_a), (other, pull_b)))

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def pull(g):
            if axis is None:
                return np.broadcast_to(g, self.shape).copy()
            gg = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(gg, self.shape).copy()

        return Tensor._make(out, ((self, pull),))

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(n)

    # -- elementwise nonlinearities --------------------------------------------

    def relu(self):
        out = np.maximum(self.data, 0.0)
        mask = self.data > 0
        return Tensor._make(out, ((self, lambda g: g * mask),))

    def sigmoid(self):
        x = self.data
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return Tensor._make(out, ((self, lambda g: g * out * (1.0 - out)),))

    def tanh(self):
        out = np.tanh(self.data)
        return Tensor._make(out, ((self, lambda g: g * (1.0 - out ** 2)),))

    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, ((self, lambda g: g * out),))

    def log(self):
        return Tensor._make(np.log(self.data), ((self, lambda g: g / self.data),))

    # -- shape manipulation -----------------------------------------------------

    def reshape(self, shape):
        out = self.data.reshape(shape)
        return Tensor._make(out, ((self, lambda g: g.reshape(self.shape)),))

    def transpose(self, axes):
        inverse = np.argsort(axes)
        out = self.data.transpose(axes)
        return Tensor._make(out, ((self, lambda g: g.transpose(inverse)),))

    def __getitem__(self, idx):
        out = self.data[idx]
        if np.isscalar(out) or out.ndim == 0:
            out = np.asarray(out, dtype=np.float64)

        def pull(g):
            buf = np.zeros_like(self.data)
            np.add.at(buf, idx, g)
            return buf

        return Tensor._make(np.array(out, copy=True), ((self, pull),))


# ---------------------------------------------------------------------------
# Module-level ops
# ---------------------------------------------------------------------------

def softmax(t: Tensor) -> Tensor:
    """Softmax over the last axis; rows sum to 1."""
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def pull(g):
        return out * (g - (g * out).sum(axis=-1, keepdims=True))

    return Tensor._make(out, ((t, pull),))


def log_softmax(t: Tensor) -> Tensor:
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - log_z
    sm = np.exp(out)

    def pull(g):
        return g - sm * g.sum(axis=-1, keepdims=True)

    return Tensor._make(out, ((t, pull),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def pull_x(g):
        ghat = g * gain.data
        # standard fused layer-norm backward; means taken over the last axis
        return inv * (ghat - ghat.mean(axis=-1, keepdims=True)
                      - xhat * (ghat * xhat).mean(axis=-1, keepdims=True))

    def pull_gain(g):
        return _unbroadcast(g * xhat, gain.shape)

    def pull_bias(g):
        return _unbroadcast(g, bias.shape)

    return Tensor._make(out, ((x, pull_x), (gain, pull_gain), (bias, pull_bias)))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    parents = []
    offset = 0
    for t in tensors:
        width = t.shape[axis]

        def pull(g, start=offset, stop=offset + width):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            return g[tuple(index)]

        parents.append((t, pull))
        offset += width
    return Tensor._make(out, parents)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=axis)
    parents = []
    for i, t in enumerate(tensors):
        def pull(g, i=i):
            return np.take(g, i, axis=axis)

        parents.append((t, pull))
    return Tensor._make(out, parents)


def set_rows(base: Tensor, row_idx: np.ndarray, rows: Tensor) -> Tensor:
    """Copy of ``base`` with ``base[row_idx] := rows``; row_idx must be unique."""
    row_idx = np.asarray(row_idx, dtype=np.intp)
    out = base.data.copy()
    out[row_idx] = rows.data

    def pull_base(g):
        gb = g.copy()
        gb[row_idx] = 0.0
        return gb

    def pull_rows(g):
        return g[row_idx]

    return Tensor._make(out, ((base, pull_base), (rows, pull_rows)))


def scatter_add_rows(values: Tensor, cols: np.ndarray, size: int) -> Tensor:
    """Row-wise scatter-add: out[i, cols[i, j]] += values[i, j].

    Duplicate column ids within a row accumulate — this is what folds a
    distribution over input positions onto the vocabulary.
    """
    cols = np.asarray(cols, dtype=np.intp)
    k = values.shape[0]
    rows = np.arange(k)[:, None]
    out = np.zeros((k, size))
    np.add.at(out, (rows, np.broadcast_to(cols, values.shape)), values.data)

    def pull(g):
        return g[rows, np.broadcast_to(cols, values.shape)]

    return Tensor._make(out, ((values, pull),))


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU, composed from primitives (smooth everywhere).

    Smoothness matters: a kinked activation makes central finite differences
    disagree with the tape near pre-activation zeros, which would drown the
    gradient checker in false positives.
    """
    inner = 0.7978845608028654 * (x + 0.044715 * x * x * x)
    return 0.5 * (x * (1.0 + inner.tanh()))


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when p == 0 (no rng draw)."""
    if p <= 0.0:
        return x
    if p >= 1.0:
        raise ValueError("dropout rate must be < 1")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Tensor._make(x.data * mask, ((x, lambda g: g * mask),))
