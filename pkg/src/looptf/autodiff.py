"""Minimal reverse-mode automatic differentiation over numpy arrays.

The graph is rebuilt on every forward pass. Gradients accumulate on leaf
tensors that require them; intermediate gradients live only for the
duration of one ``backward`` call.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    # graph construction -------------------------------------------------
    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = parents if needs else ()
        out._backward = backward if needs else None
        return out

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                k = id(parent)
                grads[k] = pg if k not in grads else grads[k] + pg

    # operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -_wrap(other, self))

    def __rsub__(self, other):
        return add(-self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis, keepdims) * (1.0 / float(n))


def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def tensor(data, requires_grad=False, dtype=np.float32) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=requires_grad)


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _wrap(a, b)
    b = _wrap(b, a)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor._make(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _wrap(a, b)
    b = _wrap(b, a)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._make(a.data * b.data, (a, b), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return Tensor._make(np.log(x.data), (x,), lambda g: (g / x.data,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._make(out, (x,), lambda g: (g * (1.0 - out * out),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation (the GPT-2 variant)."""
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * (xd * xd * xd))
    t = np.tanh(inner)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * dinner),)

    return Tensor._make(out.astype(xd.dtype, copy=False), (x,), backward)


# shape ---------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor._make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x: Tensor, idx) -> Tensor:
    shape, dtype = x.shape, x.dtype

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        np.add.at(out, idx, g) if _has_array_index(idx) else out.__setitem__(idx, g)
        return (out,)

    return Tensor._make(x.data[idx], (x,), backward)


def _has_array_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


# linear algebra ------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading dims."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least 2 dims")
    if b.ndim == 2:
        # fold leading dims of a into one GEMM
        k, n = b.shape
        a2 = np.ascontiguousarray(a.data).reshape(-1, k)
        out = (a2 @ b.data).reshape(a.shape[:-1] + (n,))

        def backward(g):
            g2 = np.ascontiguousarray(g).reshape(-1, n)
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return Tensor._make(out, (a, b), backward)
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# normalization / attention -------------------------------------------------

def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (broadcastable boolean) marks disallowed positions; those get
    probability exactly 0.
    """
    xd = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if np.broadcast_to(mask, xd.shape).all(axis=-1).any():
            raise ValueError("softmax row has every position masked")
        xd = np.where(mask, -np.inf, xd)
    z = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return Tensor._make(p.astype(x.dtype, copy=False), (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gain.data + bias.data

    def backward(g):
        gbias = _unbroadcast(g, bias.shape)
        ggain = _unbroadcast(g * xhat, gain.shape)
        gx_hat = g * gain.data
        gx = rstd * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, ggain, gbias

    return Tensor._make(out.astype(xd.dtype, copy=False), (x, gain, bias), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise ValueError(f"token id out of range [0, {V})")

    def backward(g):
        flat = ids.reshape(-1)
        onehot = np.zeros((flat.size, V), dtype=g.dtype)
        onehot[np.arange(flat.size), flat] = 1.0
        return (onehot.T @ g.reshape(flat.size, -1),)

    return Tensor._make(table.data[ids], (table,), backward)


def log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_masked(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over positions where mask is 1."""
    targets = np.asarray(targets)
    m = np.asarray(mask).astype(logits.dtype)
    count = m.sum()
    if count <= 0:
        raise ValueError("loss mask selects no positions")
    V = logits.shape[-1]
    safe = np.where(m > 0, targets, 0)
    if (safe < 0).any() or (safe >= V).any():
        raise ValueError("target id out of range")
    lp = log_softmax(logits.data)
    picked = np.take_along_axis(lp, safe[..., None], axis=-1)[..., 0]
    loss = -(picked * m).sum() / count

    def backward(g):
        p = np.exp(lp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        return ((p - onehot) * (m / count)[..., None] * g,)

    return Tensor._make(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def gather_steps(states: list, index: np.ndarray, rows: np.ndarray | None = None) -> Tensor:
    """Output row ``b`` is row ``rows[b]`` (default ``b``) of ``states[index[b]]``.

    States may hold different numbers of rows.
    """
    index = np.asarray(index)
    rows = np.arange(len(index)) if rows is None else np.asarray(rows)
    data = np.stack([states[k].data[r] for k, r in zip(index, rows)])
    used = sorted(set(int(k) for k in index))
    parents = tuple(states[k] for k in used)

    def backward(g):
        out = []
        for k in used:
            gk = np.zeros_like(states[k].data)
            sel = index == k
            np.add.at(gk, rows[sel], g[sel])
            out.append(gk)
        return out

    return Tensor._make(data, parents, backward)


# parameters / init ---------------------------------------------------------

def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) truncated to two standard deviations by resampling."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
