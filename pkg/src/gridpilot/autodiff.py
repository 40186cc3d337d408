"""Dense float64 tensors with define-by-run reverse-mode automatic differentiation.

Every trainable part of the stack is built on the ops in this file. Design:

- `Tensor` wraps a float64 numpy array. Ops build a graph of closures; calling
  `backward()` on a scalar loss walks the graph in reverse topological order.
- Non-finite values (NaN/Inf) raise `NumericsError` at the op that produced
  them instead of propagating silently.
- Gradients are only retained on `requires_grad` leaves; intermediates keep
  nothing after `backward()` returns.
- Everything is float64. The toy scale makes the cost negligible and keeps
  finite-difference checks tight.

Numerical guards (documented defaults): layer norm epsilon 1e-5, probability
floor for logarithms 1e-12 (see `cross_entropy` / `bce_with_logits`).
"""

from __future__ import annotations

import contextlib

import numpy as np

LOG_EPS = 1e-12
LAYERNORM_EPS = 1e-5


class NumericsError(ValueError):
    """Raised for non-finite values, bad shapes, or invalid graph roots."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericsError(f"non-finite values produced by op '{_op}'")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self._op = _op

    # -- introspection -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """A view of the same values cut off from the graph."""
        return Tensor(self.data, requires_grad=False, _op="detach")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph walk ----------------------------------------------------------

    def backward(self):
        """Reverse-mode pass from a scalar root. Sets `.grad` on leaves."""
        if self.data.size != 1:
            raise NumericsError(f"backward root must be scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise NumericsError("backward root does not require grad (no parameters on its path?)")

        topo = _toposort(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            gout = grads.pop(id(node), None)
            if gout is None:
                continue
            if node._parents:
                for parent, pgrad in zip(node._parents, node._backward(gout)):
                    if pgrad is None or not parent.requires_grad:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pgrad if acc is None else acc + pgrad
            else:
                node.grad = gout

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, *axes)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)


def _toposort(root):
    topo, visited, stack = [], set(), [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return topo


def forward_backward(loss):
    """Run backward from a scalar loss; return {id(leaf): gradient Tensor}.

    Leaves are requires_grad tensors with no parents (parameters).
    """
    loss.backward()
    out = {}
    for node in _toposort(loss):
        if node.requires_grad and not node._parents and node.grad is not None:
            out[id(node)] = Tensor(node.grad, _op="grad")
    return out


# -- helpers ------------------------------------------------------------------


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, backward, op):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=tuple(parents), _backward=backward, _op=op)


# -- arithmetic ----------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), bw, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), bw, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bw(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _make(out, (a, b), bw, "div")


def power(a, p):
    """Elementwise a**p for a constant exponent p."""
    a = as_tensor(a)
    p = float(p)
    out = a.data**p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), bw, "power")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def bw(g):
        return (g * out,)

    return _make(out, (a,), bw, "exp")


def log(a, floor=None):
    """Natural log. Inputs must be > 0 unless a floor is given (then clipped).

    The floor's gradient is zero below the clip point (documented; used by the
    cross-entropy probability floor of 1e-12).
    """
    a = as_tensor(a)
    vals = a.data
    if floor is not None:
        vals = np.maximum(vals, floor)
    elif np.any(a.data <= 0.0):
        raise NumericsError("log of non-positive value (pass floor= to clip)")
    out = np.log(vals)
    inside = vals == a.data

    def bw(g):
        return (g * inside / vals,)

    return _make(out, (a,), bw, "log")


def absolute(a):
    """|a|; subgradient 0 at exactly 0."""
    a = as_tensor(a)
    out = np.abs(a.data)

    def bw(g):
        return (g * np.sign(a.data),)

    return _make(out, (a,), bw, "abs")


def matmul(a, b):
    """Batched matrix product with numpy broadcasting on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise NumericsError(f"matmul needs ndim>=2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise NumericsError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _make(out, (a, b), bw, "matmul")


# -- nonlinearities ------------------------------------------------------------


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def bw(g):
        return (g * (a.data > 0.0),)

    return _make(out, (a,), bw, "relu")


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(a):
    """tanh-approximation GELU."""
    a = as_tensor(a)
    x = a.data
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        du = _GELU_C * (1.0 + 3.0 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du),)

    return _make(out, (a,), bw, "gelu")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out**2),)

    return _make(out, (a,), bw, "tanh")


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), bw, "sigmoid")


def softmax(a, axis=-1):
    """Row-stable softmax along `axis`; rows sum to 1."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bw, "softmax")


def layer_norm(a, gamma, beta, eps=LAYERNORM_EPS):
    """Normalize the last axis to zero mean / unit variance, then affine.

    A constant row normalizes to zeros pre-affine (variance guarded by eps).
    """
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        d = x.shape[-1]
        gxhat = g * gamma.data
        gsum = gxhat.mean(axis=-1, keepdims=True)
        gdot = (gxhat * xhat).mean(axis=-1, keepdims=True)
        ga = inv * (gxhat - gsum - xhat * gdot)
        ggamma = _unbroadcast(g * xhat, gamma.data.shape)
        gbeta = _unbroadcast(g, beta.data.shape)
        del d
        return ga, ggamma, gbeta

    return _make(out, (a, gamma, beta), bw, "layer_norm")


# -- lookups / shaping -----------------------------------------------------------


def embedding(table, idx):
    """Row lookup table[idx]; gradient scatters back with np.add.at."""
    table = as_tensor(table)
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise NumericsError(f"embedding index out of range for table of {table.shape[0]} rows")
    out = table.data[idx]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(out, (table,), bw, "embedding")


def take(a, key):
    """Indexing/slicing; gradient scattered back into place."""
    a = as_tensor(a)
    out = a.data[key]

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(out, (a,), bw, "take")


def gather_rows(a, flat_idx, out_shape=None):
    """Gather rows of a 2-D (N, d) tensor by an integer index array.

    Output shape is flat_idx.shape + (d,) unless overridden. Used by bilinear
    ROI pooling to fetch feature-map corners differentiably.
    """
    a = as_tensor(a)
    flat_idx = np.asarray(flat_idx)
    out = a.data[flat_idx]
    if out_shape is not None:
        out = out.reshape(out_shape)

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, flat_idx.reshape(-1), g.reshape(-1, a.data.shape[-1]))
        return (ga,)

    return _make(out, (a,), bw, "gather_rows")


def reshape(a, *shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out = a.data.reshape(shape)
    orig = a.data.shape

    def bw(g):
        return (g.reshape(orig),)

    return _make(out, (a,), bw, "reshape")


def transpose(a, *axes):
    a = as_tensor(a)
    if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    if not axes:
        axes = tuple(reversed(range(a.ndim)))
    out = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def bw(g):
        return (g.transpose(inverse),)

    return _make(out, (a,), bw, "transpose")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), bw, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        pieces = np.split(g, len(tensors), axis=axis)
        return tuple(np.squeeze(p, axis=axis) for p in pieces)

    return _make(out, tuple(tensors), bw, "stack")


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.data.shape).copy(),)

    return _make(out, (a,), bw, "sum")


def tensor_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        denom = a.data.size
    elif isinstance(axis, tuple):
        denom = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        denom = a.data.shape[axis]

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy() / denom,)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.data.shape).copy() / denom,)

    return _make(out, (a,), bw, "mean")


def clip(a, lo, hi):
    """Clamp values; gradient passes through strictly inside the range."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        return (g * inside,)

    return _make(out, (a,), bw, "clip")


# -- losses ----------------------------------------------------------------------


def mse_loss(pred, target):
    """Mean squared error over all elements."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise NumericsError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = sub(pred, target)
    return tensor_mean(mul(diff, diff))


def l1_loss(pred, target):
    """Mean absolute error over all elements."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise NumericsError(f"l1 shape mismatch: {pred.shape} vs {target.shape}")
    return tensor_mean(absolute(sub(pred, target)))


def cross_entropy(logits, targets, mask=None):
    """Mean -log softmax(logits)[target] with probabilities floored at 1e-12.

    logits: (..., C); targets: integer array matching the leading shape.
    mask: optional 0/1 array over the leading shape; masked-out positions do
    not contribute (mean is over kept positions).
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    C = logits.shape[-1]
    onehot = np.zeros(logits.shape, dtype=np.float64)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    probs = softmax(logits, axis=-1)
    picked = tensor_sum(mul(probs, Tensor(onehot)), axis=-1)
    nll = mul(log(picked, floor=LOG_EPS), -1.0)
    if mask is None:
        return tensor_mean(nll)
    mask = np.asarray(mask, dtype=np.float64)
    kept = mask.sum()
    if kept == 0:
        raise NumericsError("cross_entropy mask keeps no positions")
    del C
    return div(tensor_sum(mul(nll, Tensor(mask))), float(kept))


def bce_with_logits(logits, targets, weight=None):
    """Binary cross-entropy on logits via the stable softplus form.

    BCE(z, y) = softplus(z) - z*y, softplus(z) = log(1 + e^-|z|) + max(z, 0).
    """
    logits = as_tensor(logits)
    targets = as_tensor(targets)
    z = logits.data
    sp = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0)
    val = sp - z * targets.data
    sig = 1.0 / (1.0 + np.exp(-z))
    w = np.asarray(weight, dtype=np.float64) if weight is not None else None
    if w is not None:
        total = float(w.sum()) if w.sum() > 0 else 1.0
        out = (val * w).sum() / total
    else:
        total = val.size
        out = val.mean()

    def bw(g):
        base = (sig - targets.data) * g
        if w is not None:
            return (base * w / total, None)
        return (base / total, None)

    return _make(out, (logits, targets), bw, "bce_with_logits")
