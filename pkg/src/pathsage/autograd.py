"""Minimal dense tensor engine with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy arrays (row-major, float32 by default,
float64 supported for gradient-check oracles). Each primitive records a
vector-Jacobian product closure on the output tensor whenever an input
requires gradients; `backward` walks the recorded graph once in reverse
topological order and accumulates gradients into the leaves.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidAxis, NonScalarLoss, ShapeMismatch

DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = None   # tuple[Tensor, ...] when produced by a primitive
        self._vjp = None       # callable(grad_out) -> tuple of parent grads

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _make(data, parents, vjp):
    """Build an op output, recording the vjp only if some parent needs grads."""
    out = Tensor(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast_trailing(g, shape):
    """Sum gradient over the leading axes that were broadcast away."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b):
    """Elementwise add; b may have a trailing-suffix shape (bias broadcast)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if len(b.shape) > len(a.shape) or a.shape[len(a.shape) - len(b.shape):] != b.shape:
        raise ShapeMismatch("add operands incompatible", a.shape, b.shape)
    data = a.data + b.data

    def vjp(g):
        return g, _unbroadcast_trailing(g, b.shape)

    return _make(data, (a, b), vjp)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch("mul operands incompatible", a.shape, b.shape)
    data = a.data * b.data

    def vjp(g):
        return g * b.data, g * a.data

    return _make(data, (a, b), vjp)


def scale(a, s):
    a = _as_tensor(a)
    s = float(s)
    return _make(a.data * np.asarray(s, dtype=a.dtype), (a,), lambda g: (g * s,))


def matmul(a, b):
    """Matrix product. Supports batched leading dims; a 2-D operand is shared
    across the other operand's batch."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch("matmul needs >=2-D operands", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul inner dims differ", a.shape, b.shape)
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if ga.ndim > a.data.ndim:
            ga = ga.reshape(-1, *a.shape[-2:]).sum(axis=0)
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        if gb.ndim > b.data.ndim:
            gb = gb.reshape(-1, *b.shape[-2:]).sum(axis=0)
        return ga, gb

    return _make(data, (a, b), vjp)


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return _make(a.data * mask, (a,), vjp)


def softmax(a):
    """Numerically stable softmax over the last axis."""
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _make(s, (a,), vjp)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then apply learnable gain and bias.

    Statistics are accumulated in 64-bit and cast back to the input dtype.
    """
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeMismatch("layer_norm gain/bias width", x.shape, gain.shape)
    n = x.shape[-1]
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    var = ((x64 - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x64 - mu) * inv).astype(x.dtype)
    data = xhat * gain.data + bias.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gh = (g * gain.data).astype(np.float64)
        m1 = gh.mean(axis=-1, keepdims=True)
        m2 = (gh * xhat).mean(axis=-1, keepdims=True)
        gx = (inv * (gh - m1 - xhat * m2)).astype(x.dtype)
        return gx, ggain, gbias

    return _make(data, (x, gain, bias), vjp)


def dropout(x, rate, train, rng):
    """Inverted dropout: kept activations are scaled by 1/(1-rate).

    Identity when train is false or rate is 0. The mask is drawn from `rng`.
    """
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if not train or rate == 0.0:
        return _make(x.data.copy(), (x,), lambda g: (g,))
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def vjp(g):
        return (g * keep,)

    return _make(x.data * keep, (x,), vjp)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), vjp)


def mean(x, axis):
    x = _as_tensor(x)
    if not -x.data.ndim <= axis < x.data.ndim:
        raise InvalidAxis(f"axis {axis} for shape {x.shape}")
    axis = axis % x.data.ndim
    n = x.shape[axis]
    data = (x.data.astype(np.float64).sum(axis=axis) / n).astype(x.dtype)

    def vjp(g):
        return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

    return _make(data, (x,), vjp)


def tsum(x):
    """Sum of all elements, as a scalar tensor (64-bit accumulation)."""
    x = _as_tensor(x)
    data = np.asarray(x.data.astype(np.float64).sum(), dtype=x.dtype)

    def vjp(g):
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _make(data, (x,), vjp)


def select(x, axis, index):
    """Pick a single slice along `axis`, dropping that axis."""
    x = _as_tensor(x)
    if not -x.data.ndim <= axis < x.data.ndim:
        raise InvalidAxis(f"axis {axis} for shape {x.shape}")
    axis = axis % x.data.ndim
    if not 0 <= index < x.shape[axis]:
        raise InvalidAxis(f"index {index} out of range for axis {axis} of {x.shape}")
    data = np.take(x.data, index, axis=axis)

    def vjp(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        sl = [slice(None)] * x.data.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return (gx,)

    return _make(data, (x,), vjp)


def gather_rows(x, indices):
    """Select rows x[indices] along axis 0 (indices may repeat)."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    data = x.data[idx]

    def vjp(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(data, (x,), vjp)


def reshape(x, shape):
    x = _as_tensor(x)
    old = x.shape
    data = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(old),)

    return _make(data, (x,), vjp)


def transpose(x, axes):
    x = _as_tensor(x)
    inv = np.argsort(axes)
    data = np.ascontiguousarray(x.data.transpose(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return _make(data, (x,), vjp)


def canonical_bucket_mean(x):
    """Mean over axis -2 with rows summed in lexicographically sorted order.

    Input (..., n, d) -> output (..., d). Sorting the rows before the
    in-order summation makes the result bit-identical under any permutation
    of the rows; the gradient of a mean is permutation-free, so the vjp is
    a plain uniform spread.
    """
    x = _as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeMismatch("canonical_bucket_mean needs >=2-D input", x.shape)
    n = x.shape[-2]
    flat = x.data.reshape(-1, n, x.shape[-1])
    out = np.empty((flat.shape[0], x.shape[-1]), dtype=np.float64)
    for b in range(flat.shape[0]):
        order = np.lexsort(flat[b].T[::-1])
        out[b] = np.add.reduce(flat[b][order].astype(np.float64), axis=0)
    data = (out / n).astype(x.dtype).reshape(*x.shape[:-2], x.shape[-1])

    def vjp(g):
        return (np.repeat(np.expand_dims(g / n, -2), n, axis=-2),)

    return _make(data, (x,), vjp)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy between softmax(logits) rows and integer targets.

    logits: (B, K); targets: (B,) ints. Log-sum-exp computed in 64-bit.
    """
    logits = _as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or t.shape != (logits.shape[0],):
        raise ShapeMismatch("cross-entropy operands", logits.shape, t.shape)
    z = logits.data.astype(np.float64)
    zmax = z.max(axis=-1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=-1))
    b = z.shape[0]
    data = np.asarray((lse - z[np.arange(b), t]).mean(), dtype=logits.dtype)
    p = np.exp(z - lse[:, None])

    def vjp(g):
        gz = p.copy()
        gz[np.arange(b), t] -= 1.0
        return ((np.float64(g.reshape(())) / b * gz).astype(logits.dtype),)

    return _make(data, (logits,), vjp)


def bce_with_logits(logits, targets):
    """Mean elementwise binary cross-entropy of sigmoid(logits) vs targets.

    Stable log1p/exp formulation; mean over every element.
    """
    logits = _as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeMismatch("bce operands", logits.shape, y.shape)
    z = logits.data.astype(np.float64)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    data = np.asarray(per.mean(), dtype=logits.dtype)
    sig = 1.0 / (1.0 + np.exp(-z))

    def vjp(g):
        return ((np.float64(g.reshape(())) / n * (sig - y)).astype(logits.dtype),)

    return _make(data, (logits,), vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Populate .grad on every requires_grad leaf reachable from `loss`.

    Gradients accumulate additively across multiple uses of a tensor and
    across repeated backward calls. The recorded graph is released afterward.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {getattr(loss, 'shape', None)}")

    topo, visited = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._parents:
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in topo:
        node._parents = None
        node._vjp = None
