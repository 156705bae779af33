"""Dense tensors with reverse-mode automatic differentiation.

The engine is deliberately small: numpy arrays as storage, one closure per
operation for the backward pass, and a topological sweep from the loss node.
Everything the models need (affine layers, 1D char convolution, LSTM gates,
batch norm, dropout, softmax cross-entropy) is built from the ops below.

Values are float32 by default; float64 inputs are kept as-is so gradient
checks can run in a 64-bit shadow mode.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ademiner.errors import (
    ConfigurationError,
    EmptySequenceError,
    LabelError,
    NumericError,
    ShapeError,
)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(np.float32, copy=False)


class Tensor:
    """A numpy-backed value that remembers how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_prev")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._backward = None
        self._prev = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep seeding d(self)/d(self) = 1."""
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in seen:
                    stack.append((child, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Pickling drops the graph: only leaf state travels across processes.
    def __getstate__(self):
        return {"data": self.data, "requires_grad": self.requires_grad, "name": self.name}

    def __setstate__(self, state):
        self.data = state["data"]
        self.requires_grad = state["requires_grad"]
        self.name = state.get("name")
        self.grad = None
        self._backward = None
        self._prev = ()

    # Operator sugar used throughout the layers.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data, children, backward):
    requires = _grad_enabled and any(c.requires_grad for c in children)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._prev = tuple(children)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    grad = _unbroadcast(np.asarray(grad), tensor.data.shape)
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad.astype(tensor.data.dtype, copy=False)


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(out_data, (a, b), backward)


def sub(a, b):
    return add(a, neg(_wrap(b)))


def neg(a):
    a = _wrap(a)

    def backward(g):
        _accumulate(a, -g)

    return _node(-a.data, (a,), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _node(out_data, (a, b), backward)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data / b.data

    def backward(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * a.data / (b.data * b.data))

    return _node(out_data, (a, b), backward)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul requires (m,k) x (k,n), got {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _node(out_data, (a, b), backward)


def sqrt(a):
    a = _wrap(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / np.maximum(out_data, np.finfo(out_data.dtype).tiny))

    return _node(out_data, (a,), backward)


def tensor_sum(a):
    a = _wrap(a)

    def backward(g):
        _accumulate(a, np.full_like(a.data, g))

    return _node(a.data.sum(), (a,), backward)


def mean(a, axis=None):
    a = _wrap(a)
    out_data = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is None:
            _accumulate(a, np.full_like(a.data, g / count))
        else:
            _accumulate(a, np.expand_dims(np.asarray(g), axis) / count * np.ones_like(a.data))

    return _node(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# shape surgery


def reshape(a, shape):
    a = _wrap(a)

    def backward(g):
        _accumulate(a, np.asarray(g).reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise EmptySequenceError("concat needs at least one tensor")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            _accumulate(t, g[tuple(index)])
            offset += size

    return _node(out_data, tuple(tensors), backward)


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    a = _wrap(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accumulate(a, full)

    return _node(a.data[index].copy(), (a,), backward)


def gather_rows(a, indices):
    """Select rows by index; the backward pass scatter-adds."""
    a = _wrap(a)
    indices = np.asarray(indices, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, indices, g)
        _accumulate(a, full)

    return _node(a.data[indices], (a,), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a):
    a = _wrap(a)
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out_data = out_data.astype(x.dtype, copy=False)

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward)


def tanh(a):
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), backward)


def leaky_relu(a, slope=0.01):
    a = _wrap(a)
    out_data = np.where(a.data > 0, a.data, slope * a.data).astype(a.dtype, copy=False)

    def backward(g):
        _accumulate(a, g * np.where(a.data > 0, 1.0, slope))

    return _node(out_data, (a,), backward)


def softmax(a, axis=-1):
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(a, out_data * (g - inner))

    return _node(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# structured ops


def conv1d(x, filters, bias=None):
    """Same-padded 1D convolution over a (L, C_in) sequence.

    ``filters`` has shape (K, C_in, F) with K odd; the output is (L, F) and
    positions past either edge read zeros.
    """
    x, filters = _wrap(x), _wrap(filters)
    if x.ndim != 2 or filters.ndim != 3:
        raise ShapeError(f"conv1d expects (L,C) input and (K,C,F) filters, got {x.shape} and {filters.shape}")
    length, c_in = x.shape
    k, f_cin, n_filters = filters.shape
    if length < 1:
        raise EmptySequenceError("conv1d input has no positions")
    if k % 2 == 0:
        raise ConfigurationError(f"conv1d kernel size must be odd, got {k}")
    if f_cin != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape} vs filters {filters.shape}")
    if bias is not None:
        bias = _wrap(bias)
        if bias.shape != (n_filters,):
            raise ShapeError(f"conv1d bias must be ({n_filters},), got {bias.shape}")

    pad = k // 2
    padded = np.zeros((length + 2 * pad, c_in), dtype=x.dtype)
    padded[pad:pad + length] = x.data
    # windows[l, j, c] = padded[l + j, c]
    windows = np.lib.stride_tricks.sliding_window_view(padded, k, axis=0)  # (L, C, K)
    windows = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(length, k * c_in)
    w_flat = filters.data.reshape(k * c_in, n_filters)
    out_data = windows @ w_flat
    if bias is not None:
        out_data = out_data + bias.data

    children = (x, filters) if bias is None else (x, filters, bias)

    def backward(g):
        _accumulate(filters, (windows.T @ g).reshape(k, c_in, n_filters))
        if bias is not None:
            _accumulate(bias, g.sum(axis=0))
        g_windows = (g @ w_flat.T).reshape(length, k, c_in)
        g_padded = np.zeros_like(padded)
        for j in range(k):
            g_padded[j:j + length] += g_windows[:, j, :]
        _accumulate(x, g_padded[pad:pad + length])

    return _node(out_data, children, backward)


def max_over_time(x):
    """Column-wise maximum of a (L, F) sequence, yielding (F,)."""
    x = _wrap(x)
    if x.ndim != 2:
        raise ShapeError(f"max_over_time expects a (L,F) input, got {x.shape}")
    if x.shape[0] < 1:
        raise EmptySequenceError("max_over_time over an empty sequence")
    arg = x.data.argmax(axis=0)
    out_data = x.data[arg, np.arange(x.shape[1])]

    def backward(g):
        full = np.zeros_like(x.data)
        full[arg, np.arange(x.data.shape[1])] = g
        _accumulate(x, full)

    return _node(out_data, (x,), backward)


def dropout(x, rate, rng, training=True):
    """Inverted dropout: survivors are scaled by 1/(1-rate) during training."""
    x = _wrap(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)

    def backward(g):
        _accumulate(x, g * mask)

    return _node(x.data * mask, (x,), backward)


def softmax_cross_entropy(logits, labels, weights=None, normalizer=None):
    """Mean (or weighted) cross-entropy between softmax(logits) and int labels.

    With unit weights this is the batch mean of -log softmax at the true
    class, and the logit gradient is (softmax - onehot) / B.
    """
    logits = _wrap(logits)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects (B,C) logits, got {logits.shape}")
    batch, n_classes = logits.shape
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (batch,):
        raise ShapeError(f"labels must have shape ({batch},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes}), got range [{labels.min()}, {labels.max()}]")

    if weights is None:
        w = np.ones(batch, dtype=logits.dtype)
    else:
        w = np.asarray(weights, dtype=logits.dtype)
        if w.shape != (batch,):
            raise ShapeError(f"weights must have shape ({batch},), got {w.shape}")
    denom = float(w.sum()) if normalizer is None else float(normalizer)
    if denom <= 0:
        raise ConfigurationError("cross-entropy normalizer must be positive")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    losses = -log_probs[np.arange(batch), labels]
    out_data = np.asarray((losses * w).sum() / denom, dtype=logits.dtype)

    def backward(g):
        onehot = np.zeros_like(probs)
        onehot[np.arange(batch), labels] = 1.0
        _accumulate(logits, g * (probs - onehot) * (w / denom)[:, None])

    return _node(out_data, (logits,), backward)


def check_finite(tensor, what="input"):
    """Raise NumericError if any value is non-finite."""
    t = _wrap(tensor)
    if not np.isfinite(t.data).all():
        raise NumericError(f"non-finite values in {what}")
    return t
