"""Layer building blocks on top of the tensor engine."""

from __future__ import annotations

import numpy as np

from ademiner.errors import ConfigurationError, EmptySequenceError, ShapeError
from ademiner.nn import tensor as T
from ademiner.nn.tensor import Tensor


def glorot(rng, shape):
    """Uniform Glorot init, float32."""
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


class Module:
    """Minimal parameter container: walks attributes for Tensors and Modules."""

    def params(self):
        out = {}
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                for sub, p in value.params().items():
                    out[f"{key}.{sub}"] = p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, p in item.params().items():
                            out[f"{key}.{i}.{sub}"] = p
        return out

    def state_arrays(self):
        """Trainable parameters plus non-trainable buffers, as numpy arrays."""
        out = {name: p.data for name, p in self.params().items()}
        for key, value in vars(self).items():
            if isinstance(value, Module):
                for sub, arr in value.state_arrays().items():
                    out.setdefault(f"{key}.{sub}", arr)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, arr in item.state_arrays().items():
                            out.setdefault(f"{key}.{i}.{sub}", arr)
        for name in getattr(self, "buffers", ()):
            out[name] = getattr(self, name)
        return out

    def load_state_arrays(self, arrays, prefix=""):
        for name, p in self.params().items():
            full = prefix + name
            if full not in arrays:
                raise ShapeError(f"missing tensor {full!r} in saved state")
            arr = arrays[full]
            if tuple(arr.shape) != tuple(p.data.shape):
                raise ShapeError(f"tensor {full!r} has shape {arr.shape}, expected {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)
        self._load_buffers(arrays, prefix)

    def _load_buffers(self, arrays, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Module):
                value._load_buffers(arrays, f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        item._load_buffers(arrays, f"{prefix}{key}.{i}.")
        for name in getattr(self, "buffers", ()):
            full = prefix + name
            if full in arrays:
                setattr(self, name, arrays[full].astype(np.float32, copy=True))


def dense(x, weight, bias, activation="linear", slope=0.01):
    """Affine transform followed by one of the supported activations."""
    out = T.add(T.matmul(x, weight), bias)
    if activation == "linear":
        return out
    if activation == "leaky_relu":
        return T.leaky_relu(out, slope)
    if activation == "softmax":
        return T.softmax(out, axis=-1)
    raise ConfigurationError(f"unknown activation {activation!r}")


class Dense(Module):
    def __init__(self, rng, in_dim, out_dim, activation="linear", slope=0.01):
        self.weight = Tensor(glorot(rng, (in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim, dtype=np.float32), requires_grad=True)
        self.activation = activation
        self.slope = slope

    def __call__(self, x):
        return dense(x, self.weight, self.bias, self.activation, self.slope)


def batch_norm(x, gamma, beta, running_mean, running_var, training, eps=1e-5, momentum=0.1):
    """Batch normalization over axis 0 of a (B, D) input.

    Training mode normalizes with batch statistics and returns updated
    running stats (momentum 0.1, biased batch variance); inference mode
    normalizes with the running stats it is given.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"batch_norm expects a (B,D) input, got {x.shape}")
    if training:
        if x.shape[0] < 2:
            raise ShapeError(f"batch_norm needs a batch of at least 2 rows in training mode, got {x.shape[0]}")
        mu = T.mean(x, axis=0)
        centered = T.sub(x, mu)
        var = T.mean(T.mul(centered, centered), axis=0)
        inv = T.div(centered, T.sqrt(T.add(var, eps)))
        out = T.add(T.mul(inv, gamma), beta)
        new_mean = (1.0 - momentum) * running_mean + momentum * mu.data
        new_var = (1.0 - momentum) * running_var + momentum * var.data
        return out, new_mean.astype(np.float32), new_var.astype(np.float32)
    scale = 1.0 / np.sqrt(running_var + eps)
    normalized = T.mul(T.sub(x, Tensor(running_mean)), Tensor(scale))
    out = T.add(T.mul(normalized, gamma), beta)
    return out, running_mean, running_var


class BatchNorm(Module):
    buffers = ("running_mean", "running_var")

    def __init__(self, dim, eps=1e-5, momentum=0.1):
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(dim, dtype=np.float32)
        self.running_var = np.ones(dim, dtype=np.float32)
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x, training):
        out, mean_, var_ = batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training, self.eps, self.momentum,
        )
        if training:
            self.running_mean = mean_
            self.running_var = var_
        return out


def lstm_step(x, state, weights):
    """One LSTM cell update.

    ``x`` is (B, D) or (D,), ``state`` is an (h, c) pair of (B, H) / (H,),
    ``weights`` is (Wx: D x 4H, Wh: H x 4H, b: 4H) with gate order
    input, forget, candidate, output. Sigmoid gates, tanh candidate and
    output squashing.
    """
    wx, wh, b = weights
    squeeze = False
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim == 1:
        x = T.reshape(x, (1, x.shape[0]))
        squeeze = True
    T.check_finite(x, "lstm_step input")
    h, c = state
    if not isinstance(h, Tensor):
        h = Tensor(h)
    if not isinstance(c, Tensor):
        c = Tensor(c)
    if h.ndim == 1:
        h = T.reshape(h, (1, h.shape[0]))
        c = T.reshape(c, (1, c.shape[0]))
    hidden = wh.shape[0]
    if wx.shape[1] != 4 * hidden or wh.shape[1] != 4 * hidden or b.shape != (4 * hidden,):
        raise ShapeError(
            f"inconsistent LSTM weights: Wx {wx.shape}, Wh {wh.shape}, b {b.shape}"
        )
    z = T.add(T.add(T.matmul(x, wx), T.matmul(h, wh)), b)
    i = T.sigmoid(T.narrow(z, 1, 0, hidden))
    f = T.sigmoid(T.narrow(z, 1, hidden, hidden))
    g = T.tanh(T.narrow(z, 1, 2 * hidden, hidden))
    o = T.sigmoid(T.narrow(z, 1, 3 * hidden, hidden))
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    if squeeze:
        h_new = T.reshape(h_new, (hidden,))
        c_new = T.reshape(c_new, (hidden,))
    return h_new, c_new


class LstmCell(Module):
    def __init__(self, rng, in_dim, hidden):
        if hidden < 1:
            raise ConfigurationError(f"LSTM state size must be positive, got {hidden}")
        self.wx = Tensor(glorot(rng, (in_dim, 4 * hidden)), requires_grad=True)
        self.wh = Tensor(glorot(rng, (hidden, 4 * hidden)), requires_grad=True)
        self.bias = Tensor(np.zeros(4 * hidden, dtype=np.float32), requires_grad=True)
        self.hidden = hidden

    def step(self, x, state):
        return lstm_step(x, state, (self.wx, self.wh, self.bias))

    def initial_state(self, batch, dtype=np.float32):
        zeros = np.zeros((batch, self.hidden), dtype=dtype)
        return Tensor(zeros), Tensor(zeros.copy())


class BiLstm(Module):
    """Independent left-to-right and right-to-left passes, concatenated."""

    def __init__(self, rng, in_dim, hidden):
        self.forward_cell = LstmCell(rng, in_dim, hidden)
        self.backward_cell = LstmCell(rng, in_dim, hidden)
        self.hidden = hidden

    def run(self, steps, masks=None):
        """Run over a list of (B, D) timestep tensors.

        ``masks`` is an optional list of (B, 1) arrays; masked-out rows keep
        their previous state, which makes padded batches behave exactly like
        per-sequence processing in both directions.
        """
        if not steps:
            raise ShapeError("BiLstm.run needs at least one timestep")
        batch = steps[0].shape[0]
        forward = self._scan(self.forward_cell, steps, masks, batch)
        backward = self._scan(
            self.backward_cell, list(reversed(steps)),
            None if masks is None else list(reversed(masks)), batch,
        )
        backward.reverse()
        return [T.concat([f, b], axis=1) for f, b in zip(forward, backward)]

    def _scan(self, cell, steps, masks, batch):
        h, c = cell.initial_state(batch)
        outputs = []
        for t, x in enumerate(steps):
            h_new, c_new = cell.step(x, (h, c))
            if masks is not None:
                m = Tensor(masks[t])
                keep = Tensor(1.0 - masks[t])
                h = T.add(T.mul(h_new, m), T.mul(h, keep))
                c = T.add(T.mul(c_new, m), T.mul(c, keep))
            else:
                h, c = h_new, c_new
            outputs.append(h)
        return outputs


def bilstm(seq, layer):
    """Single-sequence convenience wrapper: (L, D) -> (L, 2H)."""
    seq = seq if isinstance(seq, Tensor) else Tensor(seq)
    if seq.ndim != 2:
        raise ShapeError(f"bilstm expects a (L,D) sequence, got {seq.shape}")
    if seq.shape[0] < 1:
        raise EmptySequenceError("bilstm over an empty sequence")
    steps = [T.narrow(seq, 0, t, 1) for t in range(seq.shape[0])]
    outputs = layer.run(steps)
    return T.concat(outputs, axis=0)


class MLP(Module):
    """Stack of affine layers with batch norm and leaky ReLU between them.

    Batch normalization follows every affine transform except the final
    softmax head, which stays linear so a cross-entropy loss can consume
    raw logits.
    """

    def __init__(self, rng, in_dim, hidden_sizes, out_dim, slope=0.01):
        self.layers = []
        self.norms = []
        prev = in_dim
        for width in hidden_sizes:
            self.layers.append(Dense(rng, prev, width, activation="linear"))
            self.norms.append(BatchNorm(width))
            prev = width
        self.head = Dense(rng, prev, out_dim, activation="linear")
        self.slope = slope

    def __call__(self, x, training=False, dropout_rate=0.0, rng=None):
        for layer, norm in zip(self.layers, self.norms):
            x = layer(x)
            x = norm(x, training)
            x = T.leaky_relu(x, self.slope)
            if training and dropout_rate > 0.0:
                x = T.dropout(x, dropout_rate, rng, training=True)
        return self.head(x)
