"""Central-finite-difference gradient checking in 64-bit shadow mode."""

from __future__ import annotations

import numpy as np

from ademiner.nn.tensor import Tensor


def numeric_gradient(fn, tensors, index, h=1e-3):
    """d fn / d tensors[index] via central differences, elementwise."""
    target = tensors[index]
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = float(fn(*tensors).data)
        flat[i] = original - h
        minus = float(fn(*tensors).data)
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric):
    """Elementwise |a - n| / max(|n|, 1), reduced to the worst entry."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(fn, arrays, h=1e-3, rel_tol=1e-4):
    """Compare reverse-mode gradients of a scalar-valued fn to finite differences.

    ``arrays`` are float64 numpy inputs; each becomes a requires_grad leaf.
    Returns the worst relative error across all inputs and asserts nothing.
    """
    tensors = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    if out.data.ndim != 0 and out.data.size != 1:
        raise ValueError("check_gradients needs a scalar-valued function")
    out.backward()
    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(fn, tensors, i, h=h)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst
