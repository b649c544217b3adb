"""Shared test utilities: finite-difference gradient checking."""

import numpy as np

from pathsage import autograd as ag


def fd_grad(fn, arr, step=1e-6):
    """Central finite difference of scalar fn at arr (64-bit)."""
    arr = np.asarray(arr, dtype=np.float64)
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(arr)
        flat[i] = orig - step
        lo = fn(arr)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def check_grad(build_loss, arrays, step=1e-6, rtol=1e-4, atol=1e-8):
    """Compare backward() grads against central differences.

    build_loss takes a list of float64 Tensors (requires_grad) and returns
    a scalar Tensor. Returns the max relative error observed.
    """
    tensors = [ag.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)
               for a in arrays]
    loss = build_loss(tensors)
    ag.backward(loss)
    worst = 0.0
    for idx, t in enumerate(tensors):
        def fn(x, idx=idx):
            probes = [ag.Tensor(np.asarray(a, dtype=np.float64)) for a in arrays]
            probes[idx] = ag.Tensor(x.copy())
            return build_loss(probes).item()

        numeric = fd_grad(fn, np.asarray(arrays[idx], dtype=np.float64), step=step)
        got = t.grad if t.grad is not None else np.zeros_like(numeric)
        denom = np.maximum(np.abs(numeric), np.abs(got))
        err = np.abs(got - numeric)
        rel = np.where(err <= atol, 0.0, err / np.maximum(denom, 1e-12))
        worst = max(worst, float(rel.max()))
        assert (rel <= rtol).all(), (
            f"tensor {idx}: max rel err {rel.max():.3e} (fd {numeric.reshape(-1)[:4]}, "
            f"ad {got.reshape(-1)[:4]})")
    return worst


def rel_err(a, b, atol=1e-10):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    err = np.abs(a - b)
    return np.where(err <= atol, 0.0, err / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12))
