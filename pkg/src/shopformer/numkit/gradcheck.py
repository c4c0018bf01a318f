"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numeric_grad(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f().item()
        flat[i] = orig - eps
        down = f().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest element-wise gap, relative to the larger gradient's magnitude."""
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Return the worst relative error over ``inputs`` between backprop and finite differences.

    ``f`` must rebuild the graph from the current values of ``inputs`` on each
    call and return a scalar tensor.
    """
    for x in inputs:
        x.grad = None
    backward(f())
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        worst = max(worst, relative_error(analytic, numeric_grad(f, x, eps)))
    return worst


def check_model_gradients(f: Callable[[], Tensor], params: dict, eps: float = 1e-5) -> tuple[float, dict]:
    """Joint check over every parameter of a model.

    The error is scaled by the largest gradient entry across all parameters,
    so a parameter whose true gradient is exactly zero is judged against the
    model's gradient scale rather than against itself. Returns the joint
    error and the per-parameter absolute gaps.
    """
    for p in params.values():
        p.grad = None
    backward(f())
    gaps, scale = {}, 1e-8
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_grad(f, p, eps)
        gaps[name] = float(np.max(np.abs(analytic - numeric), initial=0.0))
        scale = max(scale, np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0))
    return max(gaps.values(), default=0.0) / scale, gaps
