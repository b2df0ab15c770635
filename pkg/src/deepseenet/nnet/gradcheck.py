"""Central finite-difference verification of backpropagated gradients."""

from __future__ import annotations

import numpy as np

from .network import Network, cross_entropy


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _loss(net, x, y):
    return cross_entropy(net.forward(x)[0], y)[0]


def grad_check(net: Network, batch, eps: float = 1e-4, max_params: int = 10_000,
               seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative error between backprop and central differences.

    ``batch`` is ``(x, labels)``; the objective is mean softmax
    cross-entropy. Up to ``max_params`` trainable parameter entries are
    sampled without replacement. The network should use float64.
    """
    x, y = batch
    _, grads = net.loss_and_grads(x, y)
    entries = [(i, name) for i, name, _ in net.parameters(trainable_only=True)]
    sizes = [net.layers[i].params[name].size for i, name in entries]
    total = sum(sizes)
    if total == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=min(max_params, total), replace=False)
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for f in np.sort(flat):
        k = int(np.searchsorted(bounds, f, side="right") - 1)
        i, name = entries[k]
        arr = net.layers[i].params[name]
        idx = np.unravel_index(f - bounds[k], arr.shape)
        old = arr[idx]
        arr[idx] = old + eps
        up = _loss(net, x, y)
        arr[idx] = old - eps
        down = _loss(net, x, y)
        arr[idx] = old
        numeric = (up - down) / (2 * eps)
        analytic = grads[i][name][idx]
        worst = max(worst, float(relative_error(analytic, numeric, floor)))
    return worst


def input_grad_check(fn, x: np.ndarray, dfn, eps: float = 1e-5, floor: float = 1e-8) -> float:
    """Check ``dfn(x)`` against central differences of the scalar ``fn`` at every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    analytic = dfn(x)
    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + eps
        up = fn(x)
        x[idx] = old - eps
        down = fn(x)
        x[idx] = old
        numeric[idx] = (up - down) / (2 * eps)
    return float(relative_error(analytic, numeric, floor).max())
