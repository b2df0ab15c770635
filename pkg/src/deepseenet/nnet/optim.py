"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, step: int, where: str = ""):
        self.step = step
        super().__init__(f"non-finite gradient at step {step}{' in ' + where if where else ''}")


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """Apply one Adam update in place.

    ``params`` and ``grads`` map the same keys to equally shaped arrays;
    keys missing from ``grads`` (frozen parameters) are left untouched.
    Raises :class:`NonFiniteGradientError` before modifying anything if a
    gradient contains NaN or inf.
    """
    for key, g in grads.items():
        if key not in params:
            raise KeyError(f"gradient for unknown parameter {key!r}")
        if g.shape != params[key].shape:
            raise ValueError(f"shape mismatch for {key!r}: {g.shape} vs {params[key].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(state.t + 1, str(key))

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(params[key])
            state.v[key] = np.zeros_like(params[key])
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[key] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Adam bound to a :class:`~deepseenet.nnet.network.Network`."""

    def __init__(self, net, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net = net
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, layer_grads):
        params, grads = {}, {}
        for i, layer in enumerate(self.net.layers):
            g = layer_grads[i] if i < len(layer_grads) else None
            if g is None or not (layer.trainable and layer.learnable):
                continue
            for name, arr in layer.params.items():
                params[(i, name)] = arr
                grads[(i, name)] = g[name]
        adam_step(params, grads, self.state)
