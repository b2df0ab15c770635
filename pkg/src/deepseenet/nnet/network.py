"""Sequential network container, softmax cross-entropy and backpropagation."""

from __future__ import annotations

import copy

import numpy as np

from .layers import Conv2D, Dense, GlobalAvgPool, Layer, MaxPool, ReLU, Standardize


class ShapeError(ValueError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    return float(loss), dlogits / n


class Network:
    """An ordered stack of layers mapping (N, *input_shape) to class logits.

    Parameters are created by :meth:`initialize` from a seed so that the
    same (architecture, seed) pair always yields identical weights.
    """

    def __init__(self, layers: list[Layer], input_shape, num_classes: int | None = None,
                 dtype=np.float64):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)
        self.input_shape = tuple(int(s) for s in input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if len(shape) != 1:
            raise ShapeError(f"network output must be a vector, got shape {shape}")
        if num_classes is not None and shape[0] != num_classes:
            raise ShapeError(f"final width {shape[0]} != class count {num_classes}")
        self.num_classes = shape[0]

    def initialize(self, seed: int) -> "Network":
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.init_params(shape, rng)
        self.astype(self.dtype)
        return self

    def astype(self, dtype) -> "Network":
        """Cast all parameters (and subsequent computation) to ``dtype`` in place."""
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            for name, arr in layer.params.items():
                layer.params[name] = np.asarray(arr, dtype=self.dtype)
        return self

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    # parameter access -------------------------------------------------------

    def parameters(self, trainable_only: bool = False):
        """Yield ``(layer_index, name, array)`` in a fixed order.

        With ``trainable_only``, frozen layers and fixed-statistics layers
        are skipped.
        """
        for i, layer in enumerate(self.layers):
            if trainable_only and not (layer.trainable and layer.learnable):
                continue
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def num_parameters(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    def set_trainable(self, flags):
        for layer, flag in zip(self.layers, flags, strict=True):
            layer.trainable = bool(flag)

    def layer_shapes(self):
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        return shapes

    # forward / backward -----------------------------------------------------

    def forward(self, x: np.ndarray, upto: int | None = None):
        """Run layers ``[0, upto)``; returns the output and the per-layer caches."""
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"batch shape {x.shape[1:]} != network input {self.input_shape}")
        caches = []
        for layer in self.layers[:upto]:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dout: np.ndarray, input_grad: bool = False):
        """Backpropagate ``dout`` (gradient w.r.t. the network output).

        Returns ``(grads, dx)``: ``grads[i]`` is a dict of parameter
        gradients for layer ``i`` or ``None`` for frozen and parameter-free
        layers; ``dx`` is the input gradient when ``input_grad`` is set.
        """
        n = len(caches)
        grads: list[dict | None] = [None] * n
        # below the first trainable layer nothing needs a gradient
        first_needed = 0 if input_grad else next(
            (i for i, layer in enumerate(self.layers[:n])
             if layer.trainable and layer.learnable and layer.params),
            n,
        )
        for i in range(n - 1, first_needed - 1, -1):
            need_dx = i > first_needed or input_grad
            dout, grads[i] = self.layers[i].backward(dout, caches[i], need_dx=need_dx)
        return grads, (dout if input_grad else None)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        out = [softmax(self.logits(x[i:i + batch_size])) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.num_classes))

    def loss_and_grads(self, x, labels):
        logits, caches = self.forward(x)
        loss, dlogits = cross_entropy(logits, labels)
        grads, _ = self.backward(caches, dlogits)
        return loss, grads

    def __repr__(self):
        inner = ", ".join(repr(layer) for layer in self.layers)
        return f"Network(input_shape={self.input_shape}, layers=[{inner}])"


def backbone_layers(widths=(8, 16, 32), kernel: int = 3, pool: int = 2) -> list[Layer]:
    """Conv-ReLU(-MaxPool) blocks ending in global average pooling."""
    layers: list[Layer] = []
    for i, w in enumerate(widths):
        layers += [Conv2D(kernel, w), ReLU()]
        if i < len(widths) - 1:
            layers.append(MaxPool(pool))
    layers.append(GlobalAvgPool())
    return layers


def default_network(num_classes: int, side: int = 224, hidden: int = 128,
                    widths=(8, 16, 32), dtype=np.float64, standardize: bool = True) -> Network:
    """The desk-scale classifier: input standardisation, conv backbone,
    Dense(hidden)-ReLU, Dense(classes)."""
    layers = [Standardize()] if standardize else []
    layers += backbone_layers(widths) + [Dense(hidden), ReLU(), Dense(num_classes)]
    return Network(layers, (side, side, 3), num_classes, dtype=dtype)


def fit_input_standardization(net: Network, images) -> Network:
    """Set the statistics of a leading :class:`Standardize` layer from ``images``."""
    if net.layers and isinstance(net.layers[0], Standardize):
        net.layers[0].fit(images)
        net.astype(net.dtype)
    return net


def backbone_length(net: Network) -> int:
    """Number of leading layers up to and including the global pooling layer."""
    for i, layer in enumerate(net.layers):
        if isinstance(layer, GlobalAvgPool):
            return i + 1
    raise ValueError("network has no global pooling layer")
