"""Layers with hand-written forward and backward passes.

Activations use NHWC layout: (batch, height, width, channels).
Every layer exposes ``forward(x) -> (out, cache)`` and
``backward(dout, cache) -> (dx, grads)`` where ``grads`` maps parameter
names to arrays shaped like ``params``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    kind = "layer"
    # False for layers whose parameters are fixed statistics, never optimised
    learnable = True

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.trainable = True

    def init_params(self, in_shape, rng):
        """Allocate parameters for an input of per-sample shape ``in_shape``.

        Returns the per-sample output shape.
        """
        return self.output_shape(in_shape)

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def config(self) -> dict:
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout, cache):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


def kaiming_uniform(fan_in, shape, rng):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2D(Layer):
    """Square-kernel convolution, no padding."""

    kind = "conv"

    def __init__(self, kernel: int, out_channels: int, stride: int = 1):
        super().__init__()
        if kernel < 1 or stride < 1 or out_channels < 1:
            raise ValueError("kernel, stride and out_channels must be positive")
        self.kernel = kernel
        self.stride = stride
        self.out_channels = out_channels

    def config(self):
        return {"kernel": self.kernel, "out_channels": self.out_channels,
                "stride": self.stride}

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ValueError(f"Conv2D expects (H, W, C) input, got {in_shape}")
        h, w, _ = in_shape
        k, s = self.kernel, self.stride
        if h < k or w < k:
            raise ValueError(f"input {h}x{w} smaller than kernel {k}")
        return ((h - k) // s + 1, (w - k) // s + 1, self.out_channels)

    def init_params(self, in_shape, rng):
        out_shape = self.output_shape(in_shape)
        c = in_shape[2]
        fan_in = self.kernel * self.kernel * c
        # weight rows ordered (ky, kx, c_in) to match the im2col layout below
        self.params = {
            "W": kaiming_uniform(fan_in, (fan_in, self.out_channels), rng),
            "b": np.zeros(self.out_channels),
        }
        return out_shape

    def _cols(self, x):
        k, s = self.kernel, self.stride
        win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
        # (N, Ho, Wo, C, k, k) -> (N, Ho, Wo, k, k, C)
        win = win.transpose(0, 1, 2, 4, 5, 3)
        n, ho, wo = win.shape[:3]
        return win.reshape(n * ho * wo, -1), (n, ho, wo)

    def forward(self, x):
        cols, (n, ho, wo) = self._cols(x)
        out = cols @ self.params["W"] + self.params["b"]
        return out.reshape(n, ho, wo, self.out_channels), (x.shape, cols)

    def backward(self, dout, cache, need_dx=True):
        x_shape, cols = cache
        d2 = dout.reshape(-1, self.out_channels)
        grads = None
        if self.trainable:
            grads = {"W": cols.T @ d2, "b": d2.sum(axis=0)}
        if not need_dx:
            return None, grads
        n, h, w, c = x_shape
        k, s = self.kernel, self.stride
        ho, wo = dout.shape[1:3]
        dcols = (d2 @ self.params["W"].T).reshape(n, ho, wo, k, k, c)
        dx = np.zeros(x_shape, dtype=dcols.dtype)
        for i in range(k):
            for j in range(k):
                dx[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[:, :, :, i, j, :]
        return dx, grads


class MaxPool(Layer):
    """Non-overlapping k x k max pooling; trailing rows/columns are dropped."""

    kind = "maxpool"

    def __init__(self, k: int = 2):
        super().__init__()
        if k < 1:
            raise ValueError("pool size must be positive")
        self.k = k

    def config(self):
        return {"k": self.k}

    def output_shape(self, in_shape):
        h, w, c = in_shape
        if h < self.k or w < self.k:
            raise ValueError(f"input {h}x{w} smaller than pool {self.k}")
        return (h // self.k, w // self.k, c)

    def forward(self, x):
        n, h, w, c = x.shape
        k = self.k
        ho, wo = h // k, w // k
        xr = x[:, :ho * k, :wo * k, :].reshape(n, ho, k, wo, k, c)
        out = xr[:, :, 0, :, 0, :].copy()
        for i in range(k):
            for j in range(k):
                if i or j:
                    np.maximum(out, xr[:, :, i, :, j, :], out=out)
        return out, (x.shape, xr, out)

    def backward(self, dout, cache, need_dx=True):
        if not need_dx:
            return None, None
        x_shape, xr, out = cache
        n, ho, k, wo, _, c = xr.shape
        dxr = np.zeros(xr.shape, dtype=dout.dtype)
        # ties route the gradient to the first maximal element in row-major window order
        taken = np.zeros(out.shape, dtype=bool)
        for i in range(k):
            for j in range(k):
                hit = xr[:, :, i, :, j, :] == out
                hit &= ~taken
                taken |= hit
                dxr[:, :, i, :, j, :] = dout * hit
        dx = np.zeros(x_shape, dtype=dout.dtype)
        dx[:, :ho * k, :wo * k, :] = dxr.reshape(n, ho * k, wo * k, c)
        return dx, None


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dout, cache, need_dx=True):
        if not need_dx:
            return None, None
        return dout * cache, None


class GlobalAvgPool(Layer):
    kind = "gap"

    def output_shape(self, in_shape):
        return (in_shape[-1],)

    def forward(self, x):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dout, cache, need_dx=True):
        if not need_dx:
            return None, None
        n, h, w, c = cache
        dx = np.broadcast_to(dout[:, None, None, :] / (h * w), cache)
        return np.array(dx), None


class Dense(Layer):
    """Fully connected layer; inputs with more than one axis are flattened."""

    kind = "dense"

    def __init__(self, units: int):
        super().__init__()
        if units < 1:
            raise ValueError("units must be positive")
        self.units = units

    def config(self):
        return {"units": self.units}

    def output_shape(self, in_shape):
        return (self.units,)

    def init_params(self, in_shape, rng):
        fan_in = int(np.prod(in_shape))
        self.params = {
            "W": kaiming_uniform(fan_in, (fan_in, self.units), rng),
            "b": np.zeros(self.units),
        }
        return (self.units,)

    def forward(self, x):
        x2 = x.reshape(x.shape[0], -1)
        return x2 @ self.params["W"] + self.params["b"], (x.shape, x2)

    def backward(self, dout, cache, need_dx=True):
        x_shape, x2 = cache
        grads = None
        if self.trainable:
            grads = {"W": x2.T @ dout, "b": dout.sum(axis=0)}
        dx = None
        if need_dx:
            dx = (dout @ self.params["W"].T).reshape(x_shape)
        return dx, grads


class Standardize(Layer):
    """Per-channel ``(x - mean) / std`` with statistics fitted to training images."""

    kind = "standardize"
    learnable = False

    def init_params(self, in_shape, rng):
        c = in_shape[-1]
        self.params = {"mean": np.zeros(c), "std": np.ones(c)}
        return tuple(in_shape)

    def fit(self, images, chunk: int = 256):
        c = images.shape[-1]
        total = np.zeros(c)
        sq = np.zeros(c)
        count = 0
        for i in range(0, len(images), chunk):
            block = np.asarray(images[i:i + chunk], dtype=np.float64).reshape(-1, c)
            total += block.sum(axis=0)
            sq += (block * block).sum(axis=0)
            count += block.shape[0]
        mean = total / count
        std = np.sqrt(np.maximum(sq / count - mean * mean, 0.0))
        dtype = self.params["mean"].dtype if self.params else np.float64
        self.params = {"mean": mean.astype(dtype),
                       "std": np.maximum(std, 1e-6).astype(dtype)}
        return self

    def forward(self, x):
        return (x - self.params["mean"]) / self.params["std"], None

    def backward(self, dout, cache, need_dx=True):
        if not need_dx:
            return None, None
        return dout / self.params["std"], None


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool, ReLU, GlobalAvgPool, Dense,
                                         Standardize)}


def layer_from_config(kind: str, config: dict) -> Layer:
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return cls(**config)
