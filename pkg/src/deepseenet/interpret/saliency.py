"""Image-specific class saliency: |d class logit / d pixel|."""

from __future__ import annotations

import numpy as np


def input_gradient(net, image: np.ndarray, class_index: int) -> np.ndarray:
    """Gradient of one class logit w.r.t. the input image (H, W, C)."""
    if not 0 <= class_index < net.num_classes:
        raise ValueError(f"class index {class_index} outside [0, {net.num_classes})")
    logits, caches = net.forward(image[None])
    dlogits = np.zeros_like(logits)
    dlogits[0, class_index] = 1.0
    _, dx = net.backward(caches, dlogits, input_grad=True)
    return dx[0]


def saliency(net, image: np.ndarray, class_index: int) -> np.ndarray:
    """Saliency map with the spatial shape of ``image``.

    Per pixel, the maximum absolute logit gradient across colour channels,
    divided by the map maximum; an all-zero map is returned unchanged.
    """
    grad = input_gradient(net, image, class_index)
    smap = np.abs(grad).max(axis=-1) if grad.ndim == 3 else np.abs(grad)
    peak = smap.max()
    return smap / peak if peak > 0 else smap


def top_mass_fraction(smap: np.ndarray, region: np.ndarray, top: float = 0.05) -> float:
    """Share of the saliency mass of the top ``top`` fraction of pixels lying in ``region``."""
    flat = smap.ravel()
    k = max(1, int(round(top * flat.size)))
    idx = np.argsort(-flat, kind="stable")[:k]
    mass = flat[idx].sum()
    if mass == 0:
        return 0.0
    return float(flat[idx][region.ravel()[idx]].sum() / mass)
