"""Minimal SVG figures: ROC panels, class-coloured scatter plots and saliency overlays.

Output is plain text with fixed number formatting, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import base64
from xml.sax.saxutils import escape

import numpy as np

from .imageproc import encode_png

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f")


def _f(x: float) -> str:
    return f"{x:.2f}"


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>']
                     + body + ["</svg>", ""])


def _text(x, y, s, anchor="middle", size=11):
    return (f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" '
            f'font-size="{size}">{escape(str(s))}</text>')


def _axes(x0, y0, size, xlabel, ylabel):
    out = [f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(size)}" height="{_f(size)}" '
           'fill="none" stroke="black"/>']
    for t in (0.0, 0.5, 1.0):
        out.append(_text(x0 + t * size, y0 + size + 14, f"{t:.1f}"))
        out.append(_text(x0 - 6, y0 + (1 - t) * size + 4, f"{t:.1f}", anchor="end"))
    out.append(_text(x0 + size / 2, y0 + size + 30, xlabel))
    out.append(f'<text x="{_f(x0 - 34)}" y="{_f(y0 + size / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 {_f(x0 - 34)} {_f(y0 + size / 2)})">{escape(ylabel)}</text>')
    return out


def roc_svg(curves: dict) -> str:
    """One square panel per ROC curve, side by side; ``curves`` maps title to RocCurve."""
    panel, pad = 220, 60
    width = len(curves) * (panel + pad) + pad
    height = panel + 90
    body = []
    for i, (title, curve) in enumerate(curves.items()):
        x0, y0 = pad + i * (panel + pad), 30
        body += _axes(x0, y0, panel, "1 - specificity", "sensitivity")
        body.append(f'<line x1="{_f(x0)}" y1="{_f(y0 + panel)}" x2="{_f(x0 + panel)}" '
                    f'y2="{_f(y0)}" stroke="#999" stroke-dasharray="4 3"/>')
        pts = " ".join(f"{_f(x0 + fx * panel)},{_f(y0 + (1 - ty) * panel)}"
                       for fx, ty in zip(curve.fpr, curve.tpr))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[0]}" '
                    'stroke-width="2"/>')
        body.append(_text(x0 + panel / 2, y0 - 10, title, size=13))
        body.append(_text(x0 + panel - 8, y0 + panel - 10, f"AUC = {curve.auc:.3f}",
                          anchor="end"))
    return _doc(width, height, body)


def scatter_svg(points: np.ndarray, classes, class_names, title: str = "") -> str:
    """2-D scatter, one colour per class, with a legend."""
    size, pad = 420, 40
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    unit = (pts - lo) / span
    body = [f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" '
            'stroke="#ccc"/>', _text(pad + size / 2, pad - 14, title, size=13)]
    for (u, v), c in zip(unit, classes):
        body.append(f'<circle cx="{_f(pad + u * size)}" cy="{_f(pad + (1 - v) * size)}" r="3" '
                    f'fill="{PALETTE[int(c) % len(PALETTE)]}" fill-opacity="0.8"/>')
    lx = pad + size + 20
    for i, name in enumerate(class_names):
        y = pad + 10 + 18 * i
        body.append(f'<circle cx="{lx}" cy="{y}" r="5" fill="{PALETTE[i % len(PALETTE)]}"/>')
        body.append(_text(lx + 10, y + 4, name, anchor="start"))
    return _doc(size + 2 * pad + 150, size + 2 * pad, body)


def _png_uri(img: np.ndarray) -> str:
    return "data:image/png;base64," + base64.b64encode(encode_png(img)).decode("ascii")


def saliency_svg(image: np.ndarray, smap: np.ndarray, title: str = "", scale: int = 3) -> str:
    """Source image and its saliency map side by side."""
    h, w = smap.shape
    dw, dh = w * scale, h * scale
    pad = 20
    body = [_text(pad + dw + pad / 2, 16, title, size=13)]
    for i, (img, caption) in enumerate(((image, "image"), (smap, "saliency"))):
        x = pad + i * (dw + pad)
        body.append(f'<image x="{x}" y="30" width="{dw}" height="{dh}" '
                    f'style="image-rendering:pixelated" href="{_png_uri(img)}"/>')
        body.append(_text(x + dw / 2, 30 + dh + 16, caption))
    return _doc(2 * dw + 3 * pad, dh + 60, body)
