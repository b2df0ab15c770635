"""Netpbm image I/O plus the square-crop / bilinear-resize preprocessing.

Images are float arrays of shape (height, width, 3) with values in [0, 1].
"""

from __future__ import annotations

import re
import struct
import zlib

import numpy as np

from .errors import DataError

__all__ = [
    "DecodeError",
    "decode",
    "decode_ppm",
    "encode_ppm",
    "encode_pgm",
    "encode_png",
    "read_image",
    "write_ppm",
    "crop_square",
    "crop_offsets",
    "resize_bilinear",
    "preprocess",
]


class DecodeError(DataError):
    pass


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def _header(data: bytes, magic: bytes):
    if not data.startswith(magic):
        raise DecodeError(f"not a {magic.decode()} image (bad magic)")
    pos = len(magic)
    values = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DecodeError("truncated header")
        try:
            values.append(int(m.group(1)))
        except ValueError:
            raise DecodeError(f"malformed header field {m.group(1)!r}") from None
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise DecodeError("truncated header")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise DecodeError(f"invalid dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise DecodeError(f"invalid maxval {maxval}")
    return width, height, maxval, pos + 1


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary (P6) PPM into a float image scaled by maxval."""
    width, height, maxval, start = _header(data, b"P6")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    need = width * height * 3 * dtype.itemsize
    raster = data[start:start + need]
    if len(raster) < need:
        raise DecodeError(f"truncated raster: expected {need} bytes, got {len(raster)}")
    pixels = np.frombuffer(raster, dtype=dtype).reshape(height, width, 3)
    if pixels.max(initial=0) > maxval:
        raise DecodeError("sample exceeds maxval")
    return pixels.astype(np.float64) / maxval


def decode(data: bytes, fmt: str = "ppm") -> np.ndarray:
    fmt = fmt.lower().lstrip(".")
    if fmt in ("ppm", "p6"):
        return decode_ppm(data)
    raise DecodeError(f"unsupported image format {fmt!r}")


def _to_bytes(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def encode_ppm(img: np.ndarray) -> bytes:
    """Encode an (H, W, 3) float image as an 8-bit P6 PPM."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + _to_bytes(img).tobytes()


def encode_pgm(img: np.ndarray) -> bytes:
    """Encode an (H, W) float map as an 8-bit P5 PGM."""
    if img.ndim != 2:
        raise ValueError(f"expected (H, W) map, got {img.shape}")
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + _to_bytes(img).tobytes()


def _png_chunk(tag: bytes, body: bytes) -> bytes:
    return (struct.pack(">I", len(body)) + tag + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF))


def encode_png(img: np.ndarray) -> bytes:
    """Encode an (H, W) grey or (H, W, 3) colour float image as an 8-bit PNG."""
    if img.ndim == 2:
        colour = 0
    elif img.ndim == 3 and img.shape[2] == 3:
        colour = 2
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")
    h, w = img.shape[:2]
    rows = _to_bytes(img).reshape(h, -1)
    # filter type 0 (none) on every scanline
    raw = np.concatenate([np.zeros((h, 1), np.uint8), rows], axis=1).tobytes()
    header = struct.pack(">IIBBBBB", w, h, 8, colour, 0, 0, 0)
    return (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", header)
            + _png_chunk(b"IDAT", zlib.compress(raw, 9)) + _png_chunk(b"IEND", b""))


def read_image(path) -> np.ndarray:
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return decode(data, path.rsplit(".", 1)[-1] if "." in path else "ppm")
    except DecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from None


def write_ppm(path, img: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def crop_offsets(height: int, width: int) -> tuple[int, int, int]:
    """(y offset, x offset, side) of the centered square crop."""
    side = min(height, width)
    return (height - side) // 2, (width - side) // 2, side


def crop_square(img: np.ndarray) -> np.ndarray:
    """Centered square crop with side ``min(height, width)``."""
    y0, x0, side = crop_offsets(*img.shape[:2])
    return img[y0:y0 + side, x0:x0 + side]


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: output i samples input coordinate (i + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: np.ndarray, side: int = 224) -> np.ndarray:
    """Bilinear resize to ``side`` x ``side`` with half-pixel-centred sampling."""
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (side, side):
        return img.copy()
    y0, y1, wy = _axis_weights(h, side)
    x0, x1, wx = _axis_weights(w, side)
    extra = (None,) * (img.ndim - 2)
    wy = wy[(slice(None), None) + extra]
    wx = wx[(None, slice(None)) + extra]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def preprocess(img: np.ndarray, side: int = 224) -> np.ndarray:
    """Crop to the central square field and scale to model resolution."""
    return resize_bilinear(crop_square(img), side)
