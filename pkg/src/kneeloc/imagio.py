"""Grayscale raster I/O and the handful of geometric transforms the pipeline uses.

Images are carried as :class:`GrayImage`, a thin immutable wrapper over a
``(height, width)`` numpy array of ``uint8`` or ``uint16``.  Boxes are
:class:`BoxPx` tuples ``(x, y, w, h)`` in pixel units.
"""

from __future__ import annotations

import io
import math
import re
import struct
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit
from PIL import Image


class DecodeError(ValueError):
    """Raised when image bytes cannot be decoded."""


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray
    depth: int = 8

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D raster, got shape {arr.shape}")
        if arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ValueError(f"image must be at least 2x2, got {arr.shape[1]}x{arr.shape[0]}")
        if self.depth == 8:
            if arr.dtype != np.uint8:
                if arr.size and (arr.min() < 0 or arr.max() > 255):
                    raise ValueError("8-bit image has intensities outside [0, 255]")
                arr = arr.astype(np.uint8)
        elif self.depth == 16:
            if arr.dtype != np.uint16:
                if arr.size and (arr.min() < 0 or arr.max() > 65535):
                    raise ValueError("16-bit image has intensities outside [0, 65535]")
                arr = arr.astype(np.uint16)
        else:
            raise ValueError(f"depth must be 8 or 16, got {self.depth}")
        view = arr.view()
        view.flags.writeable = False
        object.__setattr__(self, "pixels", view)

    @classmethod
    def from_array(cls, arr) -> GrayImage:
        arr = np.asarray(arr)
        return cls(arr, 16 if arr.dtype == np.uint16 else 8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.depth == other.depth and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


class _Box(NamedTuple):
    x: int
    y: int
    w: int
    h: int


class BoxPx(_Box):
    """Axis-aligned pixel rectangle; ``(x, y)`` is the top-left corner."""

    __slots__ = ()

    def __new__(cls, x, y, w, h):
        x, y, w, h = int(x), int(y), int(w), int(h)
        if w <= 0 or h <= 0:
            raise ValueError(f"box must have positive size, got w={w} h={h}")
        return super().__new__(cls, x, y, w, h)

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def clip(self, width: int, height: int) -> BoxPx:
        """Intersect with ``[0, width) x [0, height)``."""
        x1, y1 = max(self.x, 0), max(self.y, 0)
        x2, y2 = min(self.x2, width), min(self.y2, height)
        if x2 <= x1 or y2 <= y1:
            raise ValueError(f"{self} lies outside a {width}x{height} image")
        return BoxPx(x1, y1, x2 - x1, y2 - y1)


def _as_array(img) -> np.ndarray:
    return img.pixels if isinstance(img, GrayImage) else np.asarray(img)


# ---------------------------------------------------------------------------
# codecs

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(data: bytes):
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise DecodeError(f"offset 0: bad PGM magic {magic!r}")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise DecodeError(f"offset {pos}: truncated PGM header, missing {name}")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise DecodeError(f"offset {m.start(1)}: PGM {name} is not an integer") from None
        pos = m.end()
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"PGM has non-positive size {width}x{height}")
    if not 0 < maxval <= 65535:
        raise DecodeError(f"PGM maxval {maxval} outside 1..65535")
    return magic, width, height, maxval, pos


def _decode_pgm(data: bytes) -> GrayImage:
    magic, width, height, maxval, pos = _pgm_header(data)
    n = width * height
    dtype = np.uint8 if maxval < 256 else np.uint16
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        itemsize = 1 if maxval < 256 else 2
        need = n * itemsize
        if len(data) - pos < need:
            raise DecodeError(f"offset {pos}: truncated raster, need {need} bytes, have {len(data) - pos}")
        raw = np.frombuffer(data, dtype=">u2" if itemsize == 2 else np.uint8, count=n, offset=pos)
        arr = raw.astype(dtype)
    else:
        values = data[pos:].split()
        if len(values) < n:
            raise DecodeError(f"offset {pos}: truncated raster, need {n} samples, have {len(values)}")
        try:
            arr = np.array([int(v) for v in values[:n]], dtype=np.int64)
        except ValueError:
            raise DecodeError(f"offset {pos}: non-numeric sample in P2 raster") from None
        arr = arr.astype(dtype)
    if arr.size and int(arr.max()) > maxval:
        raise DecodeError(f"sample value exceeds declared maxval {maxval}")
    return GrayImage(arr.reshape(height, width), 8 if maxval < 256 else 16)


def _decode_png(data: bytes) -> GrayImage:
    if len(data) < 33:
        raise DecodeError(f"offset {len(data)}: truncated PNG header")
    length, ctype = struct.unpack(">I4s", data[8:16])
    if ctype != b"IHDR" or length != 13:
        raise DecodeError("offset 8: first PNG chunk is not IHDR")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", data[16:26])
    if color_type != 0:
        raise DecodeError(f"offset 25: non-grayscale PNG (color type {color_type})")
    if bit_depth not in (8, 16):
        raise DecodeError(f"offset 24: unsupported grayscale bit depth {bit_depth}")
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.array(im)
    except (OSError, ValueError, zlib.error) as exc:
        raise DecodeError(f"corrupt PNG data: {exc}") from None
    if arr.shape != (height, width):
        raise DecodeError(f"decoded raster {arr.shape} disagrees with IHDR {height}x{width}")
    if bit_depth == 16:
        return GrayImage(arr.astype(np.uint16), 16)
    return GrayImage(arr.astype(np.uint8), 8)


def decode(data: bytes, format: str | None = None) -> GrayImage:
    """Decode PGM (P2/P5) or grayscale PNG bytes; ``format`` is sniffed when omitted."""
    if format is None:
        format = "PNG" if data.startswith(_PNG_SIGNATURE) else "PGM"
    format = format.upper()
    if format == "PNG":
        if not data.startswith(_PNG_SIGNATURE):
            raise DecodeError("offset 0: bad PNG signature")
        return _decode_png(data)
    if format == "PGM":
        return _decode_pgm(data)
    raise ValueError(f"unknown format {format!r}")


def encode(img: GrayImage, format: str = "PNG") -> bytes:
    format = format.upper()
    arr = img.pixels
    if format == "PGM":
        maxval = 255 if img.depth == 8 else 65535
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
        body = arr.astype(">u2").tobytes() if img.depth == 16 else arr.tobytes()
        return header + body
    if format == "PNG":
        buf = io.BytesIO()
        Image.fromarray(np.ascontiguousarray(arr)).save(buf, format="PNG")
        return buf.getvalue()
    raise ValueError(f"unknown format {format!r}")


def read_image(path) -> GrayImage:
    with open(path, "rb") as fh:
        return decode(fh.read())


def write_image(path, img: GrayImage) -> None:
    fmt = "PGM" if str(path).lower().endswith(".pgm") else "PNG"
    with open(path, "wb") as fh:
        fh.write(encode(img, fmt))


# ---------------------------------------------------------------------------
# intensity


def _nearest_rank(hist: np.ndarray, n: int, pct: float) -> int:
    rank = max(1, math.ceil(pct * n))
    return int(np.searchsorted(np.cumsum(hist), rank))


def normalize_to_8bit(img: GrayImage, lo_pct: float = 0.05, hi_pct: float = 0.99) -> GrayImage:
    """Clamp to the [lo_pct, hi_pct] percentile window and stretch it to 0..255.

    Percentiles use the nearest-rank rule on the full 65536-bin histogram.
    A window of zero width maps every pixel to 0.  8-bit input is returned as is.
    """
    if img.depth == 8:
        return img
    if not 0 <= lo_pct < hi_pct <= 1:
        raise ValueError(f"need 0 <= lo_pct < hi_pct <= 1, got {lo_pct}, {hi_pct}")
    arr = img.pixels
    hist = np.bincount(arr.ravel(), minlength=65536)
    lo = _nearest_rank(hist, arr.size, lo_pct)
    hi = _nearest_rank(hist, arr.size, hi_pct)
    if hi <= lo:
        return GrayImage(np.zeros(arr.shape, np.uint8), 8)
    # lookup table keeps this O(N) and exactly monotone
    levels = np.clip(np.arange(65536, dtype=np.float64), lo, hi)
    lut = np.floor((levels - lo) * (255.0 / (hi - lo)) + 0.5).astype(np.uint8)
    return GrayImage(lut[arr], 8)


# ---------------------------------------------------------------------------
# geometry


def flip_horizontal(img: GrayImage) -> GrayImage:
    return GrayImage(np.ascontiguousarray(img.pixels[:, ::-1]), img.depth)


def crop(img: GrayImage, box: BoxPx) -> GrayImage:
    """Copy ``box`` out of ``img``; any part of the box outside the image reads 0."""
    arr = img.pixels
    out = np.zeros((box.h, box.w), dtype=arr.dtype)
    x1, y1 = max(box.x, 0), max(box.y, 0)
    x2, y2 = min(box.x2, img.width), min(box.y2, img.height)
    if x2 > x1 and y2 > y1:
        out[y1 - box.y:y2 - box.y, x1 - box.x:x2 - box.x] = arr[y1:y2, x1:x2]
    return GrayImage(out, img.depth)


@njit(cache=True, nogil=True)
def sample_window(src, top, left, in_h, in_w, out, hi=255.0):
    """Bilinear resize of the ``in_h x in_w`` window at ``(top, left)`` of ``src``
    into ``out``, with half-pixel-centre alignment.

    Window pixels outside ``src`` read as 0, so this is ``crop`` followed by
    ``resize_bilinear`` without materialising the crop.  Results are rounded
    half-up and saturated to ``[0, hi]``.
    """
    out_h, out_w = out.shape
    src_h, src_w = src.shape
    sy_scale = in_h / out_h
    sx_scale = in_w / out_w
    cols = np.empty((2, out_w), np.int64)
    ok = np.empty((2, out_w), np.bool_)
    wxs = np.empty(out_w, np.float64)
    for j in range(out_w):
        sx = (j + 0.5) * sx_scale - 0.5
        sx = min(max(sx, 0.0), in_w - 1.0)
        x0 = int(math.floor(sx))
        x1 = min(x0 + 1, in_w - 1)
        wxs[j] = sx - x0
        for t, xx in ((0, left + x0), (1, left + x1)):
            ok[t, j] = 0 <= xx < src_w
            cols[t, j] = xx if ok[t, j] else 0
    for i in range(out_h):
        sy = (i + 0.5) * sy_scale - 0.5
        sy = min(max(sy, 0.0), in_h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, in_h - 1)
        wy = sy - y0
        r0, r1 = top + y0, top + y1
        ok0 = 0 <= r0 < src_h
        ok1 = 0 <= r1 < src_h
        for j in range(out_w):
            wx = wxs[j]
            c0, c1 = cols[0, j], cols[1, j]
            a = float(src[r0, c0]) if ok0 and ok[0, j] else 0.0
            b = float(src[r0, c1]) if ok0 and ok[1, j] else 0.0
            c = float(src[r1, c0]) if ok1 and ok[0, j] else 0.0
            d = float(src[r1, c1]) if ok1 and ok[1, j] else 0.0
            v = (a * (1.0 - wx) + b * wx) * (1.0 - wy) + (c * (1.0 - wx) + d * wx) * wy
            v = math.floor(v + 0.5)
            out[i, j] = min(max(v, 0.0), hi)


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    out = np.empty((out_h, out_w), dtype=img.pixels.dtype)
    sample_window(img.pixels, 0, 0, img.height, img.width, out,
                  255.0 if img.depth == 8 else 65535.0)
    return GrayImage(out, img.depth)


def rotate_about_center(img: GrayImage, angle: float) -> GrayImage:
    """Rotate counter-clockwise (as displayed) by ``angle`` degrees, keeping the size.

    Each output pixel samples the input bilinearly at the inverse-rotated
    location; neighbours outside the image contribute 0.
    """
    if abs(angle) > 45:
        raise ValueError(f"rotation limited to |angle| <= 45, got {angle}")
    arr = img.pixels
    if angle == 0:
        return GrayImage(arr.copy(), img.depth)
    h, w = arr.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = math.radians(angle)
    cos_t, sin_t = math.cos(t), math.sin(t)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    # rows grow downwards, so a displayed CCW turn is clockwise in (x, y)
    sx = cos_t * dx - sin_t * dy + cx
    sy = sin_t * dx + cos_t * dy + cy
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    wx, wy = sx - x0, sy - y0
    src = arr.astype(np.float64)

    def tap(yi, xi):
        ok = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        return np.where(ok, src[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0.0)

    v = ((tap(y0, x0) * (1 - wx) + tap(y0, x0 + 1) * wx) * (1 - wy)
         + (tap(y0 + 1, x0) * (1 - wx) + tap(y0 + 1, x0 + 1) * wx) * wy)
    hi = 255 if img.depth == 8 else 65535
    return GrayImage(np.clip(np.floor(v + 0.5), 0, hi).astype(arr.dtype), img.depth)
