"""Histogram of Oriented Gradients for fixed-size square patches.

Defaults give 64x64 patches, 8x8-pixel cells, 2x2-cell blocks at an 8-pixel
stride and 9 unsigned orientation bins: 7 * 7 * 4 * 9 = 1764 values.
Each pixel votes its gradient magnitude into the two nearest orientation
bins (linear interpolation between bin centres, circular).  There is no
spatial interpolation and no Gaussian window.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .imagio import _as_array

EPS = 1e-6


@dataclass(frozen=True)
class HogConfig:
    patch: int = 64
    cell: int = 8
    block: int = 2
    block_stride: int = 8
    bins: int = 9
    signed: bool = False
    norm: str = "L2"

    def __post_init__(self):
        if self.patch % self.cell:
            raise ValueError(f"patch {self.patch} not divisible by cell {self.cell}")
        span = self.patch - self.block * self.cell
        if span < 0:
            raise ValueError("block larger than patch")
        if self.block_stride < 1 or self.block_stride % self.cell or span % self.block_stride:
            raise ValueError(
                f"block_stride {self.block_stride} must be a multiple of the cell size "
                f"and divide {span}")
        if self.bins < 2:
            raise ValueError("need at least 2 bins")
        if self.norm not in ("L2", "L2-Hys"):
            raise ValueError(f"norm must be 'L2' or 'L2-Hys', got {self.norm!r}")

    @property
    def blocks_per_side(self) -> int:
        return (self.patch - self.block * self.cell) // self.block_stride + 1

    @property
    def length(self) -> int:
        return self.blocks_per_side ** 2 * self.block ** 2 * self.bins

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> HogConfig:
        return cls(**d)


@njit(cache=True, nogil=True)
def _angle(gx, gy, span):
    a = math.degrees(math.atan2(gy, gx))
    if a < 0.0:
        a += span
    if a >= span:
        a -= span
    return a


@njit(cache=True, nogil=True)
def _bin_split(a, span, bins):
    pos = a / (span / bins) - 0.5
    lo = math.floor(pos)
    b0 = int(lo) % bins
    return b0, (b0 + 1) % bins, pos - lo


@njit(cache=True, nogil=True)
def _gradients(p, signed):
    h, w = p.shape
    mag = np.empty((h, w))
    ori = np.empty((h, w))
    span = 360.0 if signed else 180.0
    for y in range(h):
        ym, yp = max(y - 1, 0), min(y + 1, h - 1)
        for x in range(w):
            xm, xp = max(x - 1, 0), min(x + 1, w - 1)
            gx = float(p[y, xp]) - float(p[y, xm])
            gy = float(p[yp, x]) - float(p[ym, x])
            mag[y, x] = math.sqrt(gx * gx + gy * gy)
            ori[y, x] = _angle(gx, gy, span)
    return mag, ori


@njit(cache=True, nogil=True)
def _cell_hist(mag, ori, cell, bins, signed):
    h, w = mag.shape
    span = 360.0 if signed else 180.0
    hist = np.zeros((h // cell, w // cell, bins))
    for y in range(h):
        for x in range(w):
            b0, b1, frac = _bin_split(ori[y, x], span, bins)
            m = mag[y, x]
            hist[y // cell, x // cell, b0] += m * (1.0 - frac)
            hist[y // cell, x // cell, b1] += m * frac
    return hist


@njit(cache=True)
def _build_vote_table(bins, signed):
    span = 360.0 if signed else 180.0
    n = 2 * 255 + 1
    mag = np.empty(n * n)
    b0s = np.empty(n * n, np.int64)
    frac = np.empty(n * n)
    for i in range(n):
        for j in range(n):
            gx, gy = float(i - 255), float(j - 255)
            k = i * n + j
            mag[k] = math.sqrt(gx * gx + gy * gy)
            b0, _, f = _bin_split(_angle(gx, gy, span), span, bins)
            b0s[k] = b0
            frac[k] = f
    return mag, b0s, frac


_VOTE_TABLES = {}


def vote_table(bins: int, signed: bool):
    """Magnitude and bin split for every integer gradient pair in [-255, 255]^2."""
    key = (bins, bool(signed))
    if key not in _VOTE_TABLES:
        _VOTE_TABLES[key] = _build_vote_table(bins, bool(signed))
    return _VOTE_TABLES[key]


@njit(cache=True, nogil=True)
def _cell_hist_u8(p, cell, bins, tmag, tb0, tfrac):
    """Same histogram as ``_cell_hist(*_gradients(p))`` for 8-bit ``p``, via the vote table."""
    h, w = p.shape
    hist = np.zeros((h // cell, w // cell, bins))
    for y in range(h):
        ym, yp = max(y - 1, 0), min(y + 1, h - 1)
        for x in range(w):
            xm, xp = max(x - 1, 0), min(x + 1, w - 1)
            gx = int(p[y, xp]) - int(p[y, xm])
            gy = int(p[yp, x]) - int(p[ym, x])
            k = (gx + 255) * 511 + (gy + 255)
            m = tmag[k]
            b0 = tb0[k]
            f = tfrac[k]
            b1 = b0 + 1
            if b1 == bins:
                b1 = 0
            hist[y // cell, x // cell, b0] += m * (1.0 - f)
            hist[y // cell, x // cell, b1] += m * f
    return hist


@njit(cache=True, nogil=True)
def _blocks(hist, block, stride_cells, hys, out):
    n_cy, n_cx, bins = hist.shape
    nb_y = (n_cy - block) // stride_cells + 1
    nb_x = (n_cx - block) // stride_cells + 1
    blen = block * block * bins
    k = 0
    for by in range(nb_y):
        for bx in range(nb_x):
            start = k
            ss = 0.0
            for cy in range(block):
                for cx in range(block):
                    for b in range(bins):
                        v = hist[by * stride_cells + cy, bx * stride_cells + cx, b]
                        out[k] = v
                        ss += v * v
                        k += 1
            scale = 1.0 / math.sqrt(ss + EPS)
            for i in range(start, start + blen):
                out[i] *= scale
            if hys:
                ss = 0.0
                for i in range(start, start + blen):
                    if out[i] > 0.2:
                        out[i] = 0.2
                    ss += out[i] * out[i]
                scale = 1.0 / math.sqrt(ss + EPS)
                for i in range(start, start + blen):
                    out[i] *= scale


@njit(cache=True, nogil=True)
def describe_into(p, cell, block, stride_cells, bins, signed, hys, out):
    mag, ori = _gradients(p, signed)
    _blocks(_cell_hist(mag, ori, cell, bins, signed), block, stride_cells, hys, out)


@njit(cache=True, nogil=True)
def describe_u8_into(p, cell, block, stride_cells, bins, hys, tmag, tb0, tfrac, out):
    _blocks(_cell_hist_u8(p, cell, bins, tmag, tb0, tfrac), block, stride_cells, hys, out)


def _kernel_args(cfg: HogConfig):
    return (cfg.cell, cfg.block, cfg.block_stride // cfg.cell, cfg.bins, cfg.signed,
            cfg.norm == "L2-Hys")


def gradients(patch, signed: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Centred-difference gradient magnitude and orientation (degrees).

    Border pixels replicate their neighbour, so edge derivatives are one-sided.
    Orientation lies in [0, 180) unsigned or [0, 360) signed.
    """
    arr = _as_array(patch)
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise ValueError(f"patch must be at least 3x3, got {arr.shape}")
    return _gradients(np.ascontiguousarray(arr, dtype=np.float64), signed)


def cell_histograms(mag: np.ndarray, ori: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """``(cells_y, cells_x, bins)`` magnitude-weighted orientation histograms."""
    mag = np.ascontiguousarray(mag, dtype=np.float64)
    ori = np.ascontiguousarray(ori, dtype=np.float64)
    if mag.shape != ori.shape:
        raise ValueError("magnitude and orientation fields differ in shape")
    return _cell_hist(mag, ori, cfg.cell, cfg.bins, cfg.signed)


def describe(patch, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HoG descriptor of a ``cfg.patch``-square patch (GrayImage or 2-D array).

    Values are ordered block row, block column, cell row, cell column, bin.
    """
    arr = _as_array(patch)
    if arr.shape != (cfg.patch, cfg.patch):
        raise ValueError(f"patch must be {cfg.patch}x{cfg.patch}, got {arr.shape[1]}x{arr.shape[0]}")
    out = np.empty(cfg.length)
    if arr.dtype == np.uint8:
        cell, block, stride, bins, signed, hys = _kernel_args(cfg)
        describe_u8_into(np.ascontiguousarray(arr), cell, block, stride, bins, hys,
                         *vote_table(bins, signed), out)
    else:
        describe_into(np.ascontiguousarray(arr, dtype=np.float64), *_kernel_args(cfg), out)
    return out


def describe_many(patches: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    return np.stack([describe(p, cfg) for p in patches]) if len(patches) else np.empty((0, cfg.length))
