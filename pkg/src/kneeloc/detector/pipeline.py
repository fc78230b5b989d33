"""Leg splitting, proposal scoring and the batch detection driver."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from ..hog import HogConfig, describe_u8_into, vote_table
from ..imagio import (BoxPx, DecodeError, GrayImage, flip_horizontal, normalize_to_8bit,
                      read_image, sample_window)
from ..linsvm import SvmModel
from ..proposer import ProposerConfig, proposal_grid
from .records import Annotation, Detection

log = logging.getLogger(__name__)


def split_legs(img: GrayImage) -> tuple[GrayImage, GrayImage]:
    """Split at ``width // 2``; the right half is mirrored into left-leg orientation."""
    if img.width < 4:
        raise ValueError(f"bilateral image must be at least 4 px wide, got {img.width}")
    mid = img.width // 2
    left = GrayImage(np.ascontiguousarray(img.pixels[:, :mid]), img.depth)
    right = flip_horizontal(GrayImage(img.pixels[:, mid:], img.depth))
    return left, right


def leg_box_to_image(box: BoxPx, side: str, width: int) -> BoxPx:
    """Map a box from leg coordinates to full-image coordinates."""
    if side == "left":
        return box
    mid = width // 2
    return BoxPx(mid + (width - mid) - box.x2, box.y, box.w, box.h)


def annotation_in_leg(ann: Annotation, side: str, width: int) -> BoxPx:
    """The annotation for ``side`` in that leg's (canonical) coordinates."""
    if side == "left":
        return ann.left_box
    # the mapping is its own inverse
    return leg_box_to_image(ann.right_box, "right", width)


@njit(cache=True, nogil=True)
def _grid_features(src, grid, patch, cell, block, stride_cells, bins, hys, table, out):
    p = np.empty((patch, patch), np.uint8)
    feat = np.empty(out.shape[1])
    for n in range(grid.shape[0]):
        side = grid[n, 2]
        sample_window(src, grid[n, 1], grid[n, 0], side, side, p)
        describe_u8_into(p, cell, block, stride_cells, bins, hys, table[0], table[1], table[2],
                         feat)
        for k in range(feat.size):
            out[n, k] = feat[k]


@njit(cache=True, nogil=True)
def _grid_scores(src, grid, patch, cell, block, stride_cells, bins, hys, table, w, b, out):
    p = np.empty((patch, patch), np.uint8)
    feat = np.empty(w.size)
    for n in range(grid.shape[0]):
        side = grid[n, 2]
        sample_window(src, grid[n, 1], grid[n, 0], side, side, p)
        describe_u8_into(p, cell, block, stride_cells, bins, hys, table[0], table[1], table[2],
                         feat)
        s = b
        for k in range(feat.size):
            s += w[k] * feat[k]
        out[n] = s


def _hog_args(hcfg: HogConfig):
    return (hcfg.cell, hcfg.block, hcfg.block_stride // hcfg.cell, hcfg.bins,
            hcfg.norm == "L2-Hys", vote_table(hcfg.bins, hcfg.signed))


def grid_features(leg: GrayImage, grid: np.ndarray, hcfg: HogConfig = HogConfig(),
                  dtype=np.float64) -> np.ndarray:
    """HoG of every proposal in ``grid``: zero-padded crop, bilinear resize, describe."""
    out = np.empty((len(grid), hcfg.length), dtype=dtype)
    _grid_features(leg.pixels, np.ascontiguousarray(grid, dtype=np.int64), hcfg.patch,
                   *_hog_args(hcfg), out)
    return out


def grid_scores(leg: GrayImage, grid: np.ndarray, model: SvmModel,
                hcfg: HogConfig = HogConfig()) -> np.ndarray:
    if model.dim != hcfg.length:
        raise ValueError(f"model has {model.dim} weights, HoG config yields {hcfg.length}")
    out = np.empty(len(grid))
    _grid_scores(leg.pixels, np.ascontiguousarray(grid, dtype=np.int64), hcfg.patch,
                 *_hog_args(hcfg), model.weights, model.bias, out)
    return out


def detect_leg(leg: GrayImage, model: SvmModel, pcfg: ProposerConfig = ProposerConfig(),
               hcfg: HogConfig = HogConfig()) -> tuple[BoxPx, float]:
    """Highest-scoring proposal (first one on ties), clipped to the leg."""
    grid = proposal_grid(leg, pcfg)
    scores = grid_scores(leg, grid, model, hcfg)
    best = int(np.argmax(scores))
    x, y, side = grid[best, :3]
    return BoxPx(x, y, side, side).clip(leg.width, leg.height), float(scores[best])


def detect(img: GrayImage, model: SvmModel, pcfg: ProposerConfig = ProposerConfig(),
           hcfg: HogConfig = HogConfig(), image_id: str = "") -> Detection:
    t0 = time.perf_counter()
    if img.depth != 8:
        img = normalize_to_8bit(img)
    left_leg, right_leg = split_legs(img)
    lbox, lscore = detect_leg(left_leg, model, pcfg, hcfg)
    rbox, rscore = detect_leg(right_leg, model, pcfg, hcfg)
    rbox = leg_box_to_image(rbox, "right", img.width)
    elapsed = (time.perf_counter() - t0) * 1000.0
    return Detection(image_id, (lbox, lscore), (rbox, rscore), elapsed)


def detect_batch(items, model: SvmModel, pcfg: ProposerConfig = ProposerConfig(),
                 hcfg: HogConfig = HogConfig(), threads: int = 1) -> list:
    """Detect on ``(image_id, image)`` pairs, where ``image`` is a GrayImage or a path.

    Results keep input order whatever the thread count.  Paths are decoded in
    the worker; an entry that fails to decode comes back as ``None``.
    """
    items = list(items)

    def run(item):
        image_id, img = item
        if not isinstance(img, GrayImage):
            try:
                img = read_image(img)
            except (OSError, DecodeError) as exc:
                log.warning("skipping %s: %s", image_id, exc)
                return None
        return detect(img, model, pcfg, hcfg, image_id)

    if threads <= 1:
        return [run(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, items))


def resolve_threads(threads: int | None) -> int:
    """0 means one worker per CPU."""
    if not threads:
        return os.cpu_count() or 1
    return threads
