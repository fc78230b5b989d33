"""Training-set construction from annotated radiographs."""

from __future__ import annotations

import logging

import numpy as np

from ..hog import HogConfig, describe
from ..imagio import BoxPx, GrayImage, crop, resize_bilinear, rotate_about_center
from ..linsvm import TrainSet
from ..proposer import ProposerConfig, proposal_grid, round_half_up
from .evaluation import iou_many
from .pipeline import annotation_in_leg, grid_features, split_legs

log = logging.getLogger(__name__)

AUG_ANGLES = (-2.0, -1.2, -0.4, 0.4, 1.2)
CONTEXT = 0.1


def augmented_patches(leg: GrayImage, box: BoxPx, angles=AUG_ANGLES, patch: int = 64):
    """Rotated copies of the patch under ``box``.

    The box is widened by ~10% per side, resampled so that the original box
    maps onto exactly ``patch`` pixels, rotated, then cropped back to the
    central ``patch`` x ``patch`` square.
    """
    pad = round_half_up(CONTEXT * patch)
    big = patch + 2 * pad
    margin = round_half_up(box.w * pad / patch)
    ctx = BoxPx(box.x - margin, box.y - margin, box.w + 2 * margin, box.h + 2 * margin)
    wide = resize_bilinear(crop(leg, ctx), big, big)
    inner = BoxPx(pad, pad, patch, patch)
    return [crop(rotate_about_center(wide, a), inner) for a in angles]


def leg_samples(leg: GrayImage, target: BoxPx, pcfg: ProposerConfig, hcfg: HogConfig,
                pos_iou: float, angles):
    grid = proposal_grid(leg, pcfg)
    boxes = np.column_stack([grid[:, 0], grid[:, 1], grid[:, 2], grid[:, 2]])
    labels = np.where(iou_many(boxes, target) >= pos_iou, 1.0, -1.0)
    feats = grid_features(leg, grid, hcfg, dtype=np.float32)
    extra = []
    for i in np.flatnonzero(labels > 0):
        x, y, side = grid[i, :3]
        for p in augmented_patches(leg, BoxPx(x, y, side, side), angles, hcfg.patch):
            extra.append(describe(p, hcfg).astype(np.float32))
    return feats, labels, extra


def build_trainset(corpus, pcfg: ProposerConfig = ProposerConfig(), hcfg: HogConfig = HogConfig(),
                   pos_iou: float = 0.8, augment: bool = True, angles=AUG_ANGLES) -> TrainSet:
    """Label every proposal of every leg by IoU against its annotation and extract HoG.

    Positives gain one rotated copy per angle when ``augment`` is set.  Both legs
    go through :func:`split_legs`, so the set holds a single chirality.
    """
    if not 0 < pos_iou <= 1:
        raise ValueError(f"pos_iou must be in (0, 1], got {pos_iou}")
    angles = tuple(angles) if augment else ()
    feats, labels = [], []
    n_aug = 0
    for img, ann in corpus:
        for side, leg in zip(("left", "right"), split_legs(img)):
            target = annotation_in_leg(ann, side, img.width)
            f, y, extra = leg_samples(leg, target, pcfg, hcfg, pos_iou, angles)
            feats.append(f)
            labels.append(y)
            if extra:
                feats.append(np.stack(extra))
                labels.append(np.ones(len(extra)))
                n_aug += len(extra)
        log.debug("%s: %d samples so far", ann.image_id, sum(len(y) for y in labels))
    if not feats:
        raise ValueError("empty corpus")
    return TrainSet(np.concatenate(feats), np.concatenate(labels), n_aug)
