"""Localisation metrics: IoU, per-leg evaluation and the proposal recall sweep."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from ..imagio import BoxPx
from ..proposer import ProposerConfig, proposal_grid
from .pipeline import annotation_in_leg, split_legs

DEFAULT_THRESHOLDS = (0.5, 0.7, 0.8)
DEFAULT_P_LIST = (5, 25, 95, 250, 1000)


def iou(a: BoxPx, b: BoxPx) -> float:
    """Intersection over union (Jaccard index) of two boxes."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def iou_many(boxes: np.ndarray, ref: BoxPx) -> np.ndarray:
    """IoU of each ``(x, y, w, h)`` row of ``boxes`` against ``ref``."""
    boxes = np.asarray(boxes, dtype=np.int64).reshape(-1, 4)
    x, y, w, h = boxes.T
    iw = np.minimum(x + w, ref.x + ref.w) - np.maximum(x, ref.x)
    ih = np.minimum(y + h, ref.y + ref.h) - np.maximum(y, ref.y)
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    return inter / (w * h + ref.w * ref.h - inter)


@dataclass
class EvalReport:
    per_image_iou: list  # (image_id, side, iou)
    mean_iou: float
    recall_at: dict
    mean_ms: float


def recall_curve(ious, thresholds) -> dict:
    ious = np.asarray(ious, dtype=np.float64)
    return {float(t): float(np.mean(ious >= t)) if ious.size else 0.0 for t in thresholds}


def evaluate(detections, annotations, thresholds=DEFAULT_THRESHOLDS) -> EvalReport:
    """Score each leg of each detection against its annotation."""
    by_id = {a.image_id: a for a in annotations}
    unmatched = [d.image_id for d in detections if d.image_id not in by_id]
    if unmatched:
        raise KeyError(f"detections without annotation: {', '.join(unmatched)}")
    per = []
    for det in detections:
        ann = by_id[det.image_id]
        per.append((det.image_id, "left", iou(det.left[0], ann.left_box)))
        per.append((det.image_id, "right", iou(det.right[0], ann.right_box)))
    ious = [v for _, _, v in per]
    return EvalReport(
        per_image_iou=per,
        mean_iou=float(np.mean(ious)) if ious else 0.0,
        recall_at=recall_curve(ious, sorted(thresholds)),
        mean_ms=float(np.mean([d.elapsed for d in detections])) if detections else 0.0,
    )


def best_proposal_ious(corpus, pcfg: ProposerConfig) -> list[float]:
    """Best IoU over all proposals, per leg."""
    best = []
    for img, ann in corpus:
        for side, leg in zip(("left", "right"), split_legs(img)):
            grid = proposal_grid(leg, pcfg)
            boxes = np.column_stack([grid[:, 0], grid[:, 1], grid[:, 2], grid[:, 2]])
            target = annotation_in_leg(ann, side, img.width)
            best.append(float(iou_many(boxes, target).max()))
    return best


def proposal_recall_sweep(corpus, pcfg: ProposerConfig, p_values=DEFAULT_P_LIST,
                          thresholds=DEFAULT_THRESHOLDS) -> list[tuple]:
    """Rows ``(p, threshold, recall)`` of best-proposal recall for each x step ``p``."""
    corpus = list(corpus)
    rows = []
    for p in p_values:
        best = best_proposal_ious(corpus, replace(pcfg, x_step=int(p)))
        for t, r in recall_curve(best, thresholds).items():
            rows.append((int(p), t, r))
    return rows


def write_report_csv(path, report: EvalReport) -> None:
    n = len(report.per_image_iou)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["threshold", "recall", "mean_iou", "mean_ms", "n_legs"])
        for t, r in report.recall_at.items():
            out.writerow([t, r, report.mean_iou, report.mean_ms, n])


def write_per_leg_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["image", "side", "iou"])
        out.writerows(report.per_image_iou)


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["p", "threshold", "recall"])
        out.writerows(rows)
