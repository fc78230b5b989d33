"""End-to-end knee joint localisation: scoring, training, evaluation, phantoms."""

from .evaluation import (DEFAULT_P_LIST, DEFAULT_THRESHOLDS, EvalReport, best_proposal_ious,
                         evaluate, iou, iou_many, proposal_recall_sweep)
from .phantom import phantom_corpus, synth_phantom
from .pipeline import (annotation_in_leg, detect, detect_batch, detect_leg, grid_features,
                       grid_scores, leg_box_to_image, split_legs)
from .records import Annotation, Detection
from .training import AUG_ANGLES, augmented_patches, build_trainset

__all__ = [
    "AUG_ANGLES", "Annotation", "DEFAULT_P_LIST", "DEFAULT_THRESHOLDS", "Detection",
    "EvalReport", "annotation_in_leg", "augmented_patches", "best_proposal_ious",
    "build_trainset", "detect", "detect_batch", "detect_leg", "evaluate", "grid_features",
    "grid_scores", "iou", "iou_many", "leg_box_to_image", "phantom_corpus",
    "proposal_recall_sweep", "split_legs", "synth_phantom",
]
