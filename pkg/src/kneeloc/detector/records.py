"""Annotation/detection records and their JSON Lines representation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..imagio import BoxPx, read_image


@dataclass(frozen=True)
class Annotation:
    image_id: str
    left_box: BoxPx
    right_box: BoxPx

    def to_json(self) -> dict:
        return {"image": self.image_id, "left": list(self.left_box), "right": list(self.right_box)}

    @classmethod
    def from_json(cls, d: dict) -> Annotation:
        return cls(d["image"], BoxPx(*d["left"]), BoxPx(*d["right"]))


@dataclass(frozen=True)
class Detection:
    image_id: str
    left: tuple  # (BoxPx, score)
    right: tuple
    elapsed: float  # milliseconds

    def to_json(self) -> dict:
        return {"image": self.image_id,
                "left": list(self.left[0]), "right": list(self.right[0]),
                "left_score": self.left[1], "right_score": self.right[1],
                "ms": self.elapsed}

    @classmethod
    def from_json(cls, d: dict) -> Detection:
        return cls(d["image"], (BoxPx(*d["left"]), float(d.get("left_score", 0.0))),
                   (BoxPx(*d["right"]), float(d.get("right_score", 0.0))),
                   float(d.get("ms", 0.0)))


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rows


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")


def read_annotations(path) -> list[Annotation]:
    return [Annotation.from_json(d) for d in read_jsonl(path)]


def read_detections(path) -> list[Detection]:
    return [Detection.from_json(d) for d in read_jsonl(path)]


def resolve_image(images_dir, image_id: str) -> Path:
    p = Path(image_id)
    return p if p.is_absolute() else Path(images_dir) / p


def load_corpus(images_dir, annotations):
    """Pair annotations with decoded images; raises listing every missing image id."""
    missing = [a.image_id for a in annotations
               if not resolve_image(images_dir, a.image_id).is_file()]
    if missing:
        raise FileNotFoundError(f"annotations without matching image: {', '.join(missing)}")
    return [(read_image(resolve_image(images_dir, a.image_id)), a) for a in annotations]
