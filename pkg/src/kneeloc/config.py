"""Run configuration: every tunable of the pipeline in one JSON document."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .hog import HogConfig
from .proposer import ProposerConfig


@dataclass(frozen=True)
class SvmConfig:
    c_reg: float = 0.01
    tol: float = 1e-3
    max_epochs: int = 1000
    seed: int = 0
    loss: str = "hinge"

    def __post_init__(self):
        if self.c_reg <= 0 or self.tol <= 0 or self.max_epochs < 1:
            raise ValueError("c_reg and tol must be positive, max_epochs >= 1")
        if self.loss not in ("hinge", "squared_hinge"):
            raise ValueError(f"loss must be 'hinge' or 'squared_hinge', got {self.loss!r}")


@dataclass(frozen=True)
class TrainsetConfig:
    pos_iou: float = 0.8
    augment: bool = True

    def __post_init__(self):
        if not 0 < self.pos_iou <= 1:
            raise ValueError(f"pos_iou must be in (0, 1], got {self.pos_iou}")


@dataclass(frozen=True)
class RunConfig:
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    hog: HogConfig = field(default_factory=HogConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    trainset: TrainsetConfig = field(default_factory=TrainsetConfig)
    threads: int = 0

    def __post_init__(self):
        if self.threads < 0:
            raise ValueError(f"threads must be >= 0, got {self.threads}")

    def to_dict(self) -> dict:
        return {
            "proposer": self.proposer.to_dict(),
            "hog": self.hog.to_dict(),
            "svm": asdict(self.svm),
            "trainset": asdict(self.trainset),
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        unknown = set(d) - {"proposer", "hog", "svm", "trainset", "threads"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            proposer=ProposerConfig.from_dict(d.get("proposer", {})),
            hog=HogConfig.from_dict(d.get("hog", {})),
            svm=SvmConfig(**d.get("svm", {})),
            trainset=TrainsetConfig(**d.get("trainset", {})),
            threads=int(d.get("threads", 0)),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> RunConfig:
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())
