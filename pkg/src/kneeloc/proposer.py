"""Anatomy-driven joint proposals for a single-leg image.

Rows where the intensity profile of the central column band changes sharply
(patella rise, joint-gap drop) become candidate joint centres; each is paired
with a horizontal grid of displacements and a set of box scales.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .imagio import BoxPx, GrayImage

DEFAULT_SCALES = (3.0, 3.2, 3.4, 3.6, 3.8, 4.0, 5.0)


class DegenerateProfileError(ValueError):
    """The image is too short for the configured margin and smoothing window."""


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class ProposerConfig:
    alpha_frac: float = 0.1
    smooth_window: int = 11
    peak_stride: int = 10
    top_percent: float = 10.0
    x_step: int = 95
    x_range_frac: float = 0.25
    scales: tuple = DEFAULT_SCALES
    rank_by: str = "value"

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not 0 <= self.alpha_frac < 0.5:
            raise ValueError(f"alpha_frac must be in [0, 0.5), got {self.alpha_frac}")
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise ValueError(f"smooth_window must be odd and >= 1, got {self.smooth_window}")
        if self.peak_stride < 1:
            raise ValueError(f"peak_stride must be >= 1, got {self.peak_stride}")
        if not 0 < self.top_percent <= 100:
            raise ValueError(f"top_percent must be in (0, 100], got {self.top_percent}")
        if self.x_step < 1:
            raise ValueError(f"x_step must be >= 1, got {self.x_step}")
        if not 0 < self.x_range_frac <= 0.5:
            raise ValueError(f"x_range_frac must be in (0, 0.5], got {self.x_range_frac}")
        if not self.scales or any(s <= 1 for s in self.scales):
            raise ValueError(f"scales must be non-empty and all > 1, got {self.scales}")
        if self.rank_by not in ("value", "position"):
            raise ValueError(f"rank_by must be 'value' or 'position', got {self.rank_by!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ProposerConfig:
        return cls(**d)


@dataclass(frozen=True)
class Proposal:
    box: BoxPx
    center_x: int
    center_y: int
    side: int
    scale: float


def margin_px(height: int, alpha_frac: float) -> int:
    return round_half_up(alpha_frac * height)


def marginal_profile(img: GrayImage, alpha_frac: float, smooth_window: int = 1) -> np.ndarray:
    """Row sums over the central third of columns, skipping ``alpha`` rows at top and bottom."""
    arr = img.pixels
    h, c = arr.shape
    alpha = margin_px(h, alpha_frac)
    if h - 2 * alpha < smooth_window + 2:
        raise DegenerateProfileError(
            f"degenerate profile: height {h} with margin {alpha} leaves {h - 2 * alpha} rows, "
            f"need at least {smooth_window + 2}")
    band = arr[alpha:h - alpha, c // 3:(2 * c) // 3]
    return band.sum(axis=1, dtype=np.int64).astype(np.float64)


def peak_response(profile: Sequence[float], smooth_window: int) -> np.ndarray:
    """|boxcar-smoothed forward difference| of ``profile``, same length as the input.

    The difference past the last sample is taken as 0.
    """
    profile = np.asarray(profile, dtype=np.float64)
    if len(profile) < smooth_window + 2:
        raise DegenerateProfileError(
            f"profile of length {len(profile)} is shorter than smooth_window + 2")
    deriv = np.diff(profile, append=profile[-1])
    kernel = np.full(smooth_window, 1.0 / smooth_window)
    return np.abs(np.convolve(deriv, kernel, mode="same"))


def top_count(n: int, top_percent: float) -> int:
    return round_half_up(0.01 * top_percent * n)


def select_y_candidates(response: Sequence[float], top_percent: float, peak_stride: int,
                        alpha: int, rank_by: str = "value") -> list[int]:
    """Every ``peak_stride``-th index among the top ``top_percent`` % responses, shifted by ``alpha``.

    With ``rank_by="value"`` the pool is walked in descending response order
    (ties to the lower index) and the result keeps that order.  ``"position"``
    walks the same pool in ascending row order instead.
    """
    response = np.asarray(response, dtype=np.float64)
    if response.size == 0:
        raise ValueError("empty response")
    r = top_count(response.size, top_percent)
    if r == 0:
        return [int(np.argmax(response)) + alpha]
    ranked = np.argsort(-response, kind="stable")[:r]
    if rank_by == "position":
        ranked = np.sort(ranked)
    return [int(i) + alpha for i in ranked[::peak_stride]]


def x_grid(width: int, x_step: int, x_range_frac: float) -> list[int]:
    if width < 4:
        raise ValueError(f"leg width must be >= 4, got {width}")
    d = round_half_up(x_range_frac * width)
    center = width // 2
    return [min(max(center + j, 0), width - 1) for j in range(-d, d + 1, x_step)]


def estimate_scales(annotations, spread_steps: int = 1) -> list[float]:
    """Scale grid ``mean + m * std`` (sample std) of ``H / max(w, h)`` over annotations.

    ``annotations`` holds ``(BoxPx, image_height)`` pairs.
    """
    if len(annotations) < 2:
        raise ValueError("need at least two annotations to estimate scales")
    z = np.array([h / max(box.w, box.h) for box, h in annotations], dtype=np.float64)
    mean, std = float(z.mean()), float(z.std(ddof=1))
    if std == 0:
        return [mean]
    grid = [mean + m * std for m in range(-spread_steps, spread_steps + 1)]
    return [s for s in grid if s > 1]


def y_candidates(img: GrayImage, cfg: ProposerConfig) -> list[int]:
    profile = marginal_profile(img, cfg.alpha_frac, cfg.smooth_window)
    response = peak_response(profile, cfg.smooth_window)
    alpha = margin_px(img.height, cfg.alpha_frac)
    return select_y_candidates(response, cfg.top_percent, cfg.peak_stride, alpha, cfg.rank_by)


def proposal_grid(img: GrayImage, cfg: ProposerConfig) -> np.ndarray:
    """Proposals as an ``(N, 5)`` int array of ``x, y, side, center_x, center_y``.

    Same content and order as :func:`generate`, without the per-proposal objects.
    """
    ys = y_candidates(img, cfg)
    xs = x_grid(img.width, cfg.x_step, cfg.x_range_frac)
    sides = [round_half_up(img.height / z) for z in sorted(cfg.scales)]
    rows = [(cx - s // 2, cy - s // 2, s, cx, cy) for cy in ys for cx in xs for s in sides]
    return np.array(rows, dtype=np.int64).reshape(-1, 5)


def generate(img: GrayImage, cfg: ProposerConfig = ProposerConfig()) -> list[Proposal]:
    """Square proposals for every (y candidate, x offset, scale) triple.

    Ordered by y rank, then x ascending, then scale ascending.  Boxes may
    overhang the image border.
    """
    grid = proposal_grid(img, cfg)
    scales = sorted(cfg.scales)
    n_s = len(scales)
    return [Proposal(BoxPx(x, y, s, s), int(cx), int(cy), int(s), scales[i % n_s])
            for i, (x, y, s, cx, cy) in enumerate(grid.tolist())]


def predict_count(height: int, width: int, cfg: ProposerConfig = ProposerConfig()) -> int:
    """Number of proposals :func:`generate` yields for a ``width x height`` leg."""
    alpha = margin_px(height, cfg.alpha_frac)
    r = top_count(height - 2 * alpha, cfg.top_percent)
    n_y = max(1, -(-r // cfg.peak_stride))
    d = round_half_up(cfg.x_range_frac * width)
    n_x = (2 * d) // cfg.x_step + 1
    return len(cfg.scales) * n_y * n_x
