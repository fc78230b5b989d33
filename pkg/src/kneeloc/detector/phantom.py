"""Synthetic bilateral knee phantoms with analytically known joint boxes."""

from __future__ import annotations

import numpy as np

from ..imagio import BoxPx, GrayImage
from ..proposer import round_half_up
from .records import Annotation

BACKGROUND = 15.0
ANNOTATION_SCALE = 3.5


def _sig(t, soft):
    # linear soft edge, 2*soft pixels wide
    return np.clip(0.5 + t / (2.0 * soft), 0.0, 1.0)


def _leg_layer(leg_w: int, height: int, jx: float, jy: float, gap: float) -> np.ndarray:
    """Noise-free intensities of one (image-left) leg, background excluded."""
    soft = max(1.0, height / 1000.0)
    x = np.arange(leg_w, dtype=np.float32)[None, :]
    y = np.arange(height, dtype=np.float32)[:, None]
    dx = np.abs(x - jx)
    g2 = gap / 2.0

    tissue = _sig(0.36 * leg_w - dx, soft)

    # femoral shaft widens into the condyles over the last 12% of H above the joint
    ramp_f = np.clip((y - (jy - 0.12 * height)) / (0.12 * height), 0.0, 1.0)
    femur_hw = leg_w * (0.13 + 0.08 * ramp_f)
    femur = _sig(femur_hw - dx, soft) * _sig((jy - g2) - y, soft)

    ramp_t = np.clip(((jy + 0.12 * height) - y) / (0.12 * height), 0.0, 1.0)
    tibia_hw = leg_w * (0.13 + 0.07 * ramp_t)
    tibia = _sig(tibia_hw - dx, soft) * _sig(y - (jy + g2), soft)

    fib_x = jx + 0.24 * leg_w
    fibula = _sig(0.035 * leg_w - np.abs(x - fib_x), soft) * _sig(y - (jy + 0.05 * height), soft)

    rx, ry = 0.11 * leg_w, 0.03 * height
    r = np.sqrt(((x - jx) / rx) ** 2 + ((y - (jy - 0.05 * height)) / ry) ** 2)
    patella = _sig((1.0 - r) * min(rx, ry), soft)

    return 35.0 * tissue + 100.0 * femur + 95.0 * tibia + 55.0 * fibula + 45.0 * patella


def synth_phantom(seed: int, width: int = 2400, height: int = 2000, joint_y_frac: float = 0.5,
                  joint_x_frac: float = 0.5, gap_px: float = 16, noise_sd: float = 8.0,
                  image_id: str = "phantom"):
    """Render a bilateral phantom and its joint annotation.

    ``joint_x_frac`` is measured across the image-left half; the right leg is
    its mirror image.  Each annotation is a square of side ``height / 3.5``
    centred on the joint and clipped to its half.
    """
    if not 0.2 <= joint_y_frac <= 0.8:
        raise ValueError(f"joint_y_frac must be in [0.2, 0.8], got {joint_y_frac}")
    half = width // 2
    jx, jy = joint_x_frac * half, joint_y_frac * height
    layer = _leg_layer(half, height, jx, jy, gap_px)
    img = np.full((height, width), BACKGROUND, dtype=np.float32)
    img[:, :half] += layer
    img[:, width - half:] += layer[:, ::-1]
    if noise_sd > 0:
        noise = np.random.default_rng(seed).standard_normal(img.shape, dtype=np.float32)
        img += np.float32(noise_sd) * noise
    pixels = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)

    side = round_half_up(height / ANNOTATION_SCALE)
    cx, cy = round_half_up(jx), round_half_up(jy)
    left = BoxPx(cx - side // 2, cy - side // 2, side, side).clip(half, height)
    right = BoxPx(width - left.x2, left.y, left.w, left.h)
    return GrayImage(pixels, 8), Annotation(image_id, left, right)


def phantom_corpus(seed: int, count: int, width: int = 2400, height: int = 2000,
                   noise_sd: float = 8.0):
    """Yield ``count`` phantoms with seeded, mildly varied anatomy."""
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(count)):
        rng = np.random.default_rng(ss)
        jy = rng.uniform(0.42, 0.58)
        jx = rng.uniform(0.46, 0.54)
        gap = height * rng.uniform(0.006, 0.010)
        noise_seed = int(rng.integers(2 ** 32))
        yield synth_phantom(noise_seed, width, height, jy, jx, gap, noise_sd,
                            image_id=f"phantom_{i:04d}.png")
