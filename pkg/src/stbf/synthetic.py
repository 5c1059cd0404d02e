"""Synthetic multi-temporal scenes for desk-scale experiments.

Generates a class-blob scene shared by all dates, then applies per-date
radiometric perturbations: a global gamma shift (haze analog), a localized
additive bright patch (cloud analog) and per-class color drift (season
analog).  Samples are integer-valued digital numbers stored as floats;
ground-truth masks cover every pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import LabelMask, Raster, RasterStack

NOISE_KINDS = ("gamma", "cloud", "drift")

# Gamma exponents per date; date 0 stays clean, date 1 is strongly shifted.
_GAMMA_SCHEDULE = (1.0, 0.65, 1.15, 1.45, 0.85, 1.3)
_CLOUD_DATE = 1
_CLOUD_AMPLITUDE = 90.0
_TEXTURE_STD = 8.0
_DRIFT_STD = 12.0


@dataclass(frozen=True)
class SyntheticSpec:
    size: int = 128
    dates: int = 3
    classes: int = 4
    noise: tuple[str, ...] = ("gamma", "cloud")
    seed: int = 0
    bands: int = 3

    def __post_init__(self):
        if self.size < 32:
            raise ValidationError("size must be >= 32")
        if self.dates < 2:
            raise ValidationError("dates must be >= 2")
        if not 2 <= self.classes <= 6:
            raise ValidationError("classes must be in [2, 6]")
        if self.bands < 1:
            raise ValidationError("bands must be >= 1")
        bad = [k for k in self.noise if k not in NOISE_KINDS]
        if bad:
            raise ValidationError(f"unknown noise kinds {bad}; valid: {NOISE_KINDS}")
        object.__setattr__(self, "noise", tuple(self.noise))


def _smooth_field(size: int, rng: np.random.Generator) -> np.ndarray:
    """Random field box-blurred into organic-looking regions."""
    field = rng.normal(size=(size, size))
    radius = max(2, size // 16)
    kernel = np.ones(2 * radius + 1) / (2 * radius + 1)
    for _ in range(3):
        padded = np.pad(field, radius, mode="reflect")
        field = np.apply_along_axis(
            lambda r: np.convolve(r, kernel, mode="valid"), 1, padded
        )[radius:-radius, :]
        padded = np.pad(field, radius, mode="reflect")
        field = np.apply_along_axis(
            lambda r: np.convolve(r, kernel, mode="valid"), 0, padded
        )[:, radius:-radius]
    return field


def _class_colors(classes: int, bands: int) -> np.ndarray:
    """Deterministic per-class band vectors on an intensity ramp."""
    colors = np.empty((classes, bands))
    for c in range(classes):
        base = 45.0 + 160.0 * c / (classes - 1)
        for b in range(bands):
            colors[c, b] = base + 18.0 * math.cos(2.0 * math.pi * (b / bands + c / classes))
    return np.rint(colors)


def generate_synthetic_stack(spec: SyntheticSpec) -> tuple[RasterStack, list[LabelMask]]:
    """Build the stack and one ground-truth mask per date (same layout each date)."""
    size, t_count, k = spec.size, spec.dates, spec.classes
    scene_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    field = _smooth_field(size, scene_rng)
    edges = np.quantile(field, np.linspace(0, 1, k + 1)[1:-1])
    labels = np.searchsorted(edges, field) + 1  # 1..K, roughly equal areas
    colors = _class_colors(k, spec.bands)
    base = colors[labels - 1].transpose(2, 0, 1)  # (bands, H, W)
    texture = scene_rng.normal(0.0, _TEXTURE_STD, size=base.shape)
    base = np.clip(np.rint(base + texture), 1.0, 254.0)

    yy, xx = np.mgrid[0:size, 0:size]
    cloud_mask = (
        (xx - 0.3 * size) ** 2 + (yy - 0.35 * size) ** 2 < (0.18 * size) ** 2
    )

    rasters = []
    for d in range(t_count):
        img = base.copy()
        if "gamma" in spec.noise:
            g = _GAMMA_SCHEDULE[d % len(_GAMMA_SCHEDULE)]
            if g != 1.0:
                img = 255.0 * (img / 255.0) ** g
        if "cloud" in spec.noise and d == _CLOUD_DATE:
            img = img + _CLOUD_AMPLITUDE * cloud_mask[None, :, :]
        if "drift" in spec.noise and d > 0:
            drift_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2, d]))
            offsets = drift_rng.normal(0.0, _DRIFT_STD, size=(k, spec.bands))
            img = img + offsets[labels - 1].transpose(2, 0, 1)
            img = np.clip(img, 0.0, None)
        rasters.append(Raster(samples=img, date_tag=f"date{d:02d}"))
    stack = RasterStack(rasters=tuple(rasters))
    masks = [LabelMask(labels=labels.copy(), class_count=k) for _ in range(t_count)]
    return stack, masks
