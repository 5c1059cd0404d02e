"""Coarse linear radiometric normalization against a reference date.

Per band, the target's mean/std are matched to the reference's:
``gain = sigma_ref / sigma_tgt`` and ``offset = mu_ref - gain * mu_tgt``.
Statistics run over all pixels; a near-constant target band degrades to a
pure mean shift (gain 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .raster import Raster

_STD_FLOOR = 1e-12


@dataclass(frozen=True)
class LinearGainOffset:
    """Per-band gain/offset pairs of the linear model."""

    gains: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.float64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if gains.ndim != 1 or gains.shape != offsets.shape:
            raise ValidationError("gains and offsets must be 1-D arrays of equal length")
        if not (np.isfinite(gains).all() and np.isfinite(offsets).all()):
            raise ValidationError("non-finite gain/offset")
        if (gains <= 0).any():
            raise ValidationError("gains must be strictly positive")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "offsets", offsets)

    @property
    def bands(self) -> int:
        return self.gains.shape[0]

    def to_json(self, path: str | Path) -> None:
        doc = {
            "bands": [
                {"gain": float(g), "offset": float(o)}
                for g, o in zip(self.gains, self.offsets)
            ]
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "LinearGainOffset":
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"cannot read normalization model {path}: {e}")
        try:
            gains = [b["gain"] for b in doc["bands"]]
            offsets = [b["offset"] for b in doc["bands"]]
        except (KeyError, TypeError):
            raise FormatError(f"malformed normalization model {path}")
        return cls(gains=np.array(gains), offsets=np.array(offsets))


def fit_linear_normalization(reference: Raster, target: Raster) -> LinearGainOffset:
    """Fit per-band gain/offset mapping the target's statistics onto the reference's."""
    if reference.samples.shape != target.samples.shape:
        raise ValidationError(
            f"dimension/band mismatch: {reference.samples.shape} vs {target.samples.shape}"
        )
    gains = np.empty(reference.bands)
    offsets = np.empty(reference.bands)
    for b in range(reference.bands):
        ref_band = reference.samples[b]
        tgt_band = target.samples[b]
        mu_ref, sd_ref = float(ref_band.mean()), float(ref_band.std())
        mu_tgt, sd_tgt = float(tgt_band.mean()), float(tgt_band.std())
        if sd_tgt < _STD_FLOOR:
            gains[b] = 1.0
            offsets[b] = mu_ref - mu_tgt
        else:
            gains[b] = sd_ref / sd_tgt
            offsets[b] = mu_ref - gains[b] * mu_tgt
    return LinearGainOffset(gains=gains, offsets=offsets)


def apply_linear_normalization(raster: Raster, model: LinearGainOffset) -> Raster:
    """Map each sample s in band b to gain_b * s + offset_b."""
    if raster.bands != model.bands:
        raise ValidationError(
            f"band-count mismatch: raster has {raster.bands}, model has {model.bands}"
        )
    out = raster.samples * model.gains[:, None, None] + model.offsets[:, None, None]
    return Raster(samples=out, date_tag=raster.date_tag)
