"""Spatiotemporal bilateral filter for co-registered raster stacks.

Every output pixel is a normalized weighted sum over a spatial window and
over all dates.  Three weights multiply:

* spatial: ``exp(-(dx^2 + dy^2) / (2 sigma_s^2))``, shared across bands,
* range (per band, within the contributing date k):
  ``exp(-(I_k(x, y) - I_k(m, n))^2 / (2 sigma_r^2))`` on raw sample units,
* temporal, shared across bands: ``exp(-d / (2 sigma_t^2))``, where d is the
  RMS band distance between dates p and k at the center pixel, measured on
  per-band stack-wide min-max normalized intensities.  Note the exponent is
  linear in d, not quadratic.

``sigma_t == 0`` restricts the sum to the date being filtered, which is the
conventional bilateral filter.  Window pixels outside the image are excluded
from both sums; the accumulation runs in double precision with a fixed loop
order, so results are bit-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import Raster, RasterStack


@dataclass(frozen=True)
class FilterParams:
    """Window side length plus the three bandwidths."""

    window: int = 5
    sigma_s: float = 7.0
    sigma_r: float = 50.0
    sigma_t: float = 0.2

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValidationError(f"window must be odd and >= 1, got {self.window}")
        if self.sigma_s <= 0 or self.sigma_r <= 0:
            raise ValidationError("sigma_s and sigma_r must be positive")
        if self.sigma_t < 0:
            raise ValidationError("sigma_t must be non-negative")


def spatial_weight(dx: int, dy: int, sigma_s: float) -> float:
    """Gaussian weight on the squared pixel distance from the window center."""
    return math.exp(-(dx * dx + dy * dy) / (2.0 * sigma_s * sigma_s))


def range_weight(neighbor_value: float, center_value: float, sigma_r: float) -> float:
    """Gaussian weight on the intensity difference, both values from the same date."""
    d = neighbor_value - center_value
    return math.exp(-(d * d) / (2.0 * sigma_r * sigma_r))


def temporal_distance(center_p: np.ndarray, center_k: np.ndarray) -> float:
    """RMS band distance between two dates at one pixel ([0,1]-normalized inputs)."""
    p = np.asarray(center_p, dtype=np.float64)
    k = np.asarray(center_k, dtype=np.float64)
    if p.shape != k.shape or p.ndim != 1 or p.size < 1:
        raise ValidationError(f"band-count mismatch: {p.shape} vs {k.shape}")
    return float(np.sqrt(np.mean((p - k) ** 2)))


def temporal_weight(d: float, sigma_t: float, is_self: bool) -> float:
    """Weight of date k's contribution; sigma_t == 0 keeps only the self date."""
    if sigma_t == 0.0:
        return 1.0 if is_self else 0.0
    return math.exp(-d / (2.0 * sigma_t * sigma_t))


def _normalized(imgs: np.ndarray) -> np.ndarray:
    """Per-band stack-wide min-max normalization to [0,1]; constant bands map to 0."""
    mins = imgs.min(axis=(0, 2, 3))
    maxs = imgs.max(axis=(0, 2, 3))
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    out = (imgs - mins[None, :, None, None]) / safe[None, :, None, None]
    out[:, span == 0, :, :] = 0.0
    return out


def filter_pixel(
    stack: RasterStack, p: int, m: int, n: int, params: FilterParams
) -> np.ndarray:
    """Filtered band vector for pixel (column m, row n) of date p.

    Reference per-pixel computation; ``filter_stack`` produces the same
    values over whole images.
    """
    t_count = len(stack)
    if not 0 <= p < t_count:
        raise ValidationError(f"image index {p} out of range for stack of {t_count}")
    if not (0 <= m < stack.width and 0 <= n < stack.height):
        raise ValidationError(f"pixel ({m}, {n}) outside {stack.width}x{stack.height}")
    imgs = np.stack([r.samples for r in stack.rasters])
    norm = _normalized(imgs)
    half = params.window // 2
    bands = stack.bands
    # Temporal weights depend only on the center pixel, not the window offset.
    wt = np.empty(t_count)
    for k in range(t_count):
        d = temporal_distance(norm[p, :, n, m], norm[k, :, n, m])
        wt[k] = temporal_weight(d, params.sigma_t, k == p)
    num = np.zeros(bands)
    den = np.zeros(bands)
    for dy in range(-half, half + 1):
        y = n + dy
        if not 0 <= y < stack.height:
            continue
        for dx in range(-half, half + 1):
            x = m + dx
            if not 0 <= x < stack.width:
                continue
            ws = spatial_weight(dx, dy, params.sigma_s)
            for k in range(t_count):
                if wt[k] == 0.0:
                    continue
                for b in range(bands):
                    wr = range_weight(imgs[k, b, y, x], imgs[k, b, n, m], params.sigma_r)
                    w = ws * wr * wt[k]
                    num[b] += w * imgs[k, b, y, x]
                    den[b] += w
    return num / den


def _window_sums(img: np.ndarray, params: FilterParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-band window sums of ws*wr*I and ws*wr for one date (truncated borders)."""
    bands, h, w = img.shape
    inv_2sr2 = 1.0 / (2.0 * params.sigma_r * params.sigma_r)
    inv_2ss2 = 1.0 / (2.0 * params.sigma_s * params.sigma_s)
    half = params.window // 2
    num = np.zeros((bands, h, w))
    den = np.zeros((bands, h, w))
    for dy in range(-half, half + 1):
        for dx in range(-half, half + 1):
            ws = math.exp(-(dx * dx + dy * dy) * inv_2ss2)
            # shifted[:, y, x] = img[:, y + dy, x + dx] where in bounds
            ys0, ys1 = max(0, dy), h + min(0, dy)
            xs0, xs1 = max(0, dx), w + min(0, dx)
            yd0, yd1 = max(0, -dy), h + min(0, -dy)
            xd0, xd1 = max(0, -dx), w + min(0, -dx)
            shifted = img[:, ys0:ys1, xs0:xs1]
            center = img[:, yd0:yd1, xd0:xd1]
            wr = np.exp(-((shifted - center) ** 2) * inv_2sr2)
            den[:, yd0:yd1, xd0:xd1] += ws * wr
            num[:, yd0:yd1, xd0:xd1] += ws * wr * shifted
    return num, den


def bilateral_filter(raster: Raster, params: FilterParams) -> Raster:
    """Conventional bilateral filter of a single raster (sigma_t is ignored)."""
    num, den = _window_sums(raster.samples, params)
    return Raster(samples=num / den, date_tag=raster.date_tag)


def filter_stack(stack: RasterStack, params: FilterParams) -> RasterStack:
    """Filter every date of the stack; all outputs derive from the original inputs."""
    t_count = len(stack)
    imgs = np.stack([r.samples for r in stack.rasters])
    sums = [_window_sums(imgs[k], params) for k in range(t_count)]
    out_rasters = []
    if params.sigma_t == 0.0:
        for p in range(t_count):
            num, den = sums[p]
            out_rasters.append(Raster(samples=num / den, date_tag=stack[p].date_tag))
        return RasterStack(rasters=tuple(out_rasters))
    norm = _normalized(imgs)
    inv_2st2 = 1.0 / (2.0 * params.sigma_t * params.sigma_t)
    for p in range(t_count):
        num = np.zeros_like(imgs[0])
        den = np.zeros_like(imgs[0])
        for k in range(t_count):
            # RMS band distance at the center pixel, image p vs image k.
            dist = np.sqrt(np.mean((norm[p] - norm[k]) ** 2, axis=0))
            wt = np.exp(-dist * inv_2st2)
            s_num, s_den = sums[k]
            num += wt[None, :, :] * s_num
            den += wt[None, :, :] * s_den
        out_rasters.append(Raster(samples=num / den, date_tag=stack[p].date_tag))
    return RasterStack(rasters=tuple(out_rasters))
