"""Intensity-based affine alignment of a target raster to a reference.

``estimate_affine_intensity`` minimizes the mean squared difference between
the reference and the warped target (band-averaged grayscale) with
Gauss-Newton iterations over a coarse-to-fine pyramid (2x downsampling with
5-tap binomial anti-alias blur).  The returned transform maps output pixel
coordinates (x, y) to source coordinates, so ``warp(target, t)`` aligns the
target onto the reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ValidationError
from .raster import Raster

_DET_MIN = 1e-6
_DET_MAX = 1e6
_COND_LIMIT = 1e12
_BORDER = 2  # pixels excluded from the residual around the image edge


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix [[a, b, tx], [c, d, ty]] mapping (x, y) to source coordinates."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValidationError(f"affine matrix must be 2x3, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValidationError("affine matrix contains non-finite entries")
        det = abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
        if not _DET_MIN <= det <= _DET_MAX:
            raise ValidationError(f"degenerate affine transform (|det| = {det:g})")
        object.__setattr__(self, "matrix", m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of (x, y) points to source coordinates."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]


def identity_transform() -> AffineTransform:
    return AffineTransform(matrix=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))


def invert_affine(t: AffineTransform) -> AffineTransform:
    a = t.matrix[:, :2]
    inv = np.linalg.inv(a)
    return AffineTransform(matrix=np.hstack([inv, (-inv @ t.matrix[:, 2])[:, None]]))


def estimate_affine_points(pairs) -> AffineTransform:
    """Least-squares affine from >= 3 (reference, target) point pairs.

    Minimizes sum ||T(ref_i) - tgt_i||^2; exact for 3 non-collinear points.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValidationError(f"need at least 3 point pairs, got {len(pairs)}")
    ref = np.array([p[0] for p in pairs], dtype=np.float64)
    tgt = np.array([p[1] for p in pairs], dtype=np.float64)
    design = np.hstack([ref, np.ones((len(pairs), 1))])
    normal = design.T @ design
    if np.linalg.cond(normal) > _COND_LIMIT:
        raise ValidationError("degenerate point set (collinear or coincident points)")
    coeffs, *_ = np.linalg.lstsq(design, tgt, rcond=None)
    return AffineTransform(matrix=coeffs.T)


def _bilinear(img: np.ndarray, sx: np.ndarray, sy: np.ndarray):
    """Sample ``img`` at float coordinates; returns (values, validity mask)."""
    h, w = img.shape
    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)
    x0 = np.clip(np.floor(sx).astype(np.intp), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.intp), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return (top * (1.0 - fy) + bot * fy) * valid, valid


def _source_coords(matrix: np.ndarray, w: int, h: int):
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx = matrix[0, 0] * xs + matrix[0, 1] * ys + matrix[0, 2]
    sy = matrix[1, 0] * xs + matrix[1, 1] * ys + matrix[1, 2]
    return sx, sy


def warp(raster: Raster, t: AffineTransform) -> Raster:
    """Bilinear warp onto the same grid; out-of-bounds samples are 0."""
    sx, sy = _source_coords(t.matrix, raster.width, raster.height)
    out = np.empty_like(raster.samples)
    for b in range(raster.bands):
        out[b], _ = _bilinear(raster.samples[b], sx, sy)
    return Raster(samples=out, date_tag=raster.date_tag)


def _binomial_downsample(img: np.ndarray) -> np.ndarray:
    """Separable [1,4,6,4,1]/16 blur followed by 2x decimation."""
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    padded = np.pad(img, 2, mode="reflect")
    tmp = sum(kernel[i] * padded[:, i : i + img.shape[1]] for i in range(5))
    blurred = sum(kernel[i] * tmp[i : i + img.shape[0], :] for i in range(5))
    return blurred[::2, ::2]


def _mean_residual(ref: np.ndarray, tgt: np.ndarray, matrix: np.ndarray):
    """Warped-target residual against the reference on the valid interior."""
    h, w = ref.shape
    sx, sy = _source_coords(matrix, w, h)
    warped, valid = _bilinear(tgt, sx, sy)
    mask = valid.copy()
    mask[:_BORDER, :] = False
    mask[-_BORDER:, :] = False
    mask[:, :_BORDER] = False
    mask[:, -_BORDER:] = False
    if mask.sum() < 32:
        raise DivergenceError("registration lost image overlap")
    resid = warped - ref
    mse = float(np.mean(resid[mask] ** 2))
    return resid, mask, sx, sy, mse


def _centered_to_absolute(a_mat: np.ndarray, t_vec: np.ndarray, cx: float, cy: float):
    c = np.array([cx, cy])
    trans = c + t_vec - a_mat @ c
    return np.hstack([a_mat, trans[:, None]])


def _gn_level(
    ref: np.ndarray,
    tgt: np.ndarray,
    matrix: np.ndarray,
    max_iters: int,
    tol: float,
    coarsest: bool,
) -> np.ndarray:
    h, w = ref.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    # Centered parameterization keeps the normal matrix well conditioned.
    a_mat = matrix[:, :2].copy()
    t_vec = matrix @ np.array([cx, cy, 1.0]) - np.array([cx, cy])
    gy_full, gx_full = np.gradient(tgt)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    xc = xs - cx
    yc = ys - cy
    cur = _centered_to_absolute(a_mat, t_vec, cx, cy)
    resid, mask, sx, sy, mse = _mean_residual(ref, tgt, cur)
    any_progress = False
    for _ in range(max_iters):
        gx, _ = _bilinear(gx_full, sx, sy)
        gy, _ = _bilinear(gy_full, sx, sy)
        gxm = gx[mask]
        gym = gy[mask]
        xcm = xc[mask]
        ycm = yc[mask]
        jac = np.stack(
            [gxm * xcm, gxm * ycm, gxm, gym * xcm, gym * ycm, gym], axis=1
        )
        rhs = -(jac.T @ resid[mask])
        hess = jac.T @ jac
        try:
            delta = np.linalg.solve(hess, rhs)
        except np.linalg.LinAlgError:
            delta, *_ = np.linalg.lstsq(hess, rhs, rcond=None)
        if np.linalg.norm(delta) < tol:
            break
        # Multiplicative damping: halve the step while the SSD increases.
        step = delta
        accepted = False
        for _halving in range(5):
            a_try = a_mat + np.array([[step[0], step[1]], [step[3], step[4]]])
            t_try = t_vec + np.array([step[2], step[5]])
            cand = _centered_to_absolute(a_try, t_try, cx, cy)
            resid_try, mask_try, sx_try, sy_try, mse_try = _mean_residual(ref, tgt, cand)
            if mse_try <= mse * (1.0 + 1e-12):
                a_mat, t_vec = a_try, t_try
                resid, mask, sx, sy, mse = resid_try, mask_try, sx_try, sy_try, mse_try
                accepted = True
                any_progress = True
                break
            step = step / 2.0
        if not accepted:
            # SSD increased for 5 consecutive damped steps.  After progress
            # this is the interpolation noise floor (a stall, not a failure);
            # from a cold start that never descended it is divergence.
            if coarsest and not any_progress:
                raise DivergenceError(
                    "registration diverged: SSD increased for 5 consecutive damped steps"
                )
            break
        if np.linalg.norm(step) < tol:
            break
    return _centered_to_absolute(a_mat, t_vec, cx, cy)


def estimate_affine_intensity(
    reference: Raster,
    target: Raster,
    pyramid_levels: int = 4,
    max_iters: int = 50,
    tol: float = 1e-6,
) -> AffineTransform:
    """Recover the affine transform aligning ``target`` onto ``reference``."""
    if reference.samples.shape != target.samples.shape:
        raise ValidationError(
            f"dimension mismatch: {reference.samples.shape} vs {target.samples.shape}"
        )
    if pyramid_levels < 1:
        raise ValidationError("pyramid_levels must be >= 1")
    ref_gray = reference.samples.mean(axis=0)
    tgt_gray = target.samples.mean(axis=0)
    pyramid = [(ref_gray, tgt_gray)]
    for _ in range(pyramid_levels - 1):
        prev_ref, prev_tgt = pyramid[-1]
        if min(prev_ref.shape) < 32:
            break
        pyramid.append((_binomial_downsample(prev_ref), _binomial_downsample(prev_tgt)))
    matrix = identity_transform().matrix
    coarsest_level = len(pyramid) - 1
    for level in range(coarsest_level, -1, -1):
        ref_l, tgt_l = pyramid[level]
        matrix = _gn_level(ref_l, tgt_l, matrix, max_iters, tol, level == coarsest_level)
        if level > 0:
            # Moving one level finer doubles the translation only.
            matrix = np.hstack([matrix[:, :2], matrix[:, 2:] * 2.0])
    return AffineTransform(matrix=matrix)
