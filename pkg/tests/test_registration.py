import math

import numpy as np
import pytest

from stbf.errors import ValidationError
from stbf.raster import Raster
from stbf.registration import (
    AffineTransform,
    estimate_affine_intensity,
    estimate_affine_points,
    identity_transform,
    invert_affine,
    warp,
)


def _box_blur(field, radius):
    k = 2 * radius + 1
    for axis in (0, 1):
        padded = np.pad(field, [(radius, radius) if a == axis else (0, 0) for a in (0, 1)],
                        mode="reflect")
        acc = np.zeros_like(field)
        for i in range(k):
            acc += padded[i : i + field.shape[0], :] if axis == 0 else padded[:, i : i + field.shape[1]]
        field = acc / k
    return field


def smooth_texture(rng, size, blur_radius=4, passes=3):
    """Textured random-smooth image in [0, 255]."""
    field = rng.normal(size=(size, size))
    for _ in range(passes):
        field = _box_blur(field, blur_radius)
    lo, hi = field.min(), field.max()
    return 255.0 * (field - lo) / (hi - lo)


def similarity_about_center(size, angle_deg, scale, tx, ty):
    """Affine (x, y) -> scale * R(angle) (x - c) + c + t as a 2x3 matrix."""
    c = (size - 1) / 2.0
    th = math.radians(angle_deg)
    a_mat = scale * np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    center = np.array([c, c])
    trans = center + np.array([tx, ty]) - a_mat @ center
    return AffineTransform(matrix=np.hstack([a_mat, trans[:, None]]))


def make_pair(rng, size, true_transform, pad=24):
    """Reference crop plus a target whose alignment transform is ``true_transform``.

    Cropping both images out of one larger scene keeps real content
    everywhere (no synthetic zero borders for the estimator to chew on).
    """
    base = smooth_texture(rng, size + 2 * pad)
    ref = base[pad : pad + size, pad : pad + size]
    inv = invert_affine(true_transform)
    # tgt(u) = base(T_true^-1(u) + pad), so tgt(T_true(x)) = base(x + pad) = ref(x).
    shift = np.hstack([inv.matrix[:, :2], (inv.matrix[:, 2] + pad)[:, None]])
    warped = warp(
        Raster(samples=base[None]), AffineTransform(matrix=shift)
    ).samples[0]
    tgt = warped[:size, :size]
    return Raster(samples=ref[None]), Raster(samples=tgt[None])


def corner_rmse(size, t_a, t_b):
    corners = np.array(
        [[0.0, 0.0], [size - 1.0, 0.0], [0.0, size - 1.0], [size - 1.0, size - 1.0]]
    )
    d = t_a.apply(corners) - t_b.apply(corners)
    return float(np.sqrt(np.mean(np.sum(d**2, axis=1))))


# --- estimate_affine_points ---

def test_points_identity():
    pairs = [((0.0, 0.0), (0.0, 0.0)), ((5.0, 1.0), (5.0, 1.0)), ((2.0, 7.0), (2.0, 7.0))]
    t = estimate_affine_points(pairs)
    assert np.allclose(t.matrix, [[1, 0, 0], [0, 1, 0]], atol=1e-12)


def test_points_pure_offset():
    pairs = [
        ((x, y), (x + 5.0, y - 2.0))
        for x, y in [(0.0, 0.0), (10.0, 3.0), (4.0, 8.0), (7.0, 1.0)]
    ]
    t = estimate_affine_points(pairs)
    assert np.allclose(t.matrix, [[1, 0, 5], [0, 1, -2]], atol=1e-9)


def test_points_collinear_degenerate():
    pairs = [((0.0, 0.0), (1.0, 1.0)), ((1.0, 1.0), (2.0, 2.0)), ((2.0, 2.0), (3.0, 3.0))]
    with pytest.raises(ValidationError, match="degenerate"):
        estimate_affine_points(pairs)


def test_points_too_few():
    with pytest.raises(ValidationError):
        estimate_affine_points([((0.0, 0.0), (0.0, 0.0)), ((1.0, 0.0), (1.0, 0.0))])


def test_points_exact_for_three_noncollinear(rng):
    true = AffineTransform(matrix=np.array([[1.1, -0.2, 3.0], [0.15, 0.9, -7.0]]))
    refs = [(0.0, 0.0), (9.0, 2.0), (3.0, 8.0)]
    pairs = [(r, tuple(true.apply(np.array([r]))[0])) for r in refs]
    t = estimate_affine_points(pairs)
    assert np.allclose(t.matrix, true.matrix, atol=1e-9)


def test_points_permutation_invariance(rng):
    refs = rng.uniform(0, 50, size=(8, 2))
    true = AffineTransform(matrix=np.array([[0.97, 0.05, 2.0], [-0.04, 1.02, -1.0]]))
    tgts = true.apply(refs) + rng.normal(0, 0.1, size=(8, 2))
    pairs = list(zip(map(tuple, refs), map(tuple, tgts)))
    t1 = estimate_affine_points(pairs)
    order = rng.permutation(8)
    t2 = estimate_affine_points([pairs[i] for i in order])
    assert np.allclose(t1.matrix, t2.matrix, atol=1e-9)


# --- warp ---

def test_warp_identity_bit_exact(rng):
    r = Raster(samples=rng.uniform(0, 255, size=(2, 6, 7)))
    out = warp(r, identity_transform())
    assert np.array_equal(out.samples, r.samples)


def test_warp_integer_translation():
    r = Raster(samples=np.array([[[10.0, 20.0, 30.0]]]))
    # Content moves one pixel right: output x samples source x - 1.
    t = AffineTransform(matrix=np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 0.0]]))
    out = warp(r, t)
    assert np.array_equal(out.samples, np.array([[[0.0, 10.0, 20.0]]]))


def test_warp_inverse_composition(rng):
    size = 64
    xs, ys = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float))
    img = 127.5 * (1.0 + np.sin(2 * np.pi * xs / 128) * np.sin(2 * np.pi * ys / 128))
    r = Raster(samples=img[None])
    t = similarity_about_center(size, angle_deg=0.3, scale=1.0, tx=0.6, ty=-0.8)
    roundtrip = warp(warp(r, t), invert_affine(t))
    interior = np.abs(roundtrip.samples[0, 2:-2, 2:-2] - img[2:-2, 2:-2])
    assert interior.max() <= 1e-3 * 255.0


def test_warp_linear_in_intensity(rng):
    a = rng.uniform(0, 100, size=(1, 8, 8))
    b = rng.uniform(0, 100, size=(1, 8, 8))
    t = similarity_about_center(8, angle_deg=5.0, scale=1.01, tx=0.4, ty=-0.3)
    lhs = warp(Raster(samples=2.5 * a + 0.5 * b), t).samples
    rhs = 2.5 * warp(Raster(samples=a), t).samples + 0.5 * warp(Raster(samples=b), t).samples
    assert np.abs(lhs - rhs).max() <= 1e-9


def test_transform_invariants():
    with pytest.raises(ValidationError, match="degenerate"):
        AffineTransform(matrix=np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    with pytest.raises(ValidationError):
        AffineTransform(matrix=np.array([[np.nan, 0, 0], [0, 1, 0]]))


def test_invert_affine_composes_to_identity():
    t = similarity_about_center(100, angle_deg=3.0, scale=1.05, tx=4.0, ty=-2.0)
    inv = invert_affine(t)
    pts = np.array([[0.0, 0.0], [50.0, 20.0], [99.0, 99.0]])
    assert np.allclose(inv.apply(t.apply(pts)), pts, atol=1e-9)


# --- estimate_affine_intensity ---

def test_intensity_identity(rng):
    img = smooth_texture(rng, 96)
    r = Raster(samples=img[None])
    t = estimate_affine_intensity(r, r, pyramid_levels=3)
    assert np.allclose(t.matrix, identity_transform().matrix, atol=1e-6)


def test_intensity_recovers_translation(rng):
    size = 128
    true = similarity_about_center(size, angle_deg=0.0, scale=1.0, tx=3.0, ty=-4.0)
    ref, tgt = make_pair(rng, size, true)
    est = estimate_affine_intensity(ref, tgt, pyramid_levels=3)
    # Translation of the recovered transform at the center equals (3, -4).
    center = np.array([[(size - 1) / 2.0, (size - 1) / 2.0]])
    got = est.apply(center)[0] - center[0]
    assert np.abs(got - [3.0, -4.0]).max() <= 0.1


def test_intensity_recovers_rotation(rng):
    size = 128
    true = similarity_about_center(size, angle_deg=2.0, scale=1.0, tx=0.0, ty=0.0)
    ref, tgt = make_pair(rng, size, true)
    est = estimate_affine_intensity(ref, tgt, pyramid_levels=3)
    angle = math.degrees(math.atan2(est.matrix[1, 0], est.matrix[0, 0]))
    assert abs(angle - 2.0) <= 0.05
    assert corner_rmse(size, est, true) <= 0.5


def test_intensity_dimension_mismatch(rng):
    a = Raster(samples=np.zeros((1, 8, 8)))
    b = Raster(samples=np.zeros((1, 9, 8)))
    with pytest.raises(ValidationError, match="mismatch"):
        estimate_affine_intensity(a, b)
