"""Soft-margin RBF-SVM trained from scratch with SMO, one-against-all multiclass.

Each binary problem maximizes the dual
``L = sum(alpha) - 1/2 sum_ij y_i y_j alpha_i alpha_j K(x_i, x_j)`` subject to
``0 <= alpha_i <= C`` and ``sum(alpha_i y_i) = 0`` via pairwise alpha updates
with analytic clipping.  Features are min-max scaled to [0,1] per band before
training; the scaling is stored in the model and reused at prediction time.
Prediction is the argmax of the K decision values, ties broken by the
smallest class ID.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .raster import LabelMask, Raster

_SV_FLOOR = 1e-8
_PREDICT_CHUNK = 8192


@dataclass(frozen=True)
class SvmParams:
    C: float = 10.0
    gamma: float | None = None  # None: 1 / band count on [0,1]-scaled features
    tol: float = 1e-3
    max_passes: int = 200
    sample_per_class: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0 or self.tol <= 0:
            raise ValidationError("C and tol must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if self.max_passes < 1 or self.sample_per_class < 1:
            raise ValidationError("max_passes and sample_per_class must be >= 1")


@dataclass(frozen=True)
class TrainingSet:
    """Sampled feature vectors with class labels 1..K; every class present."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if feats.ndim != 2 or labels.ndim != 1 or feats.shape[0] != labels.shape[0]:
            raise ValidationError("features must be (N, D) with one label per row")
        k = int(labels.max()) if labels.size else 0
        present = set(np.unique(labels).tolist())
        missing = [c for c in range(1, k + 1) if c not in present]
        if k < 1 or missing:
            raise ValidationError(f"training set missing classes {missing or [1]}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels.astype(np.int32))

    @property
    def class_count(self) -> int:
        return int(self.labels.max())


@dataclass(frozen=True)
class BinaryModel:
    support_vectors: np.ndarray  # (S, D)
    dual_coeffs: np.ndarray  # (S,) alpha_i * y_i
    bias: float
    gamma: float
    converged: bool = True


@dataclass(frozen=True)
class SvmModel:
    binaries: tuple[BinaryModel, ...]  # index c-1 is class c vs rest
    scale_min: np.ndarray
    scale_max: np.ndarray
    C: float
    gamma: float

    @property
    def class_count(self) -> int:
        return len(self.binaries)

    @property
    def n_features(self) -> int:
        return self.scale_min.shape[0]


def rbf_kernel(x: np.ndarray, z: np.ndarray, gamma: float) -> float:
    """exp(-gamma * ||x - z||^2); gamma = 1 / (2 sigma^2)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValidationError(f"dimension mismatch: {x.shape} vs {z.shape}")
    d = x - z
    return float(np.exp(-gamma * np.dot(d, d)))


def _rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel between rows of a (n, D) and b (m, D)."""
    sq = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * sq)


def sample_training(image: Raster, mask: LabelMask, params: SvmParams) -> TrainingSet:
    """Draw up to sample_per_class pixels per class, uniformly without replacement."""
    if (mask.height, mask.width) != (image.height, image.width):
        raise ValidationError(
            f"mask {mask.height}x{mask.width} does not match image "
            f"{image.height}x{image.width}"
        )
    rng = np.random.default_rng(params.seed)
    flat_labels = mask.labels.ravel()
    pixels = image.samples.reshape(image.bands, -1)
    k = mask.class_count
    feats = []
    labs = []
    for c in range(1, k + 1):
        idx = np.flatnonzero(flat_labels == c)
        if idx.size == 0:
            raise ValidationError(f"class {c} has no labeled pixels")
        take = min(params.sample_per_class, idx.size)
        chosen = rng.choice(idx, size=take, replace=False)
        chosen.sort()
        feats.append(pixels[:, chosen].T)
        labs.append(np.full(take, c, dtype=np.int32))
    return TrainingSet(features=np.vstack(feats), labels=np.concatenate(labs))


def train_binary(features: np.ndarray, signs: np.ndarray, params: SvmParams) -> BinaryModel:
    """Solve the binary dual by SMO; ``signs`` holds +-1 labels."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(signs, dtype=np.float64)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValidationError("binary labels must be +-1")
    if (y > 0).sum() == 0 or (y < 0).sum() == 0:
        raise ValidationError("both label signs must be present")
    n = x.shape[0]
    gamma = params.gamma if params.gamma is not None else 1.0 / x.shape[1]
    c_box = params.C
    # Work at half the tolerance internally so the KKT residual stays within
    # params.tol after the bias is recomputed from the final alphas.
    tol = 0.5 * params.tol
    kmat = _rbf_matrix(x, x, gamma)
    alpha = np.zeros(n)
    bias = 0.0
    errors = -y.copy()  # E_i = f(x_i) - y_i with f = 0 initially
    rng = np.random.default_rng(params.seed)

    def take_step(i1: int, i2: int) -> bool:
        nonlocal bias
        if i1 == i2:
            return False
        a1_old, a2_old = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            lo = max(0.0, a1_old + a2_old - c_box)
            hi = min(c_box, a1_old + a2_old)
        else:
            lo = max(0.0, a2_old - a1_old)
            hi = min(c_box, c_box + a2_old - a1_old)
        if lo >= hi:
            return False
        k11, k12, k22 = kmat[i1, i1], kmat[i1, i2], kmat[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # Flat direction: evaluate the dual objective at both bounds.
            f1 = y1 * (e1 + bias) - a1_old * k11 - s * a2_old * k12
            f2 = y2 * (e2 + bias) - s * a1_old * k12 - a2_old * k22
            l1 = a1_old + s * (a2_old - lo)
            h1 = a1_old + s * (a2_old - hi)
            obj_lo = (
                l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22
                + s * lo * l1 * k12
            )
            obj_hi = (
                h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22
                + s * hi * h1 * k12
            )
            if obj_lo < obj_hi - 1e-12:
                a2 = lo
            elif obj_lo > obj_hi + 1e-12:
                a2 = hi
            else:
                return False
        if abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12):
            return False
        a1 = a1_old + s * (a2_old - a2)
        b1 = bias - e1 - y1 * (a1 - a1_old) * k11 - y2 * (a2 - a2_old) * k12
        b2 = bias - e2 - y1 * (a1 - a1_old) * k12 - y2 * (a2 - a2_old) * k22
        if 0.0 < a1 < c_box:
            b_new = b1
        elif 0.0 < a2 < c_box:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        errors[:] += (
            y1 * (a1 - a1_old) * kmat[i1, :]
            + y2 * (a2 - a2_old) * kmat[i2, :]
            + (b_new - bias)
        )
        alpha[i1] = a1
        alpha[i2] = a2
        bias = b_new
        return True

    def examine(i2: int) -> bool:
        e2 = errors[i2]
        r2 = e2 * y[i2]
        if not ((r2 < -tol and alpha[i2] < c_box) or (r2 > tol and alpha[i2] > 0)):
            return False
        non_bound = np.flatnonzero((alpha > 0) & (alpha < c_box))
        if non_bound.size > 1:
            # Second-choice heuristic: maximal |E1 - E2|.
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
            if take_step(i1, i2):
                return True
        if non_bound.size:
            start = rng.integers(non_bound.size)
            for off in range(non_bound.size):
                if take_step(int(non_bound[(start + off) % non_bound.size]), i2):
                    return True
        start = rng.integers(n)
        for off in range(n):
            if take_step(int((start + off) % n), i2):
                return True
        return False

    converged = False
    examine_all = True
    passes = 0
    while passes < params.max_passes:
        passes += 1
        changed = 0
        if examine_all:
            for i in range(n):
                changed += examine(i)
        else:
            for i in np.flatnonzero((alpha > 0) & (alpha < c_box)):
                changed += examine(int(i))
        if examine_all:
            if changed == 0:
                converged = True
                break
            examine_all = False
        elif changed == 0:
            examine_all = True

    sv_idx = np.flatnonzero(alpha > _SV_FLOOR)
    coeffs = alpha[sv_idx] * y[sv_idx]
    svs = x[sv_idx].copy()
    # Final bias: mean over unbounded support vectors of y_i - f_no_bias(x_i).
    # With every alpha at a bound, fall back to the midpoint of the
    # KKT-feasible bias interval.
    if sv_idx.size:
        f_nb = kmat[:, sv_idx] @ coeffs
        unbounded = sv_idx[(alpha[sv_idx] > _SV_FLOOR) & (alpha[sv_idx] < c_box - _SV_FLOOR)]
        if unbounded.size:
            final_bias = float(np.mean(y[unbounded] - f_nb[unbounded]))
        else:
            gap = y - f_nb
            at_zero = alpha <= _SV_FLOOR
            at_box = alpha >= c_box - _SV_FLOOR
            lo_set = (at_zero & (y > 0)) | (at_box & (y < 0))
            hi_set = (at_box & (y > 0)) | (at_zero & (y < 0))
            b_lo = gap[lo_set].max() if lo_set.any() else gap[hi_set].min()
            b_hi = gap[hi_set].min() if hi_set.any() else gap[lo_set].max()
            final_bias = 0.5 * float(b_lo + b_hi)
    else:
        final_bias = 0.0
    return BinaryModel(
        support_vectors=svs,
        dual_coeffs=coeffs,
        bias=final_bias,
        gamma=gamma,
        converged=converged,
    )


def decision_value(model: BinaryModel, x: np.ndarray) -> float:
    """Dual expansion sum_i dual_coeffs_i K(sv_i, x) + bias."""
    x = np.asarray(x, dtype=np.float64)
    if model.support_vectors.size == 0:
        return model.bias
    if x.shape != (model.support_vectors.shape[1],):
        raise ValidationError(
            f"dimension mismatch: {x.shape} vs ({model.support_vectors.shape[1]},)"
        )
    k = np.exp(-model.gamma * ((model.support_vectors - x) ** 2).sum(axis=1))
    return float(k @ model.dual_coeffs + model.bias)


def _scale_features(x: np.ndarray, mins: np.ndarray, maxs: np.ndarray) -> np.ndarray:
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    out = (x - mins) / safe
    out[..., span == 0] = 0.0
    return out


def train_one_vs_all(ts: TrainingSet, params: SvmParams) -> SvmModel:
    """Train K binary models (class c vs rest) on [0,1]-scaled features."""
    k = ts.class_count
    if k < 2:
        raise ValidationError("one-vs-all training needs at least 2 classes")
    mins = ts.features.min(axis=0)
    maxs = ts.features.max(axis=0)
    scaled = _scale_features(ts.features, mins, maxs)
    gamma = params.gamma if params.gamma is not None else 1.0 / ts.features.shape[1]
    binaries = []
    for c in range(1, k + 1):
        signs = np.where(ts.labels == c, 1.0, -1.0)
        binaries.append(train_binary(scaled, signs, params))
    return SvmModel(
        binaries=tuple(binaries),
        scale_min=mins,
        scale_max=maxs,
        C=params.C,
        gamma=gamma,
    )


def predict(model: SvmModel, x: np.ndarray) -> int:
    """Class with the maximal decision value; ties go to the smallest class ID."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValidationError(f"dimension mismatch: {x.shape} vs ({model.n_features},)")
    xs = _scale_features(x[None, :], model.scale_min, model.scale_max)[0]
    values = [decision_value(m, xs) for m in model.binaries]
    return int(np.argmax(values)) + 1


def classify_raster(model: SvmModel, image: Raster) -> LabelMask:
    """Per-pixel prediction over the whole image."""
    if image.bands != model.n_features:
        raise ValidationError(
            f"band mismatch: image has {image.bands}, model expects {model.n_features}"
        )
    pixels = image.samples.reshape(image.bands, -1).T
    scaled = _scale_features(pixels, model.scale_min, model.scale_max)
    n = scaled.shape[0]
    out = np.empty(n, dtype=np.int32)
    for start in range(0, n, _PREDICT_CHUNK):
        chunk = scaled[start : start + _PREDICT_CHUNK]
        values = np.empty((chunk.shape[0], model.class_count))
        for ci, m in enumerate(model.binaries):
            if m.support_vectors.size == 0:
                values[:, ci] = m.bias
                continue
            kmat = _rbf_matrix(chunk, m.support_vectors, m.gamma)
            values[:, ci] = kmat @ m.dual_coeffs + m.bias
        out[start : start + _PREDICT_CHUNK] = np.argmax(values, axis=1) + 1
    return LabelMask(
        labels=out.reshape(image.height, image.width), class_count=model.class_count
    )


def save_model(model: SvmModel, path: str | Path) -> None:
    doc = {
        "classes": model.class_count,
        "gamma": model.gamma,
        "C": model.C,
        "scaling": [
            [float(lo), float(hi)] for lo, hi in zip(model.scale_min, model.scale_max)
        ],
        "models": [
            {
                "sv": m.support_vectors.tolist(),
                "coef": m.dual_coeffs.tolist(),
                "b": m.bias,
                "converged": m.converged,
            }
            for m in model.binaries
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_model(path: str | Path) -> SvmModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read model {path}: {e}")
    try:
        n_features = len(doc["scaling"])
        binaries = tuple(
            BinaryModel(
                support_vectors=np.array(m["sv"], dtype=np.float64).reshape(-1, n_features),
                dual_coeffs=np.array(m["coef"], dtype=np.float64),
                bias=float(m["b"]),
                gamma=float(doc["gamma"]),
                converged=bool(m.get("converged", True)),
            )
            for m in doc["models"]
        )
        model = SvmModel(
            binaries=binaries,
            scale_min=np.array([s[0] for s in doc["scaling"]], dtype=np.float64),
            scale_max=np.array([s[1] for s in doc["scaling"]], dtype=np.float64),
            C=float(doc["C"]),
            gamma=float(doc["gamma"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed model file {path}: {e}")
    if len(model.binaries) != int(doc["classes"]):
        raise FormatError(f"model file {path}: class count disagrees with model list")
    return model
