"""Experiment orchestration: filter sweeps over sigma_t with per-image
classification in individual and/or transfer-learning mode.

Training masks are drawn once on the original images and reused for every
filter setting: samples are taken from the filtered image at the original
mask locations, and accuracy is scored against the original masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import FormatError, ValidationError
from .evaluation import cohen_kappa, confusion_matrix, overall_accuracy, per_class_accuracy
from .filtering import FilterParams, filter_stack
from .raster import LabelMask, RasterStack, load_mask, load_stack, validate_training_mask
from .svm import SvmParams, classify_raster, sample_training, train_one_vs_all

MODES = ("individual", "transfer", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str
    masks: tuple[str, ...]
    output_dir: str
    sigma_t_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    reference_index: int = 0
    window: int = 5
    sigma_s: float = 7.0
    sigma_r: float = 50.0
    mode: str = "both"
    include_unfiltered: bool = True
    seed: int = 0
    C: float = 10.0
    gamma: float | None = None
    svm_tol: float = 1e-3
    max_passes: int = 200
    sample_per_class: int = 500

    def __post_init__(self):
        grid = tuple(float(s) for s in self.sigma_t_grid)
        if not grid:
            raise ValidationError("sigma_t grid must be non-empty")
        if any(s < 0 for s in grid):
            raise ValidationError("sigma_t values must be non-negative")
        if list(grid) != sorted(set(grid)):
            raise ValidationError("sigma_t grid must be sorted ascending and unique")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.reference_index < 0:
            raise ValidationError("reference_index must be >= 0")
        object.__setattr__(self, "sigma_t_grid", grid)
        object.__setattr__(self, "masks", tuple(self.masks))

    @property
    def filter_params_base(self) -> FilterParams:
        return FilterParams(window=self.window, sigma_s=self.sigma_s, sigma_r=self.sigma_r)

    @property
    def svm_params(self) -> SvmParams:
        return SvmParams(
            C=self.C,
            gamma=self.gamma,
            tol=self.svm_tol,
            max_passes=self.max_passes,
            sample_per_class=self.sample_per_class,
            seed=self.seed,
        )

    @property
    def modes(self) -> tuple[str, ...]:
        return ("individual", "transfer") if self.mode == "both" else (self.mode,)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"cannot read config {path}: {e}")
        if not isinstance(doc, dict):
            raise FormatError(f"config {path} must be a JSON object")
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(doc) - known
        if unknown:
            raise FormatError(f"config {path}: unknown fields {sorted(unknown)}")
        for req in ("manifest", "masks", "output_dir"):
            if req not in doc:
                raise FormatError(f"config {path}: missing required field '{req}'")
        doc = dict(doc)
        doc["masks"] = tuple(doc["masks"])
        if "sigma_t_grid" in doc:
            doc["sigma_t_grid"] = tuple(doc["sigma_t_grid"])
        base = Path(path).parent
        doc["manifest"] = str(base / doc["manifest"])
        doc["masks"] = tuple(str(base / m) for m in doc["masks"])
        doc["output_dir"] = str(base / doc["output_dir"])
        try:
            return cls(**doc)
        except TypeError as e:
            raise FormatError(f"config {path}: {e}")


@dataclass(frozen=True)
class SweepRow:
    """One (sigma_t, image, mode) result; sigma_t None marks the unfiltered baseline."""

    sigma_t: float | None
    image: int
    mode: str
    overall: float
    kappa: float
    per_class: tuple[float, ...]
    predicted: LabelMask | None = field(default=None, repr=False, compare=False)

    @property
    def sigma_label(self) -> str:
        return "original" if self.sigma_t is None else f"{self.sigma_t:g}"


def _check_masks(stack: RasterStack, masks: list[LabelMask], dates: list[int]) -> int:
    if len(masks) != len(stack):
        raise ValidationError(f"expected {len(stack)} masks, got {len(masks)}")
    counts = set()
    for i in dates:
        mask = masks[i]
        if (mask.height, mask.width) != (stack.height, stack.width):
            raise ValidationError(
                f"date {i} ({stack[i].date_tag}): mask {mask.height}x{mask.width} "
                f"does not match stack {stack.height}x{stack.width}"
            )
        try:
            counts.add(validate_training_mask(mask))
        except ValidationError as e:
            raise ValidationError(f"date {i} ({stack[i].date_tag}): {e}")
    if len(counts) > 1:
        raise ValidationError(f"masks disagree on class count: {sorted(counts)}")
    return counts.pop()


def _evaluate(predicted: LabelMask, truth: LabelMask, k: int):
    cm = confusion_matrix(truth, predicted, k)
    return overall_accuracy(cm), cohen_kappa(cm), tuple(per_class_accuracy(cm).tolist())


def run_individual(
    stack: RasterStack, masks: list[LabelMask], params: SvmParams
) -> list[SweepRow]:
    """Train and classify every date with its own mask."""
    k = _check_masks(stack, masks, list(range(len(stack))))
    rows = []
    for i in range(len(stack)):
        ts = sample_training(stack[i], masks[i], params)
        model = train_one_vs_all(ts, params)
        predicted = classify_raster(model, stack[i])
        overall, kappa, per_class = _evaluate(predicted, masks[i], k)
        rows.append(
            SweepRow(
                sigma_t=None, image=i, mode="individual",
                overall=overall, kappa=kappa, per_class=per_class, predicted=predicted,
            )
        )
    return rows


def run_transfer(
    stack: RasterStack,
    masks: list[LabelMask],
    reference_index: int,
    params: SvmParams,
) -> list[SweepRow]:
    """Train once on the reference date, classify every date with that model."""
    if not 0 <= reference_index < len(stack):
        raise ValidationError(
            f"reference index {reference_index} out of range for stack of {len(stack)}"
        )
    k = _check_masks(stack, masks, list(range(len(stack))))
    ts = sample_training(stack[reference_index], masks[reference_index], params)
    model = train_one_vs_all(ts, params)
    rows = []
    for i in range(len(stack)):
        predicted = classify_raster(model, stack[i])
        overall, kappa, per_class = _evaluate(predicted, masks[i], k)
        rows.append(
            SweepRow(
                sigma_t=None, image=i, mode="transfer",
                overall=overall, kappa=kappa, per_class=per_class, predicted=predicted,
            )
        )
    return rows


def _rows_for_stack(
    stack: RasterStack,
    masks: list[LabelMask],
    config: ExperimentConfig,
    sigma_t: float | None,
) -> list[SweepRow]:
    rows: list[SweepRow] = []
    for mode in config.modes:
        if mode == "individual":
            produced = run_individual(stack, masks, config.svm_params)
        else:
            produced = run_transfer(stack, masks, config.reference_index, config.svm_params)
        rows.extend(replace(r, sigma_t=sigma_t, predicted=r.predicted) for r in produced)
    return rows


def sweep_rows(
    stack: RasterStack, masks: list[LabelMask], config: ExperimentConfig
) -> list[list[SweepRow]]:
    """Yield row groups per grid point: unfiltered baseline first, then each sigma_t."""
    if config.reference_index >= len(stack):
        raise ValidationError(
            f"reference index {config.reference_index} out of range for stack of {len(stack)}"
        )
    groups = []
    if config.include_unfiltered:
        groups.append(_rows_for_stack(stack, masks, config, None))
    base = config.filter_params_base
    for sigma_t in config.sigma_t_grid:
        filtered = filter_stack(stack, replace(base, sigma_t=sigma_t))
        groups.append(_rows_for_stack(filtered, masks, config, sigma_t))
    return groups


def run_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Run the full sweep from a config; writes CSV, class maps and figures."""
    from .report import SweepWriter  # late import: pulls in matplotlib

    stack = load_stack(config.manifest)
    masks = [load_mask(p) for p in config.masks]
    k = _check_masks(stack, masks, list(range(len(stack))))
    writer = SweepWriter(Path(config.output_dir), class_count=k)
    rows: list[SweepRow] = []
    try:
        if config.include_unfiltered:
            for row in _rows_for_stack(stack, masks, config, None):
                rows.append(row)
                writer.add(row)
        base = config.filter_params_base
        for sigma_t in config.sigma_t_grid:
            filtered = filter_stack(stack, replace(base, sigma_t=sigma_t))
            for row in _rows_for_stack(filtered, masks, config, sigma_t):
                rows.append(row)
                writer.add(row)
    finally:
        # Partial results stay on disk if a grid point fails mid-run.
        writer.close()
    writer.render_figures(rows)
    return rows
