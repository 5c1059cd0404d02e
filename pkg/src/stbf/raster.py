"""Raster / stack data model and raw binary file IO.

File format: a JSON header ``{"width", "height", "bands", "dtype", "date",
"data"}`` next to a raw little-endian data file laid out band-sequential
(all of band 0, then band 1, ...), each band row-major.  Supported dtypes
are ``u8``, ``u16`` and ``f32``.  Samples are held in memory as float64
arrays of shape ``(bands, height, width)``; integer sources load verbatim
with no rescaling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, ValidationError

DTYPES = {
    "u8": np.dtype("u1"),
    "u16": np.dtype("<u2"),
    "f32": np.dtype("<f4"),
}

INT_RANGES = {"u8": (0, 255), "u16": (0, 65535)}


@dataclass(frozen=True)
class Raster:
    """One date's multi-band image.

    ``samples`` has shape (bands, height, width); flattened in C order this
    is exactly the band-sequential row-major file layout.
    """

    samples: np.ndarray
    date_tag: str = ""

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValidationError(
                f"raster samples must be (bands, height, width), got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise ValidationError("raster contains non-finite samples")
        object.__setattr__(self, "samples", arr)

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class RasterStack:
    """Temporally ordered sequence of co-registered rasters."""

    rasters: tuple[Raster, ...]

    def __post_init__(self):
        rasters = tuple(self.rasters)
        if not rasters:
            raise ValidationError("stack must contain at least one raster")
        first = rasters[0]
        for r in rasters[1:]:
            if r.samples.shape != first.samples.shape:
                raise ValidationError(
                    f"stack dimension mismatch: {r.samples.shape} vs {first.samples.shape}"
                )
        tags = [r.date_tag for r in rasters]
        if len(set(tags)) != len(tags):
            raise ValidationError(f"duplicate date tags in stack: {tags}")
        object.__setattr__(self, "rasters", rasters)

    def __len__(self) -> int:
        return len(self.rasters)

    def __getitem__(self, i: int) -> Raster:
        return self.rasters[i]

    @property
    def bands(self) -> int:
        return self.rasters[0].bands

    @property
    def height(self) -> int:
        return self.rasters[0].height

    @property
    def width(self) -> int:
        return self.rasters[0].width


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class IDs; 0 means unlabeled, 1..K are classes."""

    labels: np.ndarray
    class_count: int = field(default=0)

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValidationError(f"mask labels must be 2-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.int32)
        if arr.min() < 0:
            raise ValidationError("mask labels must be non-negative")
        k = int(self.class_count) or int(arr.max())
        if arr.max() > k:
            raise ValidationError(f"mask label {int(arr.max())} exceeds class count {k}")
        object.__setattr__(self, "labels", arr.astype(np.int32))
        object.__setattr__(self, "class_count", k)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def present_classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels) if c > 0)


def validate_training_mask(mask: LabelMask) -> int:
    """Check the strict training-mask invariant: nonzero IDs contiguous 1..K, K >= 2.

    Returns K.
    """
    present = mask.present_classes()
    if not present or present[0] != 1 or present != list(range(1, len(present) + 1)):
        raise ValidationError(
            f"training mask classes must be contiguous 1..K, found {present}"
        )
    if len(present) < 2:
        raise ValidationError("training mask needs at least 2 classes")
    return len(present)


def _parse_header(header_path: Path) -> dict:
    try:
        with open(header_path, "r", encoding="utf-8") as f:
            header = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"missing header file: {header_path}")
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed header {header_path}: {e}")
    if not isinstance(header, dict):
        raise FormatError(f"malformed header {header_path}: expected JSON object")
    for key in ("width", "height", "bands", "dtype", "date", "data"):
        if key not in header:
            raise FormatError(f"header {header_path} missing field '{key}'")
    for key in ("width", "height", "bands"):
        v = header[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise FormatError(f"header {header_path}: '{key}' must be a positive integer")
    if header["dtype"] not in DTYPES:
        raise FormatError(
            f"header {header_path}: unsupported dtype {header['dtype']!r} "
            f"(expected one of {sorted(DTYPES)})"
        )
    return header


def read_raster(header_path: str | Path) -> Raster:
    """Load a raster from its JSON header; u8/u16 values load verbatim."""
    header_path = Path(header_path)
    header = _parse_header(header_path)
    w, h, b = header["width"], header["height"], header["bands"]
    dt = DTYPES[header["dtype"]]
    data_path = header_path.parent / header["data"]
    try:
        raw = data_path.read_bytes()
    except FileNotFoundError:
        raise ValidationError(f"missing data file: {data_path}")
    expected = w * h * b * dt.itemsize
    if len(raw) != expected:
        raise ValidationError(
            f"data size mismatch for {data_path}: {len(raw)} bytes, "
            f"expected {expected} ({w}x{h}x{b} {header['dtype']})"
        )
    arr = np.frombuffer(raw, dtype=dt).reshape(b, h, w).astype(np.float64)
    if header["dtype"] == "f32" and not np.isfinite(arr).all():
        raise ValidationError(f"non-finite values in f32 raster {data_path}")
    return Raster(samples=arr, date_tag=str(header["date"]))


def write_raster(raster: Raster, header_path: str | Path, dtype: str = "f32") -> None:
    """Write header + raw data file; f32 round-trips bit-exactly."""
    if dtype not in DTYPES:
        raise ValidationError(f"unsupported dtype {dtype!r}")
    header_path = Path(header_path)
    data_name = header_path.stem + ".raw"
    if dtype in INT_RANGES:
        lo, hi = INT_RANGES[dtype]
        rounded = np.rint(raster.samples)
        if rounded.min() < lo or rounded.max() > hi:
            raise ValidationError(
                f"sample value out of range for {dtype}: "
                f"[{raster.samples.min()}, {raster.samples.max()}] not in [{lo}, {hi}]"
            )
        out = rounded.astype(DTYPES[dtype])
    else:
        out = raster.samples.astype(DTYPES[dtype])
        if not np.isfinite(out).all():
            raise ValidationError("sample value out of range for f32")
    header = {
        "width": raster.width,
        "height": raster.height,
        "bands": raster.bands,
        "dtype": dtype,
        "date": raster.date_tag,
        "data": data_name,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    with open(header_path, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2)
        f.write("\n")
    (header_path.parent / data_name).write_bytes(out.tobytes())


def load_stack(manifest_path: str | Path) -> RasterStack:
    """Load a temporal stack from a JSON manifest {"rasters": [header, ...]}.

    Header paths are resolved relative to the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"missing manifest file: {manifest_path}")
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed manifest {manifest_path}: {e}")
    entries = manifest.get("rasters") if isinstance(manifest, dict) else None
    if not isinstance(entries, list) or not entries:
        raise FormatError(
            f"manifest {manifest_path} must contain a non-empty 'rasters' list"
        )
    rasters = [read_raster(manifest_path.parent / p) for p in entries]
    return RasterStack(rasters=tuple(rasters))


def save_stack(
    stack: RasterStack,
    out_dir: str | Path,
    prefix: str = "img",
    dtype: str = "f32",
) -> Path:
    """Write every raster plus a manifest into ``out_dir``; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, r in enumerate(stack.rasters):
        name = f"{prefix}{i:02d}.json"
        write_raster(r, out_dir / name, dtype=dtype)
        names.append(name)
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump({"rasters": names}, f, indent=2)
        f.write("\n")
    return manifest_path


def load_mask(header_path: str | Path) -> LabelMask:
    """Load a label mask stored as a u8 single-band raster."""
    header_path = Path(header_path)
    header = _parse_header(header_path)
    if header["dtype"] != "u8" or header["bands"] != 1:
        raise FormatError(f"mask {header_path} must be a u8 single-band raster")
    raster = read_raster(header_path)
    return LabelMask(labels=raster.samples[0].astype(np.int32))


def save_mask(mask: LabelMask, header_path: str | Path) -> None:
    raster = Raster(samples=mask.labels[np.newaxis].astype(np.float64), date_tag="")
    write_raster(raster, header_path, dtype="u8")


def render_class_map(
    mask: LabelMask,
    palette: Mapping[int, Sequence[int]],
    path: str | Path,
) -> None:
    """Render a mask to a binary PPM (P6); unlabeled pixels are black."""
    present = mask.present_classes()
    missing = [c for c in present if c not in palette]
    if missing:
        raise ValidationError(f"palette missing entries for classes {missing}")
    lut = np.zeros((max([0] + present) + 1, 3), dtype=np.uint8)
    for c in present:
        lut[c] = palette[c]
    rgb = lut[mask.labels]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P6\n{mask.width} {mask.height}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


# Fixed default palette for rendered class maps (class ID -> RGB).
DEFAULT_PALETTE: dict[int, tuple[int, int, int]] = {
    1: (31, 119, 180),
    2: (210, 180, 110),
    3: (44, 160, 44),
    4: (127, 127, 127),
    5: (64, 64, 64),
    6: (214, 39, 40),
    7: (148, 103, 189),
    8: (227, 119, 194),
}
