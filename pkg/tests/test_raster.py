import json
import struct

import numpy as np
import pytest

from stbf.errors import FormatError, ValidationError
from stbf.raster import (
    LabelMask,
    Raster,
    RasterStack,
    load_mask,
    load_stack,
    read_raster,
    render_class_map,
    save_mask,
    save_stack,
    validate_training_mask,
    write_raster,
)

from conftest import random_raster


def write_header(path, **fields):
    with open(path, "w") as f:
        json.dump(fields, f)


def test_read_u8_identity_load(tmp_path):
    (tmp_path / "img.raw").write_bytes(bytes([0, 1, 2, 3]))
    write_header(
        tmp_path / "img.json",
        width=2, height=2, bands=1, dtype="u8", date="2016-05-27", data="img.raw",
    )
    r = read_raster(tmp_path / "img.json")
    assert r.width == 2 and r.height == 2 and r.bands == 1
    assert r.date_tag == "2016-05-27"
    assert np.array_equal(r.samples.ravel(), [0, 1, 2, 3])


def test_read_size_mismatch(tmp_path):
    (tmp_path / "img.raw").write_bytes(b"\x00" * 100)
    write_header(
        tmp_path / "img.json",
        width=4, height=4, bands=3, dtype="f32", date="", data="img.raw",
    )
    with pytest.raises(ValidationError, match="size mismatch"):
        read_raster(tmp_path / "img.json")


@pytest.mark.parametrize("missing", ["width", "height", "bands", "dtype", "date", "data"])
def test_read_missing_field(tmp_path, missing):
    fields = dict(width=1, height=1, bands=1, dtype="u8", date="", data="img.raw")
    del fields[missing]
    (tmp_path / "img.raw").write_bytes(b"\x00")
    write_header(tmp_path / "img.json", **fields)
    with pytest.raises(FormatError):
        read_raster(tmp_path / "img.json")


def test_read_unsupported_dtype(tmp_path):
    (tmp_path / "img.raw").write_bytes(b"\x00" * 8)
    write_header(
        tmp_path / "img.json",
        width=1, height=1, bands=1, dtype="f64", date="", data="img.raw",
    )
    with pytest.raises(FormatError, match="unsupported dtype"):
        read_raster(tmp_path / "img.json")


def test_read_nonfinite_f32(tmp_path):
    (tmp_path / "img.raw").write_bytes(struct.pack("<f", float("nan")))
    write_header(
        tmp_path / "img.json",
        width=1, height=1, bands=1, dtype="f32", date="", data="img.raw",
    )
    with pytest.raises(ValidationError, match="non-finite"):
        read_raster(tmp_path / "img.json")


def test_write_constant_f32_bytes(tmp_path):
    # Forced encoding: four little-endian IEEE-754 floats of 7.0.
    r = Raster(samples=np.full((1, 2, 2), 7.0), date_tag="t")
    write_raster(r, tmp_path / "c.json")
    assert (tmp_path / "c.raw").read_bytes() == struct.pack("<f", 7.0) * 4


def test_write_u8_out_of_range(tmp_path):
    r = Raster(samples=np.array([[[300.0]]]))
    with pytest.raises(ValidationError, match="out of range"):
        write_raster(r, tmp_path / "bad.json", dtype="u8")


def test_write_u16_roundtrip(tmp_path):
    r = Raster(samples=np.array([[[0.0, 65535.0], [1234.0, 7.0]]]))
    write_raster(r, tmp_path / "m.json", dtype="u16")
    back = read_raster(tmp_path / "m.json")
    assert np.array_equal(back.samples, r.samples)


def test_roundtrip_f32_bit_exact(tmp_path, rng):
    # Round-trip oracle: write then read must reproduce f32 data bit-for-bit.
    for trial in range(20):
        w, h, b = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 5)
        samples = rng.uniform(-1e4, 1e4, size=(b, h, w)).astype(np.float32)
        r = Raster(samples=samples.astype(np.float64), date_tag=f"t{trial}")
        write_raster(r, tmp_path / f"r{trial}.json")
        back = read_raster(tmp_path / f"r{trial}.json")
        assert back.samples.tobytes() == r.samples.tobytes()
        assert back.date_tag == r.date_tag


def test_roundtrip_16x16x8(tmp_path, rng):
    samples = rng.uniform(0, 255, size=(8, 16, 16)).astype(np.float32).astype(np.float64)
    r = Raster(samples=samples, date_tag="big")
    write_raster(r, tmp_path / "big.json")
    assert np.array_equal(read_raster(tmp_path / "big.json").samples, samples)


def make_stack_files(tmp_path, dims, dates=None):
    names = []
    for i, (w, h, b) in enumerate(dims):
        r = Raster(
            samples=np.zeros((b, h, w)),
            date_tag=dates[i] if dates else f"d{i}",
        )
        write_raster(r, tmp_path / f"s{i}.json")
        names.append(f"s{i}.json")
    with open(tmp_path / "manifest.json", "w") as f:
        json.dump({"rasters": names}, f)
    return tmp_path / "manifest.json"


def test_load_stack_five_dates(tmp_path):
    # Five temporal images per study area; desk-scale dimensions.
    manifest = make_stack_files(tmp_path, [(8, 8, 2)] * 5)
    stack = load_stack(manifest)
    assert len(stack) == 5
    assert stack.bands == 2


def test_load_stack_dimension_mismatch(tmp_path):
    manifest = make_stack_files(tmp_path, [(4, 4, 1), (5, 5, 1)])
    with pytest.raises(ValidationError, match="mismatch"):
        load_stack(manifest)


def test_load_stack_single_entry(tmp_path):
    manifest = make_stack_files(tmp_path, [(4, 4, 1)])
    assert len(load_stack(manifest)) == 1


def test_load_stack_duplicate_dates(tmp_path):
    manifest = make_stack_files(tmp_path, [(4, 4, 1), (4, 4, 1)], dates=["x", "x"])
    with pytest.raises(ValidationError, match="duplicate"):
        load_stack(manifest)


def test_load_stack_missing_file(tmp_path):
    with open(tmp_path / "manifest.json", "w") as f:
        json.dump({"rasters": ["nope.json"]}, f)
    with pytest.raises(ValidationError, match="missing"):
        load_stack(tmp_path / "manifest.json")


def test_manifest_fuzz_rejects_injected_violations(tmp_path, rng):
    # Property: every manifest with one injected violation is rejected.
    violations = ["dim", "band", "dup", "missing"]
    for trial in range(20):
        kind = violations[trial % len(violations)]
        d = tmp_path / f"f{trial}"
        d.mkdir()
        w, h, b = int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(1, 4))
        dims = [(w, h, b)] * 3
        dates = [f"d{i}" for i in range(3)]
        bad = int(rng.integers(3))
        if kind == "dim":
            dims[bad] = (w + 1, h, b)
        elif kind == "band":
            dims[bad] = (w, h, b + 1)
        elif kind == "dup":
            dates[bad] = dates[(bad + 1) % 3]
        manifest = make_stack_files(d, dims, dates=dates)
        if kind == "missing":
            (d / "s1.json").unlink()
        with pytest.raises(ValidationError):
            load_stack(manifest)


def test_save_stack_roundtrip(tmp_path, rng):
    rasters = tuple(random_raster(rng, 6, 5, 3, date_tag=f"d{i}") for i in range(3))
    stack = RasterStack(rasters=rasters)
    manifest = save_stack(stack, tmp_path / "out")
    # f32 write truncates float64 precision; compare against the f32 cast.
    back = load_stack(manifest)
    for orig, re in zip(stack.rasters, back.rasters):
        assert np.array_equal(re.samples, orig.samples.astype(np.float32))


def test_render_single_green_pixel(tmp_path):
    mask = LabelMask(labels=np.array([[1]]))
    render_class_map(mask, {1: (0, 255, 0)}, tmp_path / "px.ppm")
    assert (tmp_path / "px.ppm").read_bytes() == b"P6\n1 1\n255\n\x00\xff\x00"


def test_render_all_zero_black(tmp_path):
    mask = LabelMask(labels=np.zeros((2, 2), dtype=np.int32))
    render_class_map(mask, {}, tmp_path / "z.ppm")
    assert (tmp_path / "z.ppm").read_bytes() == b"P6\n2 2\n255\n" + b"\x00" * 12


def test_render_checkerboard_byte_oracle(tmp_path):
    # Byte-level oracle: assemble the expected PPM by hand.
    labels = np.array([[1, 2, 1, 2], [3, 4, 3, 4], [1, 2, 1, 2], [3, 4, 3, 4]])
    palette = {1: (255, 0, 0), 2: (0, 255, 0), 3: (0, 0, 255), 4: (9, 9, 9)}
    render_class_map(LabelMask(labels=labels), palette, tmp_path / "cb.ppm")
    expected = bytearray(b"P6\n4 4\n255\n")
    for row in labels:
        for c in row:
            expected.extend(palette[int(c)])
    assert (tmp_path / "cb.ppm").read_bytes() == bytes(expected)


def test_render_missing_palette_entry(tmp_path):
    mask = LabelMask(labels=np.array([[1, 2]]))
    with pytest.raises(ValidationError, match="palette"):
        render_class_map(mask, {1: (0, 0, 0)}, tmp_path / "x.ppm")


def test_render_deterministic(tmp_path, rng):
    labels = rng.integers(0, 4, size=(9, 7))
    mask = LabelMask(labels=labels)
    palette = {1: (1, 2, 3), 2: (4, 5, 6), 3: (7, 8, 9)}
    render_class_map(mask, palette, tmp_path / "a.ppm")
    render_class_map(mask, palette, tmp_path / "b.ppm")
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


def test_mask_roundtrip(tmp_path):
    mask = LabelMask(labels=np.array([[0, 1], [2, 3]]))
    save_mask(mask, tmp_path / "m.json")
    back = load_mask(tmp_path / "m.json")
    assert np.array_equal(back.labels, mask.labels)


def test_mask_requires_u8_single_band(tmp_path):
    r = Raster(samples=np.zeros((2, 2, 2)))
    write_raster(r, tmp_path / "r.json")
    with pytest.raises(FormatError, match="u8 single-band"):
        load_mask(tmp_path / "r.json")


def test_training_mask_validation():
    ok = LabelMask(labels=np.array([[1, 2], [0, 2]]))
    assert validate_training_mask(ok) == 2
    gap = LabelMask(labels=np.array([[1, 3], [0, 3]]))
    with pytest.raises(ValidationError, match="contiguous"):
        validate_training_mask(gap)
    single = LabelMask(labels=np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValidationError, match="at least 2"):
        validate_training_mask(single)


def test_raster_invariants():
    with pytest.raises(ValidationError):
        Raster(samples=np.array([[[np.inf]]]))
    with pytest.raises(ValidationError):
        Raster(samples=np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        RasterStack(rasters=())
