import numpy as np
import pytest

from texseg import formats
from texseg.fields import MAModel, MAVariant, ma_true_autocov
from texseg.mosaic import (
    RegionGeometry,
    compose_mosaic,
    load_grayscale_image,
    region_count,
    region_mask,
    standardize_texture,
)


# ---------------------------------------------------------------------------
# region masks
# ---------------------------------------------------------------------------

def test_vsplit_4x4():
    mask = region_mask(RegionGeometry("vsplit"), 4, 4)
    assert np.array_equal(mask, np.tile([0, 0, 1, 1], (4, 1)))


def test_hsplit():
    mask = region_mask(RegionGeometry("hsplit"), 4, 2)
    assert np.array_equal(mask[:, 0], [0, 0, 1, 1])


def test_disk_area_matches_brute_force():
    mask = region_mask(RegionGeometry("disk"), 160, 160)
    # brute-force rasterization at the default center/radius
    count = 0
    for r in range(160):
        for c in range(160):
            if (r - 79.5) ** 2 + (c - 79.5) ** 2 < 40.0**2:
                count += 1
    assert mask.sum() == count
    assert abs(mask.sum() - np.pi * 40**2) <= 0.02 * np.pi * 40**2


def test_disk_custom_center_radius():
    mask = region_mask(RegionGeometry("disk", center=(0, 0), radius=1.5), 5, 5)
    assert mask[0, 0] == 1 and mask[0, 1] == 1 and mask[1, 1] == 1
    assert mask[0, 2] == 0 and mask[2, 0] == 0  # distance 2 > 1.5


def test_quadrants_2x2():
    mask = region_mask(RegionGeometry("quadrants"), 2, 2)
    assert np.array_equal(mask, [[0, 1], [2, 3]])


def test_quadrant_areas():
    mask = region_mask(RegionGeometry("quadrants"), 6, 8)
    assert np.bincount(mask.ravel()).tolist() == [12, 12, 12, 12]


def test_mask_file_round_trip(tmp_path):
    labels = np.array([[0, 1], [2, 2]], dtype=np.uint8)
    path = tmp_path / "mask.pgm"
    formats.write_pgm(path, labels)
    mask = region_mask(RegionGeometry("mask", mask_path=path), 2, 2)
    assert np.array_equal(mask, labels)


def test_mask_file_shape_mismatch(tmp_path):
    path = tmp_path / "mask.pgm"
    formats.write_pgm(path, np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError, match="shape"):
        region_mask(RegionGeometry("mask", mask_path=path), 3, 3)


def test_mask_file_non_contiguous_labels(tmp_path):
    path = tmp_path / "mask.pgm"
    formats.write_pgm(path, np.array([[0, 2], [0, 2]], dtype=np.uint8))
    with pytest.raises(ValueError, match="contiguous"):
        region_mask(RegionGeometry("mask", mask_path=path), 2, 2)


def test_every_pixel_labeled():
    for kind in ("vsplit", "hsplit", "disk", "quadrants"):
        mask = region_mask(RegionGeometry(kind), 9, 7)
        assert mask.min() >= 0
        assert np.unique(mask).size == region_count(mask)


def test_unknown_geometry_rejected():
    with pytest.raises(ValueError, match="unknown geometry"):
        RegionGeometry("diagonal")


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

def test_standardize_two_values():
    # equal counts of {0, 2}: mean 1, sample variance n/(n-1); hand result
    field = np.array([[0.0, 2.0], [2.0, 0.0]])
    out = standardize_texture(field)
    want = (field - 1.0) / np.sqrt(field.var(ddof=1))
    assert np.allclose(out, want)
    assert out.mean() == pytest.approx(0.0, abs=1e-15)
    assert out.var(ddof=1) == pytest.approx(1.0, rel=1e-12)


def test_standardize_idempotent():
    rng = np.random.default_rng(2)
    field = rng.standard_normal((8, 8))
    once = standardize_texture(field)
    twice = standardize_texture(once)
    assert np.abs(twice - once).max() < 1e-12


def test_standardize_constant_errors():
    with pytest.raises(ValueError, match="constant"):
        standardize_texture(np.full((3, 3), 7.0))


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------

def test_compose_injected_fields_equals_mask():
    zeros = np.zeros((4, 4))
    ones = np.ones((4, 4))
    field, mask = compose_mosaic([zeros, ones], RegionGeometry("vsplit"), 4, 4, 0,
                                 standardize=False)
    assert np.array_equal(field, mask.astype(float))


def test_compose_deterministic():
    models = [MAModel(MAVariant.DIAG, 2), MAModel(MAVariant.VERT, 2)]
    a, _ = compose_mosaic(models, RegionGeometry("vsplit"), 32, 32, 7)
    b, _ = compose_mosaic(models, RegionGeometry("vsplit"), 32, 32, 7)
    assert np.array_equal(a, b)


def test_compose_region_isolation():
    # output pixel depends only on its own region's source
    base = np.zeros((6, 6))
    alt = np.arange(36.0).reshape(6, 6)
    f1, mask = compose_mosaic([base, alt], RegionGeometry("vsplit"), 6, 6, 0,
                              standardize=False)
    other = np.full((6, 6), -3.0)
    f2, _ = compose_mosaic([other, alt], RegionGeometry("vsplit"), 6, 6, 0,
                           standardize=False)
    assert np.array_equal(f1[mask == 1], f2[mask == 1])


def test_compose_region_lag_autocov_matches_oracles():
    m1 = MAModel(MAVariant.DIAG, 2)
    m2 = MAModel(MAVariant.ANTIDIAG, 2)
    field, mask = compose_mosaic([m1, m2], RegionGeometry("vsplit"), 128, 128, 3)
    base = field[:-1, :-1]
    shifted = field[1:, 1:]
    inner = mask[:-1, :-1] == mask[1:, 1:]
    emp0 = (base * shifted)[(mask[:-1, :-1] == 0) & inner].mean()
    emp1 = (base * shifted)[(mask[:-1, :-1] == 1) & inner].mean()
    assert emp0 == pytest.approx(ma_true_autocov(m1, (1, 1)), abs=0.1)
    assert emp1 == pytest.approx(ma_true_autocov(m2, (1, 1)), abs=0.1)
    assert emp0 > 0.5 and abs(emp1) < 0.1


def test_compose_source_count_mismatch():
    with pytest.raises(ValueError, match="regions"):
        compose_mosaic([MAModel(MAVariant.DIAG, 1)], RegionGeometry("quadrants"), 8, 8, 0)


def test_compose_source_too_small():
    small = np.zeros((3, 3))
    with pytest.raises(ValueError, match="too small"):
        compose_mosaic([small, small], RegionGeometry("vsplit"), 8, 8, 0,
                       standardize=False)


def test_compose_crops_large_sources():
    big = np.arange(100.0).reshape(10, 10)
    field, _ = compose_mosaic([big, big], RegionGeometry("vsplit"), 4, 4, 0,
                              standardize=False)
    assert np.array_equal(field, big[:4, :4])


# ---------------------------------------------------------------------------
# image loading
# ---------------------------------------------------------------------------

def test_load_p5_maps_to_unit_range(tmp_path):
    path = tmp_path / "img.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    field = load_grayscale_image(path)
    assert np.allclose(field, [[0.0, 1.0], [128 / 255, 64 / 255]])


def test_load_p2_p5_identical(tmp_path):
    p2 = tmp_path / "a.pgm"
    p2.write_text("P2\n2 2\n255\n0 255 128 64\n")
    p5 = tmp_path / "b.pgm"
    p5.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    assert np.array_equal(load_grayscale_image(p2), load_grayscale_image(p5))


def test_load_texf_round_trip(tmp_path):
    field = np.random.default_rng(1).standard_normal((5, 4))
    path = tmp_path / "f.texf"
    formats.write_texf(path, field)
    assert np.array_equal(load_grayscale_image(path), field)


def test_load_unsupported(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"ABCDEFG")
    with pytest.raises(formats.FormatError, match="unsupported"):
        load_grayscale_image(path)
