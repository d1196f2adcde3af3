"""Multi-texture mosaics with ground-truth label masks.

A mosaic is assembled by generating (or loading) one full-size texture per
region, standardizing each, and copying every region's pixels from its own
texture at the same coordinates. Generating at full size keeps each texture
stationary right up to the region boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .fields import KernelSizeField, MAModel, sample_ma_field, sample_nonstationary_field


@dataclass(frozen=True)
class RegionGeometry:
    """Partition of the image into regions labeled 0..k-1.

    kind is one of "vsplit", "hsplit", "disk", "quadrants", "mask".
    Disk center/radius default to the image center and min(rows, cols)/4.
    """

    kind: str
    center: tuple[float, float] | None = None
    radius: float | None = None
    mask_path: str | Path | None = None

    _KINDS = ("vsplit", "hsplit", "disk", "quadrants", "mask")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown geometry {self.kind!r}, want one of {self._KINDS}")
        if self.kind == "mask" and self.mask_path is None:
            raise ValueError("mask geometry requires mask_path")


def region_mask(geom: RegionGeometry, rows: int, cols: int) -> np.ndarray:
    """Ground-truth label map for the geometry on a rows x cols grid."""
    if rows < 2 or cols < 2:
        raise ValueError(f"mosaic must be at least 2x2, got {rows}x{cols}")
    if geom.kind == "vsplit":
        labels = (np.arange(cols) >= cols // 2).astype(np.int64)
        return np.broadcast_to(labels, (rows, cols)).copy()
    if geom.kind == "hsplit":
        labels = (np.arange(rows) >= rows // 2).astype(np.int64)
        return np.broadcast_to(labels[:, None], (rows, cols)).copy()
    if geom.kind == "disk":
        cr, cc = geom.center if geom.center is not None else ((rows - 1) / 2, (cols - 1) / 2)
        radius = geom.radius if geom.radius is not None else min(rows, cols) / 4
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        inside = (r - cr) ** 2 + (c - cc) ** 2 < radius**2
        return inside.astype(np.int64)
    if geom.kind == "quadrants":
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        return (2 * (r >= rows // 2) + (c >= cols // 2)).astype(np.int64)
    labels = formats.read_pgm_raw(geom.mask_path).astype(np.int64)
    if labels.shape != (rows, cols):
        raise ValueError(
            f"mask file shape {labels.shape} does not match mosaic {rows}x{cols}"
        )
    _check_contiguous_labels(labels)
    return labels


def _check_contiguous_labels(labels: np.ndarray) -> None:
    present = np.unique(labels)
    if present[0] != 0 or present[-1] != len(present) - 1:
        raise ValueError(f"region labels must be contiguous from 0, found {present}")


def region_count(mask: np.ndarray) -> int:
    return int(mask.max()) + 1


def standardize_texture(field: np.ndarray) -> np.ndarray:
    """Shift/scale to sample mean 0 and unbiased sample variance 1."""
    field = np.asarray(field, dtype=np.float64)
    var = field.var(ddof=1)
    if var == 0:
        raise ValueError("cannot standardize a constant texture (zero variance)")
    return (field - field.mean()) / np.sqrt(var)


def load_grayscale_image(path) -> np.ndarray:
    """Load a PGM (P2/P5, maxval 255, mapped to [0, 1]) or TEXF field."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == formats.TEXF_MAGIC:
        return formats.read_texf(path)
    if magic[:2] in (b"P2", b"P5"):
        return formats.read_pgm_raw(path).astype(np.float64) / 255.0
    raise formats.FormatError(f"{path}: unsupported image format {magic!r}")


def _realize_source(source, rows: int, cols: int, seed) -> np.ndarray:
    if isinstance(source, MAModel):
        return sample_ma_field(source, rows, cols, seed)
    if isinstance(source, KernelSizeField):
        if (source.rows, source.cols) != (rows, cols):
            raise ValueError(
                f"kernel size field is {source.rows}x{source.cols}, mosaic needs {rows}x{cols}"
            )
        return sample_nonstationary_field(source, seed)
    if isinstance(source, (str, Path)):
        source = load_grayscale_image(source)
    field = np.asarray(source, dtype=np.float64)
    if field.ndim != 2 or field.shape[0] < rows or field.shape[1] < cols:
        raise ValueError(
            f"texture source of shape {field.shape} too small for {rows}x{cols} mosaic"
        )
    return field[:rows, :cols]


def compose_mosaic(sources, geom: RegionGeometry, rows: int, cols: int, seed,
                   standardize: bool = True):
    """Build (mosaic field, truth label map) from one texture source per region.

    Sources may be MAModel or KernelSizeField instances (sampled with seeds
    derived from ``seed``), image paths, or ready-made arrays. Setting
    standardize=False skips per-source standardization (test hook).
    """
    mask = region_mask(geom, rows, cols)
    k = region_count(mask)
    if len(sources) != k:
        raise ValueError(f"geometry has {k} regions but {len(sources)} sources given")
    children = np.random.SeedSequence(seed).spawn(k)
    out = np.zeros((rows, cols), dtype=np.float64)
    for j, source in enumerate(sources):
        field = _realize_source(source, rows, cols, children[j])
        if standardize:
            field = standardize_texture(field)
        sel = mask == j
        out[sel] = field[sel]
    return out, mask
