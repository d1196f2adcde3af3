"""Synthetic random fields: moving-average textures and a kernel-convolution
non-stationary Gaussian model, with analytic covariance oracles.

All samplers are pure functions of (parameters, seed): the same seed always
reproduces the same field bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Dense Gram assembly is quadratic in pixel count; keep fields desk-sized.
MAX_DENSE_PIXELS = 64 * 64


class FactorizationError(RuntimeError):
    """Gram matrix could not be factorized even after jitter escalation."""

    def __init__(self, min_eig: float, jitter: float):
        super().__init__(
            f"Gram factorization failed: min eigenvalue {min_eig:.3e} "
            f"still negative at jitter {jitter:.1e}"
        )
        self.min_eig = min_eig
        self.jitter = jitter


class MAVariant(enum.Enum):
    """Direction of the moving-average stencil."""

    DIAG = "diag"          # sums noise at offsets (i, i)
    ANTIDIAG = "antidiag"  # offsets (-i, i)
    VERT = "vert"          # offsets (0, i)
    HORIZ = "horiz"        # offsets (i, 0)


_STENCIL_STEP = {
    MAVariant.DIAG: (1, 1),
    MAVariant.ANTIDIAG: (-1, 1),
    MAVariant.VERT: (0, 1),
    MAVariant.HORIZ: (1, 0),
}


@dataclass(frozen=True)
class MAModel:
    """Moving-average texture: each pixel sums 2*half_width+1 noise values
    along the variant's direction; standardized models divide by
    sqrt(2*half_width+1) so the per-pixel variance is exactly 1.
    """

    variant: MAVariant
    half_width: int = 2
    standardized: bool = True

    def __post_init__(self):
        if self.half_width < 1:
            raise ValueError(f"half_width must be >= 1, got {self.half_width}")

    @property
    def window(self) -> int:
        return 2 * self.half_width + 1


def sample_white_noise(rows: int, cols: int, seed: int) -> np.ndarray:
    """I.i.d. standard normal field, deterministic in the seed."""
    if rows < 1 or cols < 1:
        raise ValueError(f"field shape must be positive, got {rows}x{cols}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, cols))


def ma_field_from_noise(model: MAModel, noise: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Apply the moving-average stencil to an explicit noise grid.

    The noise grid must be padded by half_width on every side, i.e. have
    trailing shape (rows + 2m, cols + 2m); leading batch axes pass through.
    This is the injection point for tests with constructed noise.
    """
    m = model.half_width
    if noise.shape[-2] != rows + 2 * m or noise.shape[-1] != cols + 2 * m:
        raise ValueError(
            f"noise grid must be ({rows + 2 * m}, {cols + 2 * m}), "
            f"got {noise.shape[-2:]}"
        )
    dr, dc = _STENCIL_STEP[model.variant]
    out = np.zeros(noise.shape[:-2] + (rows, cols), dtype=np.float64)
    for i in range(-m, m + 1):
        r0 = m + i * dr
        c0 = m + i * dc
        out += noise[..., r0:r0 + rows, c0:c0 + cols]
    if model.standardized:
        out /= math.sqrt(model.window)
    return out


def sample_ma_field(model: MAModel, rows: int, cols: int, seed: int) -> np.ndarray:
    """Sample the moving-average texture on a rows x cols grid.

    The underlying noise grid is padded by half_width on each side so every
    output pixel has a full stencil and the field is stationary everywhere.
    """
    m = model.half_width
    noise = sample_white_noise(rows + 2 * m, cols + 2 * m, seed)
    return ma_field_from_noise(model, noise, rows, cols)


def ma_true_autocov(model: MAModel, lag) -> float:
    """Exact lag autocovariance of a standardized moving-average texture.

    Two stencils at lag (i1, i2) overlap in 2m+1-|k| noise values when the
    lag lies on the stencil direction (offset index difference k), else in
    none; dividing by the window length gives the standardized value.
    """
    if not model.standardized:
        raise ValueError("autocovariance oracle requires a standardized model")
    i1, i2 = int(lag[0]), int(lag[1])
    w = model.window
    if model.variant is MAVariant.DIAG:
        on_axis, k = i1 == i2, i1
    elif model.variant is MAVariant.ANTIDIAG:
        on_axis, k = i1 == -i2, i2
    elif model.variant is MAVariant.VERT:
        on_axis, k = i1 == 0, i2
    else:
        on_axis, k = i2 == 0, i1
    if on_axis and abs(k) <= 2 * model.half_width:
        return (w - abs(k)) / w
    return 0.0


# ---------------------------------------------------------------------------
# Kernel-convolution non-stationary model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSizeField:
    """Per-pixel 2x2 kernel covariance ("size") grid, shape (rows, cols, 2, 2).

    Every matrix must be symmetric positive definite; spatial variation of
    the sizes is what makes the resulting field non-stationary.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 4 or e.shape[2:] != (2, 2):
            raise ValueError(f"entries must have shape (rows, cols, 2, 2), got {e.shape}")
        if not np.array_equal(e[..., 0, 1], e[..., 1, 0]):
            raise ValueError("kernel sizes must be symmetric (b_t == c_t)")
        det = e[..., 0, 0] * e[..., 1, 1] - e[..., 0, 1] * e[..., 1, 0]
        if np.any(e[..., 0, 0] <= 0) or np.any(det <= 0):
            raise ValueError("kernel sizes must be positive definite")
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def constant(cls, sigma, rows: int, cols: int) -> "KernelSizeField":
        sigma = np.asarray(sigma, dtype=np.float64)
        return cls(np.broadcast_to(sigma, (rows, cols, 2, 2)).copy())

    @classmethod
    def isotropic_ramp(cls, rows: int, cols: int, lo: float, hi: float) -> "KernelSizeField":
        """Diagonal sizes a_t = d_t ramping linearly with (row + col)."""
        span = max(rows + cols - 2, 1)
        r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        scale = lo + (hi - lo) * (r + c) / span
        entries = np.zeros((rows, cols, 2, 2))
        entries[..., 0, 0] = scale
        entries[..., 1, 1] = scale
        return cls(entries)


def kernel_covariance(sigma_t, sigma_s, t, s, scale: float) -> float:
    """Closed-form covariance of the kernel-convolution process.

    Equals the N(0, sigma_t + sigma_s) density evaluated at the scaled
    coordinate difference; symmetric in (t, s). ``scale`` maps pixel indices
    to continuous coordinates (1/n reproduces normalized [0, 1) coordinates).
    """
    st = np.asarray(sigma_t, dtype=np.float64)
    ss = np.asarray(sigma_s, dtype=np.float64)
    total = st + ss
    det = total[0, 0] * total[1, 1] - total[0, 1] * total[1, 0]
    if det <= 0 or total[0, 0] <= 0:
        raise ValueError(f"sigma_t + sigma_s is not positive definite (det={det})")
    d0 = (t[0] - s[0]) * scale
    d1 = (t[1] - s[1]) * scale
    quad = (total[1, 1] * d0 * d0 - 2.0 * total[0, 1] * d0 * d1 + total[0, 0] * d1 * d1) / det
    return math.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))


def gram_matrix(sizes: KernelSizeField, scale: float | None = None) -> np.ndarray:
    """Dense pixel-pair covariance matrix of the kernel-convolution field.

    Pixels are flattened row-major. Default scale is 1/rows (normalized
    coordinates). Quadratic in pixel count; limited to desk-scale grids.
    """
    rows, cols = sizes.rows, sizes.cols
    n_pix = rows * cols
    if n_pix > MAX_DENSE_PIXELS:
        raise ValueError(
            f"dense Gram assembly capped at {MAX_DENSE_PIXELS} pixels, got {n_pix}"
        )
    if scale is None:
        scale = 1.0 / rows
    e = sizes.entries.reshape(n_pix, 2, 2)
    a, b, d = e[:, 0, 0], e[:, 0, 1], e[:, 1, 1]
    asum = a[:, None] + a[None, :]
    bsum = b[:, None] + b[None, :]
    dsum = d[:, None] + d[None, :]
    det = asum * dsum - bsum * bsum
    r, c = np.divmod(np.arange(n_pix), cols)
    dr = (r[:, None] - r[None, :]) * scale
    dc = (c[:, None] - c[None, :]) * scale
    quad = (dsum * dr * dr - 2.0 * bsum * dr * dc + asum * dc * dc) / det
    return np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))


def gram_root(gram: np.ndarray, jitter: float = 1e-10, max_retries: int = 3) -> np.ndarray:
    """Symmetric PSD square root of a Gram matrix.

    Adds jitter*I before rooting; if the minimum eigenvalue is still
    meaningfully negative the jitter escalates tenfold up to max_retries
    times before failing.
    """
    if jitter < 0:
        raise ValueError("jitter must be >= 0")
    w, vecs = np.linalg.eigh(gram)
    tol = -1e-8 * max(1.0, float(w[-1]))
    level = jitter
    for _ in range(max_retries + 1):
        shifted = w + level
        if shifted[0] >= tol:
            return (vecs * np.sqrt(np.clip(shifted, 0.0, None))) @ vecs.T
        level = level * 10.0 if level > 0 else 1e-10
    raise FactorizationError(float(w[0]), level / 10.0)


def field_from_root(root: np.ndarray, rows: int, cols: int, seed: int) -> np.ndarray:
    """Draw one field given a precomputed covariance square root."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(root.shape[0])
    return (root @ z).reshape(rows, cols)


def sample_nonstationary_field(
    sizes: KernelSizeField,
    seed: int,
    jitter: float = 1e-10,
    scale: float | None = None,
) -> np.ndarray:
    """Sample the kernel-convolution field by dense Gram factorization."""
    gram = gram_matrix(sizes, scale=scale)
    root = gram_root(gram, jitter=jitter)
    return field_from_root(root, sizes.rows, sizes.cols, seed)


def true_kernel_feature(sizes: KernelSizeField, t, m: int,
                        scale: float | None = None) -> np.ndarray:
    """Analytic autocovariance feature of pixel t under the kernel model.

    For each lag in {-m..m}^2 (row-major order, matching the sample feature
    layout) this averages the closed-form covariance over all pixel pairs at
    that lag inside the patch, so t must be at least m away from every border.
    """
    rows, cols = sizes.rows, sizes.cols
    if scale is None:
        scale = 1.0 / rows
    r0, c0 = int(t[0]), int(t[1])
    if not (m <= r0 <= rows - 1 - m and m <= c0 <= cols - 1 - m):
        raise ValueError(f"pixel {t} too close to the border for m={m}")
    e = sizes.entries
    out = np.empty((2 * m + 1) ** 2, dtype=np.float64)
    idx = 0
    for i1 in range(-m, m + 1):
        for i2 in range(-m, m + 1):
            r_lo = r0 - m + max(0, -i1)
            r_hi = r0 + m - max(0, i1)
            c_lo = c0 - m + max(0, -i2)
            c_hi = c0 + m - max(0, i2)
            base = e[r_lo:r_hi + 1, c_lo:c_hi + 1]
            other = e[r_lo + i1:r_hi + i1 + 1, c_lo + i2:c_hi + i2 + 1]
            asum = base[..., 0, 0] + other[..., 0, 0]
            bsum = base[..., 0, 1] + other[..., 0, 1]
            dsum = base[..., 1, 1] + other[..., 1, 1]
            det = asum * dsum - bsum * bsum
            d0, d1 = i1 * scale, i2 * scale
            quad = (dsum * d0 * d0 - 2.0 * bsum * d0 * d1 + asum * d1 * d1) / det
            out[idx] = (np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(det))).mean()
            idx += 1
    return out


def kernel_size_metric(sizes: KernelSizeField, s, t) -> float:
    """Max absolute difference of kernel-size components between two pixels."""
    es = sizes.entries[s[0], s[1]]
    et = sizes.entries[t[0], t[1]]
    return float(np.max(np.abs(et - es)))


def pixel_distance(s, t, n: int) -> float:
    """Euclidean distance of pixel coordinates normalized by the grid side."""
    return math.hypot((s[0] - t[0]) / n, (s[1] - t[1]) / n)
