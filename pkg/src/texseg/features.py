"""Patch extraction and autocovariance features.

The feature of pixel t is the vector of within-patch lagged sample
autocovariances over the lag set {-m..m}^2 in row-major lag order,
optionally augmented with the normalized pixel location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PADDINGS = ("reflect", "wrap", "shrink")


@dataclass(frozen=True)
class PatchParams:
    """Patch half-width m (patch side 2m+1) and out-of-image padding policy.

    reflect mirrors across the edge without repeating the edge pixel, wrap is
    toroidal, shrink clips the window at the image border (autocovariance
    divisors then use the clipped pair counts).
    """

    half_width: int
    padding: str = "reflect"

    def __post_init__(self):
        if self.half_width < 1:
            raise ValueError(f"half_width must be >= 1, got {self.half_width}")
        if self.padding not in PADDINGS:
            raise ValueError(f"padding must be one of {PADDINGS}, got {self.padding!r}")

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def n_lags(self) -> int:
        return self.side * self.side


def default_half_width(n: int) -> int:
    """Patch half-width rule m = round(sqrt(n)) for an n x n image."""
    return max(1, round(np.sqrt(n)))


def lag_order(m: int):
    """Row-major ordering of the lag set {-m..m}^2."""
    return [(i1, i2) for i1 in range(-m, m + 1) for i2 in range(-m, m + 1)]


def _resolve_indices(idx: np.ndarray, n: int, padding: str) -> np.ndarray:
    if padding == "wrap":
        return idx % n
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    folded = np.abs(idx) % period
    return np.where(folded >= n, period - folded, folded)


def extract_patch(field: np.ndarray, t, params: PatchParams) -> np.ndarray:
    """The (2m+1)x(2m+1) window centered at t, edge-resolved by the padding
    policy; shrink returns the clipped (possibly smaller) window."""
    field = np.asarray(field)
    rows, cols = field.shape
    m = params.half_width
    if params.padding == "wrap" and 2 * m > min(rows, cols):
        raise ValueError(f"wrap padding needs 2m <= min image side, got m={m}")
    r = np.arange(t[0] - m, t[0] + m + 1)
    c = np.arange(t[1] - m, t[1] + m + 1)
    if params.padding == "shrink":
        r = r[(r >= 0) & (r < rows)]
        c = c[(c >= 0) & (c < cols)]
    else:
        r = _resolve_indices(r, rows, params.padding)
        c = _resolve_indices(c, cols, params.padding)
    return field[np.ix_(r, c)]


def sample_autocov(patch: np.ndarray, lag) -> float:
    """Mean of products patch[s] * patch[s+lag] over all positions where both
    lie inside the patch; 0.0 when no such pair exists."""
    i1, i2 = int(lag[0]), int(lag[1])
    pr, pc = patch.shape
    if abs(i1) >= pr or abs(i2) >= pc:
        return 0.0
    r_lo, r_hi = max(0, -i1), pr - max(0, i1)
    c_lo, c_hi = max(0, -i2), pc - max(0, i2)
    base = patch[r_lo:r_hi, c_lo:c_hi]
    shifted = patch[r_lo + i1:r_hi + i1, c_lo + i2:c_hi + i2]
    return float((base * shifted).sum() / base.size)


def feature_vector(field: np.ndarray, t, params: PatchParams,
                   with_location: bool = False) -> np.ndarray:
    """Autocovariance feature of a single pixel, row-major lag order, with
    (row/rows, col/cols) appended when with_location is set."""
    patch = extract_patch(field, t, params)
    m = params.half_width
    values = [sample_autocov(patch, lag) for lag in lag_order(m)]
    if with_location:
        rows, cols = field.shape
        values.extend([t[0] / rows, t[1] / cols])
    return np.array(values, dtype=np.float64)


@dataclass(frozen=True)
class FeatureField:
    """Per-pixel feature vectors, shape (rows, cols, feature_len)."""

    values: np.ndarray
    params: PatchParams
    with_location: bool

    @property
    def shape(self):
        return self.values.shape[:2]

    def flat(self) -> np.ndarray:
        """Row-major (n_pixels, feature_len) view of the features."""
        rows, cols, flen = self.values.shape
        return self.values.reshape(rows * cols, flen)


def all_features(field: np.ndarray, params: PatchParams,
                 with_location: bool = False) -> FeatureField:
    """Feature vectors of every pixel.

    Pair-for-pair identical to per-pixel feature_vector calls, but computed
    one lag at a time over the whole image with integral-image box sums,
    which is what makes 128x128 at m=11 take well under a second.
    """
    field = np.asarray(field, dtype=np.float64)
    rows, cols = field.shape
    m = params.half_width
    n_lags = params.n_lags
    flen = n_lags + (2 if with_location else 0)
    out = np.empty((rows, cols, flen), dtype=np.float64)

    if params.padding == "shrink":
        _all_features_shrink(field, m, out)
    else:
        if params.padding == "wrap" and 2 * m > min(rows, cols):
            raise ValueError(f"wrap padding needs 2m <= min image side, got m={m}")
        mode = "reflect" if params.padding == "reflect" else "wrap"
        padded = np.pad(field, m, mode=mode)
        _all_features_padded(padded, rows, cols, m, out)

    if with_location:
        out[:, :, n_lags] = (np.arange(rows) / rows)[:, None]
        out[:, :, n_lags + 1] = (np.arange(cols) / cols)[None, :]
    return FeatureField(out, params, with_location)


def _lag_index(i1: int, i2: int, m: int) -> int:
    return (i1 + m) * (2 * m + 1) + (i2 + m)


def _integral(values: np.ndarray) -> np.ndarray:
    table = np.zeros((values.shape[0] + 1, values.shape[1] + 1), dtype=np.float64)
    np.cumsum(values, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table


def _half_lags(m: int):
    """One lag per symmetric pair (the mirrored lag has the same value)."""
    return [(i1, i2) for i1 in range(0, m + 1)
            for i2 in range(-m, m + 1) if i1 > 0 or i2 >= 0]


def _all_features_padded(padded: np.ndarray, rows: int, cols: int, m: int,
                         out: np.ndarray) -> None:
    hp, wp = padded.shape
    for i1, i2 in _half_lags(m):
        a1, a2 = abs(i1), abs(i2)
        r0, c0 = max(0, -i1), max(0, -i2)
        base = padded[r0:hp - max(0, i1), c0:wp - max(0, i2)]
        shifted = padded[r0 + i1:hp - max(0, i1) + i1, c0 + i2:wp - max(0, i2) + i2]
        table = _integral(base * shifted)
        win_r = 2 * m + 1 - a1
        win_c = 2 * m + 1 - a2
        box = (table[win_r:win_r + rows, win_c:win_c + cols]
               - table[:rows, win_c:win_c + cols]
               - table[win_r:win_r + rows, :cols]
               + table[:rows, :cols])
        value = box / (win_r * win_c)
        out[:, :, _lag_index(i1, i2, m)] = value
        out[:, :, _lag_index(-i1, -i2, m)] = value


def _all_features_shrink(field: np.ndarray, m: int, out: np.ndarray) -> None:
    rows, cols = field.shape
    tr = np.arange(rows)[:, None]
    tc = np.arange(cols)[None, :]
    for i1, i2 in _half_lags(m):
        a1, a2 = abs(i1), abs(i2)
        if a1 >= rows or a2 >= cols:
            out[:, :, _lag_index(i1, i2, m)] = 0.0
            out[:, :, _lag_index(-i1, -i2, m)] = 0.0
            continue
        base = field[max(0, -i1):rows - max(0, i1), max(0, -i2):cols - max(0, i2)]
        shifted = field[max(0, i1):rows - max(0, -i1), max(0, i2):cols - max(0, -i2)]
        table = _integral(base * shifted)
        # pair-start range inside the clipped patch, in product-array coords
        r_lo = np.maximum(tr - m, 0)
        r_hi = np.minimum(tr + m, rows - 1) - a1
        c_lo = np.maximum(tc - m, 0)
        c_hi = np.minimum(tc + m, cols - 1) - a2
        count = np.maximum(r_hi - r_lo + 1, 0) * np.maximum(c_hi - c_lo + 1, 0)
        r_hi = np.maximum(r_hi, r_lo - 1)
        c_hi = np.maximum(c_hi, c_lo - 1)
        box = (table[r_hi + 1, c_hi + 1] - table[r_lo, c_hi + 1]
               - table[r_hi + 1, c_lo] + table[r_lo, c_lo])
        value = np.where(count > 0, box / np.maximum(count, 1), 0.0)
        out[:, :, _lag_index(i1, i2, m)] = value
        out[:, :, _lag_index(-i1, -i2, m)] = value


# ---------------------------------------------------------------------------
# Disjoint-patch subsample grid
# ---------------------------------------------------------------------------

def axis_positions(n: int, m: int) -> np.ndarray:
    """0-based grid positions (2m+1)*t - 1 for t = 1..floor(n/(2m+1))."""
    step = 2 * m + 1
    count = n // step
    if count < 1:
        raise ValueError(f"image side {n} too small for patch side {step}: empty grid")
    return step * np.arange(1, count + 1) - 1


def subsample_grid(n: int, m: int) -> np.ndarray:
    """Grid of pixels spaced 2m+1 apart so their patches are disjoint.

    Returns (count^2, 2) row-major coordinates.
    """
    pos = axis_positions(n, m)
    rr, cc = np.meshgrid(pos, pos, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def grid_features(field: np.ndarray, grid: np.ndarray, params: PatchParams,
                  with_location: bool = True) -> np.ndarray:
    """Feature vectors of the subsample-grid pixels, one row per grid point."""
    return np.array([
        feature_vector(field, (int(r), int(c)), params, with_location=with_location)
        for r, c in grid
    ])
