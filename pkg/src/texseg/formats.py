"""File formats: TEXF fields, TEXC feature stacks, PGM images, CSV reports.

TEXF layout: magic ``TEXF``, u32 rows, u32 cols (little endian), then
rows*cols float64 values little endian, row-major.

TEXC layout: magic ``TEXC``, u32 rows, u32 cols, u32 feature_len, then
rows*cols row-major float64 feature vectors.

PGM: 8-bit P2 (ASCII) and P5 (binary) with maxval 255 are read; P5 is
written. Label maps are stored as PGM with the label value as the gray
level.
"""

from __future__ import annotations

import struct

import numpy as np

TEXF_MAGIC = b"TEXF"
TEXC_MAGIC = b"TEXC"


class FormatError(ValueError):
    """Raised for malformed or unsupported image/field files."""


# ---------------------------------------------------------------------------
# TEXF fields
# ---------------------------------------------------------------------------

def write_texf(path, field) -> None:
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise FormatError(f"TEXF stores 2-D fields, got shape {field.shape}")
    if not np.all(np.isfinite(field)):
        raise FormatError("TEXF field contains non-finite values")
    rows, cols = field.shape
    with open(path, "wb") as fh:
        fh.write(TEXF_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(field.astype("<f8").tobytes(order="C"))


def read_texf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != TEXF_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {TEXF_MAGIC!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated TEXF header")
    rows, cols = struct.unpack("<II", data[4:12])
    expected = 12 + rows * cols * 8
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=12)
    return values.reshape(rows, cols).astype(np.float64)


# ---------------------------------------------------------------------------
# TEXC feature stacks
# ---------------------------------------------------------------------------

def write_texc(path, features) -> None:
    """Write a (rows, cols, feature_len) float array."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise FormatError(f"TEXC stores (rows, cols, len) stacks, got {features.shape}")
    rows, cols, flen = features.shape
    with open(path, "wb") as fh:
        fh.write(TEXC_MAGIC)
        fh.write(struct.pack("<III", rows, cols, flen))
        fh.write(features.astype("<f8").tobytes(order="C"))


def read_texc(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != TEXC_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {TEXC_MAGIC!r}")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated TEXC header")
    rows, cols, flen = struct.unpack("<III", data[4:16])
    expected = 16 + rows * cols * flen * 8
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=rows * cols * flen, offset=16)
    return values.reshape(rows, cols, flen).astype(np.float64)


# ---------------------------------------------------------------------------
# PGM images
# ---------------------------------------------------------------------------

def _pgm_header_tokens(data: bytes, count: int):
    """Parse `count` whitespace/comment-separated header tokens.

    Returns (tokens, offset_past_last_token).
    """
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        ch = data[pos:pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise FormatError("truncated PGM comment")
            pos = nl + 1
        else:
            end = pos
            while end < len(data) and data[end:end + 1] not in b" \t\r\n":
                end += 1
            tokens.append(data[pos:end])
            pos = end
    return tokens, pos


def read_pgm_raw(path) -> np.ndarray:
    """Read a P2/P5 PGM with maxval 255 as a (rows, cols) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise FormatError(f"{path}: unsupported format {data[:2]!r} (want P2 or P5)")
    binary = data[:2] == b"P5"
    tokens, pos = _pgm_header_tokens(data[2:], 3)
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported (want 255)")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    pos += 2
    if binary:
        pos += 1  # single whitespace byte after maxval
        pixels = np.frombuffer(data, dtype=np.uint8, offset=pos)
        if pixels.size < width * height:
            raise FormatError(f"{path}: truncated P5 pixel data")
        pixels = pixels[: width * height]
    else:
        body = data[pos:].split()
        if len(body) < width * height:
            raise FormatError(f"{path}: truncated P2 pixel data")
        pixels = np.array([int(t) for t in body[: width * height]], dtype=np.int64)
        if pixels.min() < 0 or pixels.max() > 255:
            raise FormatError(f"{path}: P2 sample out of range 0..255")
        pixels = pixels.astype(np.uint8)
    return pixels.reshape(height, width)


def write_pgm(path, gray) -> None:
    """Write a (rows, cols) array of 0..255 integers as binary P5."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise FormatError(f"PGM stores 2-D images, got shape {gray.shape}")
    if gray.min() < 0 or gray.max() > 255:
        raise FormatError("PGM samples must lie in 0..255")
    rows, cols = gray.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (cols, rows))
        fh.write(gray.astype(np.uint8).tobytes(order="C"))


def write_pgm_preview(path, field) -> None:
    """Write a real-valued field as P5, rescaling [min, max] to 0..255."""
    field = np.asarray(field, dtype=np.float64)
    lo, hi = field.min(), field.max()
    if hi > lo:
        gray = np.rint((field - lo) / (hi - lo) * 255.0)
    else:
        gray = np.zeros_like(field)
    write_pgm(path, gray.astype(np.uint8))


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows, seed=None) -> None:
    """Write rows of cells with a header line and optional seed trailer."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    if seed is not None:
        lines.append(f"# seed={seed}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
