"""Grayscale PGM I/O, the linear contrast transform, and Poisson corruption."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConstantImage, InvalidHyper, MalformedHeader, NonPositiveRate, TruncatedData, UnsupportedMagic

GENERATOR = "numpy.random.PCG64"
POISSON_SAMPLER = "knuth(<30)/ptrs(>=30)"
_SMALL_RATE = 30.0
_UNIFORM_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class PixelImage:
    values: np.ndarray
    max_val: int = 255

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size < 1:
            raise MalformedHeader(f"image must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise MalformedHeader("image contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ContrastParams:
    lambda_min: float = 2.0
    lambda_max: float = 25.0

    def __post_init__(self):
        if not (0 < self.lambda_min < self.lambda_max):
            raise InvalidHyper(
                f"contrast bounds need 0 < lambda_min < lambda_max, got {self.lambda_min}, {self.lambda_max}"
            )


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = 2
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise TruncatedData("header ended early")
        if data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    return tokens, i


def read_pgm(data: bytes) -> PixelImage:
    """Parse an ASCII (P2) or binary (P5) PGM."""
    if len(data) < 2:
        raise TruncatedData("file too short for a PGM header")
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedMagic(f"unsupported magic {magic!r}; expected P2 or P5")
    if len(data) > 2 and not data[2:3].isspace() and data[2:3] != b"#":
        raise MalformedHeader("magic number must be followed by whitespace")
    tokens, end = _header_tokens(data, 3)
    try:
        width, height, max_val = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeader(f"non-integer header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if not 0 < max_val <= 65535:
        raise MalformedHeader(f"max value {max_val} outside 1..65535")
    count = width * height

    if magic == b"P5":
        if end >= len(data) or not data[end : end + 1].isspace():
            raise TruncatedData("missing raster after header")
        raster = data[end + 1 :]
        width_bytes = 1 if max_val < 256 else 2
        need = count * width_bytes
        if len(raster) < need:
            raise TruncatedData(f"raster has {len(raster)} bytes, need {need}")
        dtype = np.uint8 if width_bytes == 1 else np.dtype(">u2")
        values = np.frombuffer(raster[:need], dtype=dtype).astype(np.int64)
    else:
        body = data[end:]
        lines = [ln.split(b"#", 1)[0] for ln in body.splitlines()]
        fields = b" ".join(lines).split()
        if len(fields) < count:
            raise TruncatedData(f"found {len(fields)} samples, need {count}")
        try:
            values = np.array([int(f) for f in fields[:count]], dtype=np.int64)
        except ValueError:
            raise MalformedHeader("non-integer sample in P2 raster") from None
    if np.any(values < 0) or np.any(values > max_val):
        raise MalformedHeader(f"sample outside 0..{max_val}")
    return PixelImage(values.reshape(height, width).astype(float), max_val)


def write_pgm(img: PixelImage | np.ndarray) -> bytes:
    """Encode as binary P5 with max value 255; values are rounded and clamped to 0..255."""
    values = img.values if isinstance(img, PixelImage) else np.asarray(img, dtype=float)
    if values.ndim != 2:
        raise MalformedHeader("image must be 2-D")
    raster = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    return header + raster.tobytes()


def center_crop(img: PixelImage, size: int) -> PixelImage:
    if size > min(img.rows, img.cols):
        raise MalformedHeader(f"cannot crop {img.rows}x{img.cols} to {size}x{size}")
    r0 = (img.rows - size) // 2
    c0 = (img.cols - size) // 2
    return PixelImage(img.values[r0 : r0 + size, c0 : c0 + size], img.max_val)


# ---------------------------------------------------------------------------
# contrast transform
# ---------------------------------------------------------------------------


def intensity_forward(img, c: ContrastParams, i_min=None, i_max=None) -> tuple[np.ndarray, float, float]:
    """Affine map of pixel values onto [lambda_min, lambda_max].

    The image's own extremes are used unless ``i_min``/``i_max`` are given
    (for mapping a second image with a recorded transform).

    Returns:
        The transformed field and the (i_min, i_max) used.
    """
    values = img.values if isinstance(img, PixelImage) else np.asarray(img, dtype=float)
    lo = float(values.min()) if i_min is None else float(i_min)
    hi = float(values.max()) if i_max is None else float(i_max)
    if not hi > lo:
        raise ConstantImage(f"image is constant (I_min = I_max = {lo})")
    scale = (c.lambda_max - c.lambda_min) / (hi - lo)
    return scale * (values - lo) + c.lambda_min, lo, hi


def intensity_inverse(x, i_min: float, i_max: float, c: ContrastParams) -> np.ndarray:
    """Exact inverse of ``intensity_forward``; no clamping."""
    x = np.asarray(x, dtype=float)
    scale = (i_max - i_min) / (c.lambda_max - c.lambda_min)
    return scale * (x - c.lambda_min) + i_min


# ---------------------------------------------------------------------------
# Poisson corruption
# ---------------------------------------------------------------------------


@njit(cache=True)
def _knuth(lam, buf, pos):
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        if pos >= buf.size:
            return -1, pos
        p *= buf[pos]
        pos += 1
        if p <= limit:
            return k, pos
        k += 1


@njit(cache=True)
def _ptrs(lam, buf, pos):
    # Hormann's transformed rejection with squeeze.
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        if pos + 1 >= buf.size:
            return -1, pos
        u = buf[pos] - 0.5
        v = buf[pos + 1]
        pos += 2
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k), pos
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b) <= -lam + k * loglam - math.lgamma(k + 1.0):
            return int(k), pos


@njit(cache=True)
def _poisson_fill(rates, out, start, buf):
    pos = 0
    i = start
    while i < rates.size:
        lam = rates[i]
        if lam < 30.0:
            k, pos = _knuth(lam, buf, pos)
        else:
            k, pos = _ptrs(lam, buf, pos)
        if k < 0:
            return i
        out[i] = k
        i += 1
    return i


def corrupt_poisson(x, seed: int) -> np.ndarray:
    """Independent Poisson(x_i) counts from a PCG64 stream seeded with ``seed``.

    Uniforms are drawn in fixed-size blocks and consumed pixel by pixel in
    row-major order; a draw that would straddle two blocks restarts on the
    fresh block, so the output depends only on (x, seed).
    """
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x.ravel())
    if flat.size and not np.all(flat > 0):
        raise NonPositiveRate("Poisson rates must be > 0")
    if not np.all(np.isfinite(flat)):
        raise NonPositiveRate("Poisson rates must be finite")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    out = np.zeros(flat.size, dtype=np.int64)
    i = 0
    while i < flat.size:
        buf = rng.random(_UNIFORM_BLOCK)
        nxt = _poisson_fill(flat, out, i, buf)
        if nxt == i:
            raise RuntimeError(f"uniform block too small for the draw at pixel {i}")
        i = nxt
    return out.reshape(x.shape)


def smooth_test_image(rows: int, cols: int | None = None, kind: str = "sinusoid") -> PixelImage:
    """Low-frequency 8-bit test pattern, already rounded to integer levels."""
    cols = rows if cols is None else cols
    if rows < 1 or cols < 1:
        raise MalformedHeader(f"invalid dimensions {rows}x{cols}")
    r = (np.arange(rows)[:, None] + 0.5) / rows
    c = (np.arange(cols)[None, :] + 0.5) / cols
    if kind == "sinusoid":
        f = np.sin(2 * np.pi * r) * np.cos(2 * np.pi * c)
    elif kind == "ramp":
        f = np.cos(np.pi * (r + c) / 2) * np.ones((rows, cols))
    elif kind == "blob":
        f = 2 * np.exp(-((r - 0.5) ** 2 + (c - 0.5) ** 2) / 0.08) - 1
    else:
        raise MalformedHeader(f"unknown pattern {kind!r}")
    return PixelImage(np.rint(127.5 + 127.5 * f))
