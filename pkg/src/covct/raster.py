"""Value-semantic rasters and the pixel arithmetic used throughout the pipeline.

A :class:`Raster` wraps a read-only numpy array of shape ``(h, w)`` for gray
formats or ``(h, w, c)`` for colour formats. All operations are pure and
return new rasters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from covct.errors import EmptyTarget, ShapeMismatch


class PixelFormat(enum.Enum):
    GRAY16 = "gray16"
    GRAY8 = "gray8"
    RGB8 = "rgb8"
    RGBA8 = "rgba8"

    @property
    def channels(self) -> int:
        return {"gray16": 1, "gray8": 1, "rgb8": 3, "rgba8": 4}[self.value]

    @property
    def dtype(self) -> type:
        return np.uint16 if self is PixelFormat.GRAY16 else np.uint8

    @property
    def max_value(self) -> int:
        return 65535 if self is PixelFormat.GRAY16 else 255


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero (``np.round`` rounds halves to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Raster:
    pixels: np.ndarray
    format: PixelFormat

    def __post_init__(self):
        fmt = self.format
        px = np.asarray(self.pixels)
        if px.dtype != fmt.dtype:
            raise TypeError(f"{fmt.name} raster needs {np.dtype(fmt.dtype).name} samples, got {px.dtype}")
        if fmt.channels == 1:
            if px.ndim != 2:
                raise ShapeMismatch(f"gray raster must be 2-D, got shape {px.shape}")
        elif px.ndim != 3 or px.shape[2] != fmt.channels:
            raise ShapeMismatch(f"{fmt.name} raster must be (h, w, {fmt.channels}), got {px.shape}")
        object.__setattr__(self, "pixels", _readonly(px))

    @classmethod
    def gray8(cls, a) -> "Raster":
        return cls(np.asarray(a, dtype=np.uint8), PixelFormat.GRAY8)

    @classmethod
    def gray16(cls, a) -> "Raster":
        return cls(np.asarray(a, dtype=np.uint16), PixelFormat.GRAY16)

    @classmethod
    def rgb8(cls, a) -> "Raster":
        return cls(np.asarray(a, dtype=np.uint8), PixelFormat.RGB8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.format.channels

    @property
    def samples(self) -> np.ndarray:
        """Flat row-major sample array."""
        return self.pixels.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.format is other.format and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Raster({self.width}x{self.height}, {self.format.name})"


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Foreground flags, ``bits[y, x]`` is True for foreground."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ShapeMismatch(f"mask must be 2-D, got shape {b.shape}")
        object.__setattr__(self, "bits", _readonly(b.astype(bool)))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def to_raster(self) -> Raster:
        """0/255 gray image, the on-disk mask representation."""
        return Raster.gray8(np.where(self.bits, 255, 0))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, fg={self.count})"


@dataclass(frozen=True)
class NormalizationParams:
    min_f: float
    max_f: float
    min_g: float = 0.0
    max_g: float = 65535.0

    def __post_init__(self):
        if not self.max_g > self.min_g:
            raise ValueError("max_g must exceed min_g")
        if self.max_f < self.min_f:
            raise ValueError("max_f must be >= min_f")

    @classmethod
    def observed(cls, img: Raster, min_g: float = 0.0, max_g: float = 65535.0) -> "NormalizationParams":
        return cls(float(img.pixels.min()), float(img.pixels.max()), min_g, max_g)


@dataclass(frozen=True)
class BlendSpec:
    c: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"blend fraction must lie in [0, 1], got {self.c}")


def minmax_normalize(img: Raster, params: Optional[NormalizationParams] = None) -> Raster:
    """Affine-rescale a 16-bit image from ``[min_f, max_f]`` onto ``[min_g, max_g]``.

    ``params`` defaults to the observed min/max of ``img`` mapped onto
    ``[0, 65535]``. A flat image (``max_f == min_f``) maps to all ``min_g``.
    """
    if img.format is not PixelFormat.GRAY16:
        raise TypeError("minmax_normalize expects a GRAY16 raster")
    if img.pixels.size == 0:
        raise ShapeMismatch("cannot normalize an empty image")
    p = params or NormalizationParams.observed(img)
    v = img.pixels.astype(np.float64)
    if p.max_f == p.min_f:
        out = np.full(v.shape, p.min_g)
    else:
        out = (v - p.min_f) / (p.max_f - p.min_f) * (p.max_g - p.min_g) + p.min_g
    out = np.clip(round_half_away(out), 0, 65535)
    return Raster.gray16(out)


def quantize_to_8bit(img: Raster) -> Raster:
    """Divide by 255 and round; 65535 / 255 = 257 saturates at 255."""
    if img.format is not PixelFormat.GRAY16:
        raise TypeError("quantize_to_8bit expects a GRAY16 raster")
    out = round_half_away(img.pixels.astype(np.float64) / 255.0)
    return Raster.gray8(np.minimum(out, 255))


# BT.601 luma
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(img: Raster) -> Raster:
    if img.format is PixelFormat.GRAY8:
        return img
    if img.format not in (PixelFormat.RGB8, PixelFormat.RGBA8):
        raise TypeError(f"cannot convert {img.format.name} to grayscale")
    rgb = img.pixels[..., :3].astype(np.float64)
    wr, wg, wb = LUMA_WEIGHTS
    y = wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]
    return Raster.gray8(np.clip(round_half_away(y), 0, 255))


def gray_to_rgb(img: Raster) -> Raster:
    if img.format is not PixelFormat.GRAY8:
        raise TypeError("gray_to_rgb expects a GRAY8 raster")
    return Raster.rgb8(np.repeat(img.pixels[..., None], 3, axis=2))


def _axis_weights(n_in: int, n_out: int):
    # pixel-centre alignment, clamped to the valid sample range
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_array(a: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize of a float array shaped ``(h, w)`` or ``(h, w, c)``; no rounding."""
    if out_w < 1 or out_h < 1:
        raise EmptyTarget(f"target size must be positive, got {out_w}x{out_h}")
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape[:2]
    if (h, w) == (out_h, out_w):
        return a.copy()
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    extra = (None,) * (a.ndim - 2)
    fy = fy[(slice(None), None) + extra]
    fx = fx[(slice(None),) + extra]
    rows = a[y0] * (1.0 - fy) + a[y1] * fy
    return rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx


def resize_bilinear(img: Raster, out_w: int, out_h: int) -> Raster:
    out = resize_array(img.pixels, out_w, out_h)
    out = np.clip(round_half_away(out), 0, img.format.max_value)
    return Raster(out.astype(img.format.dtype), img.format)


def blend(f: Raster, g: Raster, spec: BlendSpec) -> Raster:
    """Linear blend ``h = (1 - c) * f + c * g`` per channel."""
    if f.pixels.shape != g.pixels.shape or f.format is not g.format:
        raise ShapeMismatch(f"cannot blend {f!r} with {g!r}")
    c = spec.c
    h = (1.0 - c) * f.pixels.astype(np.float64) + c * g.pixels.astype(np.float64)
    lo = np.minimum(f.pixels, g.pixels)
    hi = np.maximum(f.pixels, g.pixels)
    h = np.clip(round_half_away(h), lo, hi)
    return Raster(h.astype(f.format.dtype), f.format)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """``(..., 3)`` floats in [0, 1] -> hue in degrees [0, 360), saturation and value in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    delta = v - rgb.min(axis=-1)
    nz = delta > 0
    safe = np.where(nz, delta, 1.0)
    h = np.where(v == r, ((g - b) / safe) % 6.0,
                 np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(nz, h * 60.0, 0.0)
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)
    return np.stack([h % 360.0, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0] % 360.0, hsv[..., 1], hsv[..., 2]
    hp = h / 60.0
    sector = np.floor(hp).astype(np.intp) % 6
    f = hp - np.floor(hp)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    table = np.stack([
        np.stack([v, t, p], -1),
        np.stack([q, v, p], -1),
        np.stack([p, v, t], -1),
        np.stack([p, q, v], -1),
        np.stack([t, p, v], -1),
        np.stack([v, p, q], -1),
    ])
    return np.take_along_axis(table, sector[None, ..., None], axis=0)[0]


def hue_shift(img: Raster, delta: float) -> Raster:
    """Rotate hue by ``delta`` degrees (mod 360), keeping saturation and value."""
    if img.format is not PixelFormat.RGB8:
        raise TypeError("hue_shift expects an RGB8 raster")
    d = float(delta) % 360.0
    if d == 0.0:
        return img
    hsv = rgb_to_hsv(img.pixels.astype(np.float64) / 255.0)
    hsv[..., 0] = (hsv[..., 0] + d) % 360.0
    rgb = hsv_to_rgb(hsv) * 255.0
    return Raster.rgb8(np.clip(round_half_away(rgb), 0, 255))


def apply_mask(img: Raster, mask: BinaryMask) -> Raster:
    """Bitwise AND with a binary mask: background pixels become 0 in every channel."""
    if (mask.height, mask.width) != (img.height, img.width):
        raise ShapeMismatch(f"mask {mask!r} does not match {img!r}")
    bits = mask.bits if img.pixels.ndim == 2 else mask.bits[..., None]
    return Raster(np.where(bits, img.pixels, 0).astype(img.format.dtype), img.format)


def crop(img: Raster, x: int, y: int, w: int, h: int) -> Raster:
    return Raster(img.pixels[y:y + h, x:x + w], img.format)
