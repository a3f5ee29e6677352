"""Lung parenchyma segmentation for axial chest CT slices.

Pipeline: Otsu threshold (dark foreground) -> 3x3 dilate/erode clean-up ->
two extra dilations -> border following -> area filter -> contour fill ->
bitwise mask -> bounding-box crop enlarged back to the input size.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

from covct.contours import ContourPolygon, contour_area, fill_contours, find_contours
from covct.errors import InvalidBBox, NoLungFound
from covct.raster import BinaryMask, PixelFormat, Raster, apply_mask, crop, resize_bilinear

# Contour area bounds in px^2, exclusive on both ends.
MIN_LUNG_AREA = 100 * 100
MAX_LUNG_AREA = 512 * 512


class Polarity(enum.Enum):
    BRIGHT_FG = "bright"
    DARK_FG = "dark"


class Morph(enum.Enum):
    ERODE = "erode"
    DILATE = "dilate"
    HOLE_FILL_OPEN = "hole_fill_open"


class BBox(NamedTuple):
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class SegmentationResult:
    mask: BinaryMask
    segmented: Raster
    bbox: BBox
    enlarged: Raster
    contours: tuple = ()


def _histogram(img: Raster) -> np.ndarray:
    if img.format is not PixelFormat.GRAY8:
        raise TypeError("expected a GRAY8 raster")
    if img.pixels.size == 0:
        raise ValueError("empty image")
    return np.bincount(img.pixels.ravel(), minlength=256)


def otsu_threshold(img: Raster) -> int:
    """Threshold maximising between-class variance of the 256-bin histogram.

    Class 0 is ``<= t``. Only thresholds leaving both classes non-empty are
    candidates; ties go to the smallest ``t``. A flat image returns its single
    tonal value. Scores are compared as exact integer ratios so tie-breaking
    never depends on float round-off.
    """
    hist = [int(v) for v in _histogram(img)]
    total = sum(hist)
    total_sum = sum(k * n for k, n in enumerate(hist))
    best_t, best_num, best_den = None, 0, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_sum - s0
        # sigma_b^2 * N^2 = (s0*n1 - s1*n0)^2 / (n0*n1)
        num = (s0 * n1 - s1 * n0) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t is None:
        return int(img.pixels.flat[0])
    return best_t


def binarize(img: Raster, t: int, polarity: Polarity = Polarity.DARK_FG) -> BinaryMask:
    if polarity is Polarity.BRIGHT_FG:
        return BinaryMask(img.pixels > t)
    return BinaryMask(img.pixels <= t)


def _shifts(bits: np.ndarray):
    h, w = bits.shape
    p = np.zeros((h + 2, w + 2), dtype=bool)
    p[1:-1, 1:-1] = bits
    for dy in range(3):
        for dx in range(3):
            yield p[dy:dy + h, dx:dx + w]


def _erode(bits):
    out = np.ones_like(bits)
    for s in _shifts(bits):
        out &= s
    return out


def _dilate(bits):
    out = np.zeros_like(bits)
    for s in _shifts(bits):
        out |= s
    return out


def morphology(mask: BinaryMask, mode: Morph, iterations: int = 1) -> BinaryMask:
    """3x3 square structuring element; pixels outside the image count as background."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    bits = mask.bits.copy()
    for _ in range(iterations):
        if mode is Morph.ERODE:
            bits = _erode(bits)
        elif mode is Morph.DILATE:
            bits = _dilate(bits)
        else:
            bits = _erode(_dilate(bits))
    return BinaryMask(bits)


def select_lung_contours(contours: Sequence[ContourPolygon]) -> List[ContourPolygon]:
    """Outer borders strictly between 100x100 and 512x512 px^2 that stay off the image border."""
    return [
        c for c in contours
        if c.is_outer and not c.touches_border and MIN_LUNG_AREA < contour_area(c) < MAX_LUNG_AREA
    ]


def union_bbox(contours: Sequence[ContourPolygon]) -> BBox:
    pts = np.concatenate([np.asarray(c.points) for c in contours])
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return BBox(int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1))


def crop_enlarge(img: Raster, bbox: BBox) -> Raster:
    x, y, w, h = bbox
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise InvalidBBox(f"{bbox} is not a non-empty rectangle inside {img.width}x{img.height}")
    return resize_bilinear(crop(img, x, y, w, h), img.width, img.height)


def lung_mask_candidates(img: Raster) -> BinaryMask:
    """Threshold and clean-up stages, before contour selection."""
    t = otsu_threshold(img)
    mask = binarize(img, t, Polarity.DARK_FG)
    mask = morphology(mask, Morph.HOLE_FILL_OPEN, 1)
    return morphology(mask, Morph.DILATE, 2)


def segment_lungs(img: Raster) -> SegmentationResult:
    if img.format is not PixelFormat.GRAY8:
        raise TypeError("segment_lungs expects a GRAY8 raster")
    candidates = lung_mask_candidates(img)
    accepted = select_lung_contours(find_contours(candidates))
    if not accepted:
        raise NoLungFound("no contour passed the lung area filter")
    mask = fill_contours(accepted, img.width, img.height)
    segmented = apply_mask(img, mask)
    bbox = union_bbox(accepted)
    return SegmentationResult(mask, segmented, bbox, crop_enlarge(segmented, bbox), tuple(accepted))
