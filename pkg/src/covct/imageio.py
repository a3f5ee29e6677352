"""Reading 16-bit TIFF scans and reading/writing 8-bit PNG files."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import tifffile
from PIL import Image

from covct.errors import UnsupportedImage
from covct.raster import PixelFormat, Raster

_PNG_MODES = {"L": PixelFormat.GRAY8, "RGB": PixelFormat.RGB8, "RGBA": PixelFormat.RGBA8}


def read_tiff16(path) -> Raster:
    """Load an uncompressed little-endian single-channel 16-bit TIFF.

    Raises ``OSError`` when the file cannot be read at all and
    :class:`UnsupportedImage` for any other TIFF variant.
    """
    data = Path(path).read_bytes()
    try:
        tif = tifffile.TiffFile(io.BytesIO(data))
    except Exception as exc:  # tifffile raises a zoo of types on garbage input
        raise UnsupportedImage(f"{path}: not a TIFF file ({exc})") from exc
    with tif:
        if not tif.pages:
            raise UnsupportedImage(f"{path}: TIFF has no pages")
        page = tif.pages.first
        if tif.byteorder != "<":
            raise UnsupportedImage(f"{path}: big-endian TIFF is not supported")
        if page.compression != 1:
            raise UnsupportedImage(f"{path}: compressed TIFF is not supported")
        if page.is_tiled:
            raise UnsupportedImage(f"{path}: tiled TIFF is not supported")
        if page.dtype != np.uint16 or page.samplesperpixel != 1 or page.ndim != 2:
            raise UnsupportedImage(
                f"{path}: expected single-channel uint16, got {page.dtype} x{page.samplesperpixel}"
            )
        arr = page.asarray()
    return Raster.gray16(arr)


def write_tiff16(path, img: Raster) -> None:
    if img.format is not PixelFormat.GRAY16:
        raise TypeError("write_tiff16 expects a GRAY16 raster")
    tifffile.imwrite(path, np.ascontiguousarray(img.pixels), byteorder="<", compression=None)


def read_png(path) -> Raster:
    """Load an 8-bit grayscale, RGB or RGBA PNG."""
    with Image.open(path) as im:
        if im.format != "PNG":
            raise UnsupportedImage(f"{path}: expected PNG, got {im.format}")
        fmt = _PNG_MODES.get(im.mode)
        if fmt is None:
            raise UnsupportedImage(f"{path}: PNG mode {im.mode} is not supported")
        arr = np.asarray(im)
    return Raster(arr, fmt)


def write_png(path, img: Raster) -> None:
    """Write GRAY8 or RGB8 as PNG without ancillary chunks, so output bytes are reproducible."""
    if img.format not in (PixelFormat.GRAY8, PixelFormat.RGB8):
        raise TypeError(f"cannot write {img.format.name} as PNG")
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(path, format="PNG", optimize=False)
