import numpy as np
import pytest
import tifffile
from PIL import Image

from covct.errors import UnsupportedImage
from covct.imageio import read_png, read_tiff16, write_png, write_tiff16
from covct.raster import PixelFormat, Raster


def test_tiff_round_trip(tmp_path):
    img = Raster.gray16(np.arange(0, 5001, 50, dtype=np.uint16).reshape(1, -1).repeat(3, axis=0))
    path = tmp_path / "scan.tif"
    write_tiff16(path, img)
    assert read_tiff16(path) == img


@pytest.mark.parametrize("kwargs, data", [
    ({"compression": "zlib"}, np.zeros((4, 4), np.uint16)),
    ({}, np.zeros((4, 4), np.uint8)),
    ({}, np.zeros((4, 4, 3), np.uint16)),
    ({"byteorder": ">"}, np.zeros((4, 4), np.uint16)),
    ({"tile": (16, 16)}, np.zeros((32, 32), np.uint16)),
])
def test_tiff_variants_rejected(tmp_path, kwargs, data):
    path = tmp_path / "v.tif"
    tifffile.imwrite(path, data, **kwargs)
    with pytest.raises(UnsupportedImage):
        read_tiff16(path)


def test_tiff_garbage_and_missing(tmp_path):
    bad = tmp_path / "bad.tif"
    bad.write_bytes(b"not a tiff at all")
    with pytest.raises(UnsupportedImage):
        read_tiff16(bad)
    with pytest.raises(OSError):
        read_tiff16(tmp_path / "missing.tif")


@pytest.mark.parametrize("img", [
    Raster.gray8(np.arange(64).reshape(8, 8)),
    Raster.rgb8(np.arange(8 * 8 * 3).reshape(8, 8, 3) % 256),
])
def test_png_round_trip_and_stable_bytes(tmp_path, img):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    write_png(a, img)
    write_png(b, img)
    assert a.read_bytes() == b.read_bytes()
    assert read_png(a) == img


def test_png_rgba_and_unsupported(tmp_path):
    rgba = np.zeros((3, 3, 4), np.uint8)
    Image.fromarray(rgba).save(tmp_path / "rgba.png")
    assert read_png(tmp_path / "rgba.png").format is PixelFormat.RGBA8
    Image.fromarray(np.zeros((3, 3), np.uint16)).save(tmp_path / "i16.png")
    with pytest.raises(UnsupportedImage):
        read_png(tmp_path / "i16.png")
