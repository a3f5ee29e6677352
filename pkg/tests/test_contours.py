import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage as ndi

from covct.contours import ContourPolygon, contour_area, fill_contours, find_contours
from covct.raster import BinaryMask


def square_mask(size=30, lo=5, hi=25):
    m = np.zeros((size, size), bool)
    m[lo:hi, lo:hi] = True
    return m


def cv2_contours(bits):
    found, hier = cv2.findContours(bits.astype(np.uint8), cv2.RETR_TREE, cv2.CHAIN_APPROX_NONE)
    out = []
    for k, c in enumerate(found):
        depth, p = 0, hier[0][k][3]
        while p != -1:
            depth, p = depth + 1, hier[0][p][3]
        out.append((tuple(map(tuple, c[:, 0, :].tolist())), depth % 2 == 0))
    return out


def canonical_cycle(points):
    """Rotate a closed point sequence to start at its smallest point."""
    k = min(range(len(points)), key=lambda i: points[i])
    return tuple(points[k:]) + tuple(points[:k])


def test_empty_mask():
    assert find_contours(BinaryMask.empty(10, 10)) == []


def test_square_perimeter():
    contours = find_contours(BinaryMask(square_mask()))
    assert len(contours) == 1
    c = contours[0]
    assert c.is_outer and c.parent is None and not c.touches_border
    assert len(c.points) == 4 * (20 - 1)
    for (x0, y0), (x1, y1) in zip(c.points, c.points[1:] + c.points[:1]):
        assert max(abs(x1 - x0), abs(y1 - y0)) == 1


def test_square_with_hole():
    m = square_mask()
    m[12:18, 12:18] = False
    contours = find_contours(BinaryMask(m))
    assert [c.is_outer for c in contours] == [True, False]
    assert contours[1].parent == 0


def test_nested_hierarchy():
    m = np.zeros((40, 40), bool)
    m[2:38, 2:38] = True
    m[6:34, 6:34] = False
    m[12:28, 12:28] = True
    m[16:24, 16:24] = False
    c = find_contours(BinaryMask(m))
    assert [x.is_outer for x in c] == [True, False, True, False]
    assert [x.parent for x in c] == [None, 0, 1, 2]


def test_single_pixel_and_border_flag():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    m[0, 4] = True
    c = find_contours(BinaryMask(m))
    assert sorted((x.points, x.touches_border) for x in c) == [(((2, 2),), False), (((4, 0),), True)]


def test_trace_matches_opencv_sequences():
    rng = np.random.default_rng(11)
    for _ in range(150):
        h, w = rng.integers(1, 30, 2)
        bits = rng.random((h, w)) < rng.uniform(0.2, 0.8)
        ours = sorted((canonical_cycle(c.points), c.is_outer) for c in find_contours(BinaryMask(bits)))
        theirs = sorted((canonical_cycle(p), outer) for p, outer in cv2_contours(bits))
        assert ours == theirs


def test_parent_links_match_opencv():
    rng = np.random.default_rng(12)
    for _ in range(100):
        bits = rng.random((24, 24)) < 0.55
        ours = find_contours(BinaryMask(bits))
        found, hier = cv2.findContours(bits.astype(np.uint8), cv2.RETR_TREE, cv2.CHAIN_APPROX_NONE)
        by_start = {canonical_cycle(tuple(map(tuple, c[:, 0, :].tolist()))): k for k, c in enumerate(found)}
        cv_index = [by_start[canonical_cycle(c.points)] for c in ours]
        for k, c in enumerate(ours):
            cv_parent = hier[0][cv_index[k]][3]
            assert (c.parent is None) == (cv_parent == -1)
            if c.parent is not None:
                assert cv_index[c.parent] == cv_parent


@pytest.mark.parametrize("points, area", [
    (((3, 3),), 0.0),
    (((0, 0), (9, 0), (9, 9), (0, 9)), 81.0),
    (((0, 0), (4, 0), (0, 4)), 8.0),
])
def test_contour_area_examples(points, area):
    assert contour_area(ContourPolygon(points)) == area


def test_contour_area_matches_opencv():
    m = square_mask(60, 10, 50)
    m[20:30, 40:50] = False
    c = find_contours(BinaryMask(m))[0]
    assert contour_area(c) == cv2.contourArea(np.asarray(c.points, np.int32).reshape(-1, 1, 2))


class TestFill:
    def test_empty(self):
        assert fill_contours([], 8, 6) == BinaryMask.empty(8, 6)

    def test_axis_aligned_square_polygon(self):
        out = fill_contours([ContourPolygon(((2, 1), (6, 1), (6, 4), (2, 4)))], 10, 8).bits
        want = np.zeros((8, 10), bool)
        want[1:5, 2:7] = True
        np.testing.assert_array_equal(out, want)

    def test_union_of_disjoint(self):
        a = square_mask(40, 3, 12)
        b = np.zeros((40, 40), bool)
        b[20:35, 18:30] = True
        contours = find_contours(BinaryMask(a | b))
        np.testing.assert_array_equal(fill_contours(contours, 40, 40).bits, a | b)

    def test_convex_blob_round_trip(self):
        yy, xx = np.mgrid[0:64, 0:64]
        disc = (xx - 30) ** 2 + (yy - 33) ** 2 <= 20 ** 2
        np.testing.assert_array_equal(fill_contours(find_contours(BinaryMask(disc)), 64, 64).bits, disc)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            fill_contours([ContourPolygon(((0, 0), (10, 0), (10, 3)))], 5, 5)


def hole_free_blob(seed, size=28):
    """Largest 8-connected component of a random smoothed mask, holes filled, kept off the border."""
    rng = np.random.default_rng(seed)
    raw = ndi.gaussian_filter(rng.random((size, size)), 1.5) > 0.5
    raw[0, :] = raw[-1, :] = raw[:, 0] = raw[:, -1] = False
    lab, n = ndi.label(raw, np.ones((3, 3)))
    if n == 0:
        return None
    sizes = ndi.sum(raw, lab, range(1, n + 1))
    blob = lab == (1 + int(np.argmax(sizes)))
    return ndi.binary_fill_holes(blob)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_trace_fill_round_trip(seed):
    blob = hole_free_blob(seed)
    if blob is None or not blob.any():
        return
    outer = [c for c in find_contours(BinaryMask(blob)) if c.is_outer]
    assert len(outer) == 1
    np.testing.assert_array_equal(fill_contours(outer, blob.shape[1], blob.shape[0]).bits, blob)
