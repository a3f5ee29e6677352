"""Topological border following over binary masks (Suzuki & Abe, 1985).

Foreground is 8-connected and background 4-connected. Every outer border and
hole border is traced and linked to its parent border, giving the usual
contour tree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from covct.raster import BinaryMask

Point = Tuple[int, int]  # (x, y)

# 8-neighbourhood offsets (drow, dcol) in clockwise order on screen (rows grow downward)
_CW = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))
_DIR = {d: k for k, d in enumerate(_CW)}


@dataclass(frozen=True)
class ContourPolygon:
    points: Tuple[Point, ...]
    is_outer: bool = True
    parent: Optional[int] = None
    touches_border: bool = False

    def __len__(self):
        return len(self.points)

    def bounding_rect(self) -> Tuple[int, int, int, int]:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1


def _trace(f, i, j, i2, j2, nbd) -> List[Tuple[int, int]]:
    """Follow one border starting at (i, j) with (i2, j2) the known zero neighbour.

    Marks the border in ``f`` in place and returns the visited (row, col) cells.
    """
    start = _DIR[(i2 - i, j2 - j)]
    for n in range(8):
        di, dj = _CW[(start + n) % 8]  # step 3.1 searches clockwise
        if f[i + di][j + dj] != 0:
            i1, j1 = i + di, j + dj
            break
    else:
        f[i][j] = -nbd
        return [(i, j)]

    path = [(i, j)]
    i2, j2 = i1, j1
    i3, j3 = i, j
    while True:
        # step 3.3: counter-clockwise from the element after (i2, j2)
        k0 = _DIR[(i2 - i3, j2 - j3)]
        east_zero = False
        for n in range(1, 9):
            k = (k0 - n) % 8
            di, dj = _CW[k]
            if f[i3 + di][j3 + dj] != 0:
                i4, j4 = i3 + di, j3 + dj
                break
            if k == 0:
                east_zero = True
        # step 3.4
        if east_zero:
            f[i3][j3] = -nbd
        elif f[i3][j3] == 1:
            f[i3][j3] = nbd
        # step 3.5
        if (i4, j4) == (i, j) and (i3, j3) == (i1, j1):
            return path
        i2, j2 = i3, j3
        i3, j3 = i4, j4
        path.append((i3, j3))


def find_contours(mask: BinaryMask) -> List[ContourPolygon]:
    """Trace all borders of ``mask`` in raster-scan discovery order.

    ``parent`` indexes into the returned list (``None`` for top-level outer
    borders, whose parent is the image frame).
    """
    h, w = mask.height, mask.width
    padded = np.zeros((h + 2, w + 2), dtype=np.int64)
    padded[1:-1, 1:-1] = mask.bits
    f = padded.tolist()
    nonzero_cols = [np.flatnonzero(row).tolist() for row in padded]

    # border number -> (is_outer, parent border number); 1 is the frame (a hole border)
    borders = {1: (False, None)}
    traced: List[Tuple[int, bool, int, List[Tuple[int, int]]]] = []
    nbd = 1
    for i in range(1, h + 1):
        lnbd = 1
        row = f[i]
        for j in nonzero_cols[i]:
            fij = row[j]
            if fij == 1 and row[j - 1] == 0:
                is_outer, from_cell = True, (i, j - 1)
            elif fij >= 1 and row[j + 1] == 0:
                is_outer, from_cell = False, (i, j + 1)
                if fij > 1:
                    lnbd = fij
            else:
                if fij != 1:
                    lnbd = abs(fij)
                continue
            nbd += 1
            last_outer, last_parent = borders[lnbd]
            parent = last_parent if is_outer == last_outer else lnbd
            borders[nbd] = (is_outer, parent)
            path = _trace(f, i, j, from_cell[0], from_cell[1], nbd)
            traced.append((nbd, is_outer, parent, path))
            if row[j] != 1:
                lnbd = abs(row[j])

    index_of = {b: k for k, (b, *_rest) in enumerate(traced)}
    out = []
    for _nbd, is_outer, parent, path in traced:
        pts = tuple((c - 1, r - 1) for r, c in path)
        touches = any(x == 0 or y == 0 or x == w - 1 or y == h - 1 for x, y in pts)
        out.append(ContourPolygon(pts, is_outer, index_of.get(parent), touches))
    return out


def contour_area(c: ContourPolygon) -> float:
    """Absolute shoelace area of the polygon through the pixel centres."""
    if len(c.points) < 3:
        return 0.0
    pts = np.asarray(c.points, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2.0


def _draw_segment(bits, x0, y0, x1, y1):
    # every lattice point on the segment, so axis-aligned and 8-step edges are exact
    n = max(abs(x1 - x0), abs(y1 - y0))
    if n == 0:
        bits[y0, x0] = True
        return
    t = np.arange(n + 1) / n
    xs = np.floor(x0 + (x1 - x0) * t + 0.5).astype(np.intp)
    ys = np.floor(y0 + (y1 - y0) * t + 0.5).astype(np.intp)
    bits[ys, xs] = True


def fill_contours(contours: Sequence[ContourPolygon], w: int, h: int) -> BinaryMask:
    """Union of the even-odd scanline fills of ``contours``, boundaries included."""
    bits = np.zeros((h, w), dtype=bool)
    for c in contours:
        pts = np.asarray(c.points, dtype=np.int64)
        if len(pts) == 0:
            continue
        if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] >= w) or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] >= h):
            raise ValueError("contour point outside the target mask")
        region = np.zeros((h, w), dtype=bool)
        x0, y0 = pts[:, 0].astype(np.float64), pts[:, 1].astype(np.float64)
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        sloped = y0 != y1
        ex0, ey0, ex1, ey1 = x0[sloped], y0[sloped], x1[sloped], y1[sloped]
        ylo, yhi = np.minimum(ey0, ey1), np.maximum(ey0, ey1)
        for y in range(int(pts[:, 1].min()), int(pts[:, 1].max()) + 1):
            hit = (ylo <= y) & (y < yhi)  # half-open so shared vertices count once
            if not hit.any():
                continue
            xs = ex0[hit] + (y - ey0[hit]) * (ex1[hit] - ex0[hit]) / (ey1[hit] - ey0[hit])
            xs.sort()
            for a, b in zip(xs[0::2], xs[1::2]):
                lo, hi = int(np.ceil(a)), int(np.floor(b))
                if lo <= hi:
                    region[y, lo:hi + 1] = True
        for (ax, ay), (bx, by) in zip(pts, np.roll(pts, -1, axis=0)):
            _draw_segment(region, int(ax), int(ay), int(bx), int(by))
        bits |= region
    return BinaryMask(bits)
