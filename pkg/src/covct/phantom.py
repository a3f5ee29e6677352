"""Synthetic axial chest phantoms with analytic lung geometry.

Used for segmentation tests, CLI demos and benchmarks where real CT data is
not available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from covct.raster import BinaryMask, Raster

FIELD = 0
BODY = 180
LUNG = 30


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    ax: float  # horizontal semi-axis
    ay: float  # vertical semi-axis

    def inside(self, xx, yy) -> np.ndarray:
        return ((xx - self.cx) / self.ax) ** 2 + ((yy - self.cy) / self.ay) ** 2 <= 1.0

    @property
    def area(self) -> float:
        return float(np.pi * self.ax * self.ay)


@dataclass(frozen=True)
class Phantom:
    image: Raster
    truth: BinaryMask  # union of the lung ellipses
    body: Ellipse
    lungs: Tuple[Ellipse, ...]


def render(size: int, body: Ellipse, lungs: Sequence[Ellipse], vessels: Sequence[Tuple[float, float, float]] = (),
           noise: float = 0.0, seed: int = 0) -> Phantom:
    """Paint field, body, lungs and bright vessel dots ``(x, y, radius)`` inside the lungs."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size), FIELD, dtype=np.float64)
    img[body.inside(xx, yy)] = BODY
    truth = np.zeros((size, size), dtype=bool)
    for e in lungs:
        truth |= e.inside(xx, yy)
    img[truth] = LUNG
    for vx, vy, r in vessels:
        img[(xx - vx) ** 2 + (yy - vy) ** 2 <= r * r] = BODY
    if noise > 0:
        img += np.random.default_rng(seed).normal(0.0, noise, img.shape)
    img = np.clip(np.floor(img + 0.5), 0, 255)
    return Phantom(Raster.gray8(img), BinaryMask(truth), body, tuple(lungs))


def disc_phantom(size: int = 512, radius: float = 200, lung_axes=((75, 50), (75, 50)), gap: float = 20) -> Phantom:
    """Bright disc with two dark elliptical lungs side by side."""
    c = size / 2
    lungs = []
    for sign, (ax, ay) in zip((-1, 1), lung_axes):
        lungs.append(Ellipse(c + sign * (gap / 2 + ax), c, ax, ay))
    return render(size, Ellipse(c, c, radius, radius), lungs)


def _contained(inner: Ellipse, outer: Ellipse, margin: float) -> bool:
    th = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    x = inner.cx + (inner.ax + margin) * np.cos(th)
    y = inner.cy + (inner.ay + margin) * np.sin(th)
    return bool(np.all(outer.inside(x, y)))


def chest_phantom(seed: int, size: int = 512, noise: float = 3.0, n_vessels: int = 6) -> Phantom:
    """Randomised phantom with adult-sized lungs at a 512 px field of view.

    Lung semi-axes are drawn from 73-88 px (left-right) by 118-145 px
    (front-back), roughly a 350 mm reconstruction field. Each lung stays at
    least 12 px inside the body outline.
    """
    rng = np.random.default_rng(seed)
    c = size / 2
    k = size / 512
    while True:
        body = Ellipse(c + rng.uniform(-6, 6) * k, c + rng.uniform(-6, 6) * k,
                       rng.uniform(228, 242) * k, rng.uniform(180, 200) * k)
        lungs = []
        for sign in (-1, 1):
            ax = rng.uniform(73, 88) * k
            ay = rng.uniform(118, 145) * k
            gap = rng.uniform(14, 30) * k
            lungs.append(Ellipse(body.cx + sign * (gap / 2 + ax), body.cy + rng.uniform(-6, 6) * k, ax, ay))
        if all(_contained(e, body, 12 * k) for e in lungs):
            break
    vessels = []
    for e in lungs:
        for _ in range(n_vessels):
            r = np.sqrt(rng.uniform(0, 0.6))
            th = rng.uniform(0, 2 * np.pi)
            vessels.append((e.cx + r * e.ax * np.cos(th), e.cy + r * e.ay * np.sin(th), rng.uniform(1, 3) * k))
    return render(size, body, lungs, vessels, noise=noise, seed=seed)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = np.logical_and(a.bits, b.bits).sum()
    union = np.logical_or(a.bits, b.bits).sum()
    return float(inter / union) if union else 1.0
