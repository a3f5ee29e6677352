"""Score-weighted class activation maps with map selection and parallel scoring.

Only every ``stride``-th activation map is scored, and the selected maps are
split into contiguous chunks handled by ``workers`` threads. Every map score
is an independent forward pass written to its own slot, and the weighted sum
is accumulated in index order, so the result does not depend on ``workers``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from covct.errors import ShapeMismatch, UnknownColormap
from covct.nn.layers import split_range
from covct.nn.model import ActivationOutput, ModelBundle, forward_array, image_to_input
from covct.raster import (
    BinaryMask,
    BlendSpec,
    PixelFormat,
    Raster,
    apply_mask,
    blend,
    gray_to_rgb,
    hue_shift,
    resize_array,
    round_half_away,
)

DEFAULT_STRIDE = 4
DEFAULT_WORKERS = 8
COVID = 0
NO_COVID = 1


@dataclass(frozen=True)
class CamConfig:
    stride: int = DEFAULT_STRIDE
    workers: int = DEFAULT_WORKERS
    target_class: int = COVID
    colormap: str = "bcyr"

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.target_class not in (0, 1):
            raise ValueError("target_class must be 0 or 1")


@dataclass(frozen=True, eq=False)
class CamMap:
    values: Raster  # GRAY8 relevance at model input size
    raw: np.ndarray  # full-precision ReLU'd weighted sum
    weights: np.ndarray  # s_k for each selected map
    selected_indices: tuple
    elapsed_ms: float = 0.0

    def sidecar(self, config: CamConfig) -> dict:
        return {
            "selected_indices": list(self.selected_indices),
            "weights": [float(w) for w in self.weights],
            "stride": config.stride,
            "workers": config.workers,
            "elapsed_ms": self.elapsed_ms,
        }


def select_maps(k: int, stride: int) -> List[int]:
    """Every ``stride``-th map index starting from 0."""
    if k < 1 or stride < 1:
        raise ValueError("map count and stride must be >= 1")
    return list(range(0, k, stride))


def partition_work(indices: Sequence[int], workers: int) -> List[List[int]]:
    """``workers`` contiguous chunks whose sizes differ by at most one, larger first."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    indices = list(indices)
    return [indices[a:b] for a, b in split_range(len(indices), workers)]


def normalize_map(a: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def upsampled_mask(a: np.ndarray, width: int, height: int) -> np.ndarray:
    return resize_array(normalize_map(a), width, height)


def score_masked_input(model: ModelBundle, x: np.ndarray, mask: np.ndarray, target: int) -> float:
    """Target-class probability of the input multiplied elementwise by ``mask``."""
    return float(forward_array(model, x * mask, threads=1).probs[target])


def masked_score(model: ModelBundle, img: Raster, a_k: np.ndarray, target: int = COVID) -> float:
    """Score one activation map: normalise, upsample to the input size, mask the input, classify."""
    h, w, _ = model.input_dims
    return score_masked_input(model, image_to_input(img), upsampled_mask(a_k, w, h), target)


def _score_chunk(model, x, maps, chunk, target):
    h, w, _ = model.input_dims
    return [score_masked_input(model, x, upsampled_mask(maps[k], w, h), target) for k in chunk]


def scorecam(model: ModelBundle, img: Raster, config: CamConfig = CamConfig(),
             activations: Optional[ActivationOutput] = None) -> CamMap:
    """Heatmap of ``img`` for ``config.target_class``.

    ``activations`` may carry a forward pass already computed for ``img``;
    otherwise one is run first to obtain the tapped activation maps.
    """
    h, w, _ = model.input_dims
    if (img.height, img.width) != (h, w):
        raise ShapeMismatch(f"model expects {w}x{h} input, got {img.width}x{img.height}")
    t0 = time.perf_counter()
    x = image_to_input(img)
    if activations is None:
        activations = forward_array(model, x, threads=1)
    maps = activations.last_conv
    selected = select_maps(maps.shape[0], config.stride)
    chunks = partition_work(selected, config.workers)

    scores = np.zeros(len(selected), dtype=np.float64)
    if config.workers == 1:
        results = [_score_chunk(model, x, maps, chunks[0], config.target_class)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="covct-cam") as pool:
            futures = [pool.submit(_score_chunk, model, x, maps, chunk, config.target_class) for chunk in chunks]
            results = [f.result() for f in futures]
    pos = 0
    for chunk_scores in results:
        scores[pos:pos + len(chunk_scores)] = chunk_scores
        pos += len(chunk_scores)

    raw = np.zeros((h, w), dtype=np.float64)
    for s, k in zip(scores, selected):
        raw += s * upsampled_mask(maps[k], w, h)
    raw = np.maximum(raw, 0.0)
    values = Raster.gray8(np.clip(round_half_away(normalize_map(raw) * 255.0), 0, 255))
    elapsed = (time.perf_counter() - t0) * 1000.0
    return CamMap(values, raw, scores, tuple(selected), elapsed)


def _lut_from_anchors(anchors) -> np.ndarray:
    pos = [p for p, _ in anchors]
    lut = np.empty((256, 3), dtype=np.uint8)
    idx = np.arange(256, dtype=np.float64)
    for ch in range(3):
        lut[:, ch] = round_half_away(np.interp(idx, pos, [c[ch] for _, c in anchors]))
    lut.setflags(write=False)
    return lut


# blue -> cyan -> yellow -> red
COLORMAPS = {
    "bcyr": _lut_from_anchors([(0, (0, 0, 255)), (85, (0, 255, 255)), (170, (255, 255, 0)), (255, (255, 0, 0))]),
    "gray": _lut_from_anchors([(0, (0, 0, 0)), (255, (255, 255, 255))]),
}


def colorize(cam, colormap: str = "bcyr") -> Raster:
    """Map GRAY8 relevance (a CamMap or raster) through a 256-entry colour table."""
    try:
        lut = COLORMAPS[colormap]
    except KeyError:
        raise UnknownColormap(colormap) from None
    values = cam.values if isinstance(cam, CamMap) else cam
    if values.format is not PixelFormat.GRAY8:
        raise TypeError("colorize expects GRAY8 relevance values")
    return Raster.rgb8(lut[values.pixels])


def compose_overlay(ct: Raster, cam_rgb: Raster, mask: BinaryMask, c: float = 0.5, hue_delta: float = 0.0,
                    full_image: bool = False) -> Raster:
    """Blend the heatmap over the CT, restrict to the lung mask, then rotate hue."""
    if (ct.width, ct.height) != (cam_rgb.width, cam_rgb.height) or (mask.width, mask.height) != (ct.width, ct.height):
        raise ShapeMismatch("CT, heatmap and mask must share dimensions")
    out = blend(gray_to_rgb(ct), cam_rgb, BlendSpec(c))
    if not full_image:
        out = apply_mask(out, mask)
    return hue_shift(out, hue_delta)


def expected_forward_passes(k: int, stride: int) -> int:
    return math.ceil(k / stride)
