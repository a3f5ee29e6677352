"""Numeric layer kernels for the micro inference engine.

Convolutions run in numba kernels that release the GIL, so output-channel
slices can be computed on separate threads. Each output element is always
accumulated in the same order, which makes results independent of how the
channel range is split.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
from numba import njit

from covct.errors import ShapeMismatch


@njit(nogil=True, cache=True)
def _conv_range(x, w, b, stride, pad, groups, out, c0, c1):
    cin_total, h, wd = x.shape
    cout_total, cpg, kh, kw = w.shape
    _, oh, ow = out.shape
    opg = cout_total // groups
    for co in range(c0, c1):
        base = (co // opg) * cpg
        for oy in range(oh):
            for ox in range(ow):
                acc = b[co]
                for ci in range(cpg):
                    for u in range(kh):
                        iy = oy * stride - pad + u
                        if iy < 0 or iy >= h:
                            continue
                        for v in range(kw):
                            ix = ox * stride - pad + v
                            if ix < 0 or ix >= wd:
                                continue
                            acc += x[base + ci, iy, ix] * w[co, ci, u, v]
                out[co, oy, ox] = acc


@lru_cache(maxsize=None)
def _executor(threads: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=threads, thread_name_prefix="covct-conv")


def split_range(n: int, parts: int):
    """Contiguous balanced ``[start, stop)`` ranges, larger ones first."""
    q, r = divmod(n, parts)
    start = 0
    for k in range(parts):
        stop = start + q + (1 if k < r else 0)
        yield start, stop
        start = stop


def conv_output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def convolve(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, padding: int = 0,
             groups: int = 1, threads: int = 1) -> np.ndarray:
    """Grouped 2-D cross-correlation with zero padding.

    x: (C_in, H, W); w: (C_out, C_in / groups, kh, kw); b: (C_out,).
    ``groups == C_in`` gives a depthwise convolution.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if x.ndim != 3 or w.ndim != 4 or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"bad conv operand shapes x{x.shape} w{w.shape} b{b.shape}")
    cin, h, wd = x.shape
    cout, cpg, kh, kw = w.shape
    if groups < 1 or cin % groups or cout % groups or cin // groups != cpg:
        raise ShapeMismatch(f"{cin} input / {cout} output channels incompatible with groups={groups}, w{w.shape}")
    if stride < 1 or padding < 0:
        raise ShapeMismatch("stride must be >= 1 and padding >= 0")
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(wd, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than padded input {h}x{wd}")
    out = np.empty((cout, oh, ow), dtype=np.float64)
    threads = max(1, min(int(threads), cout))
    if threads == 1:
        _conv_range(x, w, b, stride, padding, groups, out, 0, cout)
    else:
        futures = [
            _executor(threads).submit(_conv_range, x, w, b, stride, padding, groups, out, c0, c1)
            for c0, c1 in split_range(cout, threads)
        ]
        for fut in futures:
            fut.result()
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def swish(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x)."""
    with np.errstate(over="ignore"):
        return x / (1.0 + np.exp(-x))


ACTIVATIONS = {"relu": relu, "swish": swish, "none": lambda x: x}


def global_avg_pool(t: np.ndarray) -> np.ndarray:
    if t.ndim != 3 or t.shape[1] * t.shape[2] == 0:
        raise ShapeMismatch(f"global average pooling needs a non-empty (C, H, W) tensor, got {t.shape}")
    return t.mean(axis=(1, 2))


def softmax(logits: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = np.exp(logits - np.max(logits))
    return z / z.sum()


def dense_softmax(v: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != v.shape[0] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"dense shapes W{w.shape} v{v.shape} b{b.shape} disagree")
    return softmax(w @ v + b)


def mbconv_block(x: np.ndarray, expand_w, expand_b, dw_w, dw_b, project_w, project_b,
                 stride: int = 1, activation: str = "swish", threads: int = 1) -> np.ndarray:
    """Inverted bottleneck: 1x1 expand, act, depthwise kxk, act, linear 1x1 project, optional residual."""
    act = ACTIVATIONS[activation]
    expanded = expand_w.shape[0]
    if expand_w.shape[1] != x.shape[0] or dw_w.shape[0] != expanded or project_w.shape[1] != expanded:
        raise ShapeMismatch("mbconv weight shapes do not chain")
    k = dw_w.shape[2]
    h = act(convolve(x, expand_w, expand_b, threads=threads))
    h = act(convolve(h, dw_w, dw_b, stride=stride, padding=k // 2, groups=expanded, threads=threads))
    h = convolve(h, project_w, project_b, threads=threads)
    if h.shape == x.shape:
        h = h + x
    return h
