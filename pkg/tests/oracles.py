"""Independent reference evaluators shared by several test modules."""

import math

import numpy as np


def naive_conv(x, w, b, stride=1, pad=0, depthwise=False):
    """Direct sliding-window loop over output positions."""
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.zeros((cin, h + 2 * pad, wd + 2 * pad))
    xp[:, pad:pad + h, pad:pad + wd] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.empty((cout, oh, ow))
    for oy in range(oh):
        for ox in range(ow):
            patch = xp[:, oy * stride:oy * stride + kh, ox * stride:ox * stride + kw]
            if depthwise:
                out[:, oy, ox] = (patch * w[:, 0]).sum(axis=(1, 2)) + b
            else:
                out[:, oy, ox] = w.reshape(cout, -1) @ patch.ravel() + b
    return out


def _act(name, t):
    if name == "relu":
        return np.maximum(t, 0)
    if name == "swish":
        return t * (1 / (1 + np.exp(-t)))
    return t


def naive_forward(model, x):
    """Walk the manifest by hand; returns (probs, tapped activations)."""
    t = np.asarray(x, dtype=np.float64)[None]
    tapped = None
    get = lambda name: model.tensors[name].astype(np.float64)  # noqa: E731
    probs = None
    for idx, layer in enumerate(model.layers):
        if layer.kind in ("conv", "depthwise_conv"):
            w, b = map(get, layer.tensors)
            t = naive_conv(t, w, b, layer.stride, layer.padding, layer.kind == "depthwise_conv")
            t = _act(layer.activation, t)
        elif layer.kind == "mbconv":
            ew, eb, dw, db, pw, pb = map(get, layer.tensors)
            h = _act(layer.activation, naive_conv(t, ew, eb))
            h = _act(layer.activation, naive_conv(h, dw, db, layer.stride, layer.kernel // 2, depthwise=True))
            h = naive_conv(h, pw, pb)
            t = h + t if h.shape == t.shape else h
        elif layer.kind == "global_avg_pool":
            t = np.array([c.sum() / c.size for c in t])
        elif layer.kind == "dense_softmax":
            w, b = map(get, layer.tensors)
            logits = [sum(w[i, j] * t[j] for j in range(len(t))) + b[i] for i in range(w.shape[0])]
            m = max(logits)
            e = [math.exp(z - m) for z in logits]
            probs = np.array([v / sum(e) for v in e])
        if idx == model.last_conv_index:
            tapped = t
    return probs, tapped
