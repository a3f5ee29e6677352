"""Model bundles and the deterministic forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from covct.errors import CorruptModel, ShapeMismatch
from covct.nn.layers import (
    ACTIVATIONS,
    conv_output_size,
    convolve,
    dense_softmax,
    global_avg_pool,
    mbconv_block,
)
from covct.raster import PixelFormat, Raster

DEFAULT_THREADS = 6
DROPOUT_RATE = 0.3

CONV_KINDS = ("conv", "depthwise_conv")
KINDS = ("conv", "depthwise_conv", "mbconv", "global_avg_pool", "dropout", "dense_softmax")

# tensors each kind owns, in manifest order
_TENSOR_ROLES = {
    "conv": ("w", "b"),
    "depthwise_conv": ("w", "b"),
    "mbconv": ("expand_w", "expand_b", "dw_w", "dw_b", "project_w", "project_b"),
    "dense_softmax": ("w", "b"),
    "global_avg_pool": (),
    "dropout": (),
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel: Optional[int] = None
    stride: Optional[int] = None
    padding: Optional[int] = None
    expand: Optional[int] = None
    activation: Optional[str] = None
    rate: Optional[float] = None
    tensors: Tuple[str, ...] = ()

    def to_record(self) -> dict:
        rec = {k: v for k, v in self.__dict__.items() if v is not None and k != "tensors"}
        rec["tensors"] = list(self.tensors)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "LayerSpec":
        rec = dict(rec)
        rec["tensors"] = tuple(rec.get("tensors", ()))
        return cls(**rec)

    @property
    def groups(self) -> int:
        return self.in_channels if self.kind == "depthwise_conv" else 1

    def expected_shapes(self) -> Dict[str, Tuple[int, ...]]:
        k, cin, cout = self.kernel, self.in_channels, self.out_channels
        if self.kind == "conv":
            return {"w": (cout, cin, k, k), "b": (cout,)}
        if self.kind == "depthwise_conv":
            return {"w": (cout, 1, k, k), "b": (cout,)}
        if self.kind == "mbconv":
            e = cin * self.expand
            return {"expand_w": (e, cin, 1, 1), "expand_b": (e,), "dw_w": (e, 1, k, k), "dw_b": (e,),
                    "project_w": (cout, e, 1, 1), "project_b": (cout,)}
        if self.kind == "dense_softmax":
            return {"w": (cout, cin), "b": (cout,)}
        return {}


@dataclass(frozen=True)
class ModelBundle:
    layers: Tuple[LayerSpec, ...]
    tensors: Dict[str, np.ndarray] = field(repr=False)
    input_dims: Tuple[int, int, int] = (64, 64, 1)
    num_classes: int = 2
    last_conv_index: int = 0

    def __post_init__(self):
        frozen = {}
        for name, arr in self.tensors.items():
            a = np.array(arr, dtype="<f4", copy=True)
            a.setflags(write=False)
            frozen[name] = a
        object.__setattr__(self, "tensors", frozen)
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))
        validate(self)

    def tensor(self, layer: LayerSpec, role: str) -> np.ndarray:
        return self.tensors[layer.tensors[_TENSOR_ROLES[layer.kind].index(role)]].astype(np.float64)

    @property
    def num_maps(self) -> int:
        return self.layers[self.last_conv_index].out_channels

    def with_tensor(self, name: str, value) -> "ModelBundle":
        tensors = dict(self.tensors)
        tensors[name] = np.asarray(value, dtype="<f4").reshape(self.tensors[name].shape)
        return replace(self, tensors=tensors)


@dataclass(frozen=True)
class ActivationOutput:
    probs: np.ndarray  # (covid, no-covid)
    last_conv: np.ndarray  # (K, h, w)

    @property
    def label(self) -> int:
        return int(np.argmax(self.probs))


def validate(model: ModelBundle) -> None:
    """Check the layer chain, tensor shapes and head topology; raises CorruptModel."""
    if model.num_classes != 2:
        raise CorruptModel(f"expected a 2-class model, got {model.num_classes}")
    h, w, c = model.input_dims
    if c != 1 or h < 1 or w < 1:
        raise CorruptModel(f"input must be single-channel, got {model.input_dims}")
    if not model.layers:
        raise CorruptModel("model has no layers")
    gap_at = None
    features = None
    for idx, layer in enumerate(model.layers):
        if layer.kind not in KINDS:
            raise CorruptModel(f"layer {layer.name}: unknown kind {layer.kind!r}")
        roles = _TENSOR_ROLES[layer.kind]
        if len(layer.tensors) != len(roles):
            raise CorruptModel(f"layer {layer.name}: expected {len(roles)} tensors, got {len(layer.tensors)}")
        for role, name in zip(roles, layer.tensors):
            if name not in model.tensors:
                raise CorruptModel(f"layer {layer.name}: missing tensor {name!r}")
            want = layer.expected_shapes()[role]
            if model.tensors[name].shape != want:
                raise CorruptModel(f"tensor {name!r} has shape {model.tensors[name].shape}, expected {want}")
        if layer.activation is not None and layer.activation not in ACTIVATIONS:
            raise CorruptModel(f"layer {layer.name}: unknown activation {layer.activation!r}")
        if layer.kind in CONV_KINDS or layer.kind == "mbconv":
            if gap_at is not None or layer.in_channels != c:
                raise CorruptModel(f"layer {layer.name}: expects {layer.in_channels} channels, chain provides {c}")
            if layer.kind == "depthwise_conv" and layer.out_channels != layer.in_channels:
                raise CorruptModel(f"layer {layer.name}: depthwise conv must keep the channel count")
            pad = layer.kernel // 2 if layer.kind == "mbconv" else layer.padding
            h = conv_output_size(h, layer.kernel, layer.stride, pad)
            w = conv_output_size(w, layer.kernel, layer.stride, pad)
            if h < 1 or w < 1:
                raise CorruptModel(f"layer {layer.name}: spatial size collapses")
            c = layer.out_channels
        elif layer.kind == "global_avg_pool":
            gap_at, features = idx, c
        elif layer.kind == "dense_softmax":
            if features is None or layer.in_channels != features or layer.out_channels != model.num_classes:
                raise CorruptModel(f"layer {layer.name}: dense head does not match pooled features")
            if idx != len(model.layers) - 1:
                raise CorruptModel("dense softmax head must be the last layer")
    if model.layers[-1].kind != "dense_softmax":
        raise CorruptModel("model must end with a dense softmax head")
    lc = model.last_conv_index
    if not 0 <= lc < len(model.layers) or model.layers[lc].kind not in CONV_KINDS + ("mbconv",):
        raise CorruptModel(f"last_conv_index {lc} does not point at a convolution")
    if gap_at is None or lc > gap_at:
        raise CorruptModel("tapped convolution must precede global average pooling")


def image_to_input(img: Raster) -> np.ndarray:
    """8-bit gray pixels scaled to [0, 1]."""
    if img.format is not PixelFormat.GRAY8:
        raise TypeError("model input must be GRAY8")
    return img.pixels.astype(np.float64) / 255.0


def forward_array(model: ModelBundle, x: np.ndarray, threads: int = DEFAULT_THREADS) -> ActivationOutput:
    """Run the layer chain on an (H, W) float input already scaled to [0, 1].

    ``threads`` only changes how convolution channels are scheduled; results
    are bit-identical for every value.
    """
    h, w, _ = model.input_dims
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (h, w):
        raise ShapeMismatch(f"model expects {w}x{h} input, got {x.shape[::-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    t = x[None]
    tapped = None
    probs = None
    for idx, layer in enumerate(model.layers):
        kind = layer.kind
        if kind in CONV_KINDS:
            t = convolve(t, model.tensor(layer, "w"), model.tensor(layer, "b"), layer.stride,
                         layer.padding, layer.groups, threads)
            t = ACTIVATIONS[layer.activation or "none"](t)
        elif kind == "mbconv":
            t = mbconv_block(t, *(model.tensor(layer, r) for r in _TENSOR_ROLES["mbconv"]),
                             stride=layer.stride, activation=layer.activation or "swish", threads=threads)
        elif kind == "global_avg_pool":
            t = global_avg_pool(t)
        elif kind == "dropout":
            pass  # identity at inference
        elif kind == "dense_softmax":
            probs = dense_softmax(t, model.tensor(layer, "w"), model.tensor(layer, "b"))
        if idx == model.last_conv_index:
            tapped = t
    return ActivationOutput(probs, tapped)


def forward(model: ModelBundle, img: Raster, threads: int = DEFAULT_THREADS) -> ActivationOutput:
    return forward_array(model, image_to_input(img), threads)


def build_micronet(num_maps: int, seed: int, input_size: int = 64, stem_channels: int = 8,
                   expand: int = 4) -> ModelBundle:
    """Small EfficientNet-style classifier with the covid/no-covid head.

    stem conv 3x3/2 (relu) -> MBConv(c -> c) -> MBConv(c -> 2c, stride 2)
    -> conv 1x1 producing ``num_maps`` activation maps (swish, tapped for CAM)
    -> global average pool -> dropout 0.3 -> dense softmax(2).
    """
    if num_maps < 1:
        raise ValueError("num_maps must be >= 1")
    if not 4 <= input_size <= 512:
        raise ValueError("input_size must lie in [4, 512]")
    rng = np.random.default_rng(seed)
    c1, c2 = stem_channels, 2 * stem_channels
    layers = [
        LayerSpec("conv", "stem", 1, c1, kernel=3, stride=2, padding=1, activation="relu",
                  tensors=("stem.w", "stem.b")),
        LayerSpec("mbconv", "block1", c1, c1, kernel=3, stride=1, expand=expand, activation="swish",
                  tensors=tuple(f"block1.{r}" for r in _TENSOR_ROLES["mbconv"])),
        LayerSpec("mbconv", "block2", c1, c2, kernel=3, stride=2, expand=expand, activation="swish",
                  tensors=tuple(f"block2.{r}" for r in _TENSOR_ROLES["mbconv"])),
        LayerSpec("conv", "top", c2, num_maps, kernel=1, stride=1, padding=0, activation="swish",
                  tensors=("top.w", "top.b")),
        LayerSpec("global_avg_pool", "gap"),
        LayerSpec("dropout", "dropout", rate=DROPOUT_RATE),
        LayerSpec("dense_softmax", "head", num_maps, 2, tensors=("head.w", "head.b")),
    ]
    tensors = {}
    for layer in layers:
        for role, shape in layer.expected_shapes().items():
            name = layer.tensors[_TENSOR_ROLES[layer.kind].index(role)]
            if role.endswith("b"):
                tensors[name] = rng.normal(0.0, 0.05, shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                tensors[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    return ModelBundle(tuple(layers), tensors, (input_size, input_size, 1), 2, last_conv_index=3)
