"""Binary model bundle format.

Layout (all integers little-endian)::

    b"CVCT"                    magic
    u32 version                currently 1
    u32 manifest_length
    manifest                   UTF-8 JSON, canonical (sorted keys, compact)
    tensor blobs               float32 LE, row-major, in manifest "tensors" order

The manifest holds ``input_dims``, ``num_classes``, ``last_conv_index``, the
ordered ``layers`` records and the ``tensors`` list of ``{name, shape}``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from covct.errors import CorruptModel
from covct.nn.model import LayerSpec, ModelBundle

MAGIC = b"CVCT"
VERSION = 1
_HEADER = struct.Struct("<4sII")


def _manifest(bundle: ModelBundle) -> dict:
    names = []
    for layer in bundle.layers:
        for name in layer.tensors:
            if name not in names:
                names.append(name)
    for name in sorted(bundle.tensors):
        if name not in names:
            names.append(name)
    return {
        "input_dims": list(bundle.input_dims),
        "num_classes": bundle.num_classes,
        "last_conv_index": bundle.last_conv_index,
        "layers": [layer.to_record() for layer in bundle.layers],
        "tensors": [{"name": n, "shape": list(bundle.tensors[n].shape)} for n in names],
    }


def dumps(bundle: ModelBundle) -> bytes:
    manifest = _manifest(bundle)
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_HEADER.pack(MAGIC, VERSION, len(text)), text]
    for entry in manifest["tensors"]:
        parts.append(np.ascontiguousarray(bundle.tensors[entry["name"]], dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> ModelBundle:
    if len(data) < _HEADER.size:
        raise CorruptModel("stream shorter than the header")
    magic, version, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptModel(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptModel(f"unsupported format version {version}")
    body = _HEADER.size + mlen
    if len(data) < body:
        raise CorruptModel("truncated manifest")
    try:
        manifest = json.loads(data[_HEADER.size:body].decode("utf-8"))
        entries = [(e["name"], tuple(int(d) for d in e["shape"])) for e in manifest["tensors"]]
        layers = tuple(LayerSpec.from_record(r) for r in manifest["layers"])
        input_dims = tuple(manifest["input_dims"])
        num_classes = int(manifest["num_classes"])
        last_conv = int(manifest["last_conv_index"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CorruptModel(f"malformed manifest: {exc}") from exc

    tensors = {}
    offset = body
    for name, shape in entries:
        if name in tensors:
            raise CorruptModel(f"duplicate tensor {name!r}")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(data):
            raise CorruptModel(f"truncated blob for tensor {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise CorruptModel(f"{len(data) - offset} trailing bytes after the last tensor")
    for name, arr in tensors.items():
        if not np.all(np.isfinite(arr)):
            raise CorruptModel(f"tensor {name!r} has non-finite values")
    return ModelBundle(layers, tensors, input_dims, num_classes, last_conv)


def save(bundle: ModelBundle, path) -> None:
    Path(path).write_bytes(dumps(bundle))


def load(path) -> ModelBundle:
    return loads(Path(path).read_bytes())
