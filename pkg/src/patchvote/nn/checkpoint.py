"""Model checkpoint file: magic, JSON header, flat float32 weight blob.

Layout: 8-byte magic "MRNET001", uint32 little-endian header length, UTF-8
JSON header (layer kinds/shapes and per-tensor element offsets), then all
weight tensors raveled as little-endian IEEE-754 single precision.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .layers import LAYER_CLASSES
from .model import ModelParams

MAGIC = b"MRNET001"


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


def save_params(params: ModelParams, path) -> None:
    tensors = []
    blobs = []
    offset = 0
    for i, name, arr in params.weighted():
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        tensors.append({"layer": i, "name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(flat)
        offset += flat.size
    header = {
        "version": 1,
        "input": list(params.input_shape),
        "classes": params.classes,
        "layers": [layer.spec() for layer in params.layers],
        "tensors": tensors,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        for blob in blobs:
            f.write(blob.tobytes())


def _build_layer(spec: dict):
    kind = spec["kind"]
    cls = LAYER_CLASSES.get(kind)
    if cls is None:
        raise CheckpointError(f"unknown layer kind {kind!r}")
    if kind in ("sparse-conv", "conv"):
        kh, kw = spec["kernel"]
        w = np.zeros((kh, kw, spec["in"], spec["out"]), dtype=np.float32)
        b = np.zeros(spec["out"], dtype=np.float32)
        return cls(w, b)
    if kind == "dense":
        return cls(
            np.zeros((spec["in"], spec["out"]), dtype=np.float32),
            np.zeros(spec["out"], dtype=np.float32),
        )
    if kind == "maxpool":
        return cls(spec.get("size", 2))
    return cls()


def load_params(path) -> ModelParams:
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) + 4:
        raise CheckpointError(f"truncated checkpoint {path}: no header")
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad magic in {path}: {buf[:len(MAGIC)]!r}")
    (hlen,) = struct.unpack("<I", buf[len(MAGIC):len(MAGIC) + 4])
    hstart = len(MAGIC) + 4
    if len(buf) < hstart + hlen:
        raise CheckpointError(f"truncated checkpoint {path}: header incomplete")
    try:
        header = json.loads(buf[hstart:hstart + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable header in {path}: {e}") from e

    layers = [_build_layer(spec) for spec in header["layers"]]
    params = ModelParams(layers, tuple(header["input"]), header["classes"])

    blob = np.frombuffer(buf, dtype="<f4", offset=hstart + hlen)
    expected = sum(int(np.prod(t["shape"])) for t in header["tensors"])
    if blob.size != expected:
        raise CheckpointError(
            f"shape table mismatch in {path}: header declares {expected} weights, "
            f"blob holds {blob.size}"
        )
    for t in header["tensors"]:
        size = int(np.prod(t["shape"]))
        values = blob[t["offset"]:t["offset"] + size].reshape(t["shape"]).copy()
        layer = layers[t["layer"]]
        getattr(layer, t["name"])  # attribute must exist for this kind
        setattr(layer, t["name"], values)
    return params
