"""Network container, shape tracing, and the "hrmnet-1" model file format."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DivergenceError, FormatError, GeometryError, IoError
from .layers import BatchNorm, Layer, layer_from_spec

MODEL_FORMAT = "hrmnet-1"


class Network:
    """An ordered layer stack with either a classification or regression head.

    ``head`` is ``"classify-K"`` (softmax over K classes) or ``"regress-1"``
    (single linear output, clamped at zero during inference).
    """

    def __init__(self, layers, input_shape, head, seed=0, dtype=np.float32, nan_guard=True):
        self.layers: list[Layer] = list(layers)
        self.input_shape = tuple(input_shape)
        self.head = head
        self.dtype = dtype
        self.nan_guard = nan_guard
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng, dtype)
        self.output_shape = shape

    # -- shape traces -------------------------------------------------------
    def full_trace(self):
        """(kind, output shape) for the input plus every layer."""
        rows = [("input", self.input_shape)]
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            rows.append((layer.kind, shape))
        return rows

    def table_trace(self):
        """Output shapes with batchnorm rows folded into the preceding layer,
        matching how fused Conv2D+BN stages are usually tabulated."""
        rows = [self.input_shape]
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            if layer.kind == "batchnorm":
                continue
            rows.append(shape)
        return rows

    # -- passes -------------------------------------------------------------
    def forward(self, x, training=False):
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise GeometryError(
                f"expected input shape (n, {', '.join(map(str, self.input_shape))}), "
                f"got {x.shape}"
            )
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, training=training)
            if self.nan_guard and not np.isfinite(x).all():
                raise DivergenceError(f"non-finite activations after layer {i} ({layer.kind})")
        return x

    def backward(self, dout, dout_is_preactivation=False):
        """Backpropagate; set ``dout_is_preactivation`` when the loss gradient
        is already taken with respect to the final layer's pre-activation."""
        for i, layer in enumerate(reversed(self.layers)):
            if i == 0 and dout_is_preactivation:
                dout = layer.backward(dout, dout_is_preactivation=True)
            else:
                dout = layer.backward(dout)
        return dout

    # -- parameter access ---------------------------------------------------
    def parameters(self):
        for li, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield li, name

    def param_arrays(self):
        return [self.layers[li].params[name] for li, name in self.parameters()]

    def grad_arrays(self):
        return [self.layers[li].grads[name] for li, name in self.parameters()]

    def n_params(self) -> int:
        return int(sum(a.size for a in self.param_arrays()))

    def get_state(self):
        """Deep copy of all parameters and buffers (checkpointing)."""
        state = []
        for layer in self.layers:
            params = {k: v.copy() for k, v in layer.params.items()}
            buffers = {
                k: (v.copy() if isinstance(v, np.ndarray) else v)
                for k, v in layer.buffers.items()
            }
            state.append((params, buffers))
        return state

    def set_state(self, state):
        for layer, (params, buffers) in zip(self.layers, state):
            for k, v in params.items():
                layer.params[k] = v.copy()
            for k, v in buffers.items():
                layer.buffers[k] = v.copy() if isinstance(v, np.ndarray) else v

    def astype(self, dtype):
        self.dtype = dtype
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def specs(self):
        return [layer.spec() for layer in self.layers]


# ---------------------------------------------------------------------------
# Model file: 4-byte little-endian header length, JSON header, float32 blobs
# ---------------------------------------------------------------------------


def save_network(net: Network, path, train_config=None, metrics=None) -> Path:
    """Serialize to the versioned model format; round trips are bit-exact
    for float32 weights."""
    path = Path(path)
    entries = []
    blobs = []
    offset = 0

    def _push(kind, index, name, arr):
        nonlocal offset
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        entries.append(
            {
                "layer": index,
                "name": name,
                "kind": kind,
                "shape": list(arr.shape),
                "offset": offset,
                "size": int(arr32.size),
            }
        )
        blobs.append(arr32.tobytes())
        offset += arr32.size

    bn_flags = []
    for li, layer in enumerate(net.layers):
        for name in sorted(layer.params):
            _push("param", li, name, layer.params[name])
        for name in sorted(layer.buffers):
            buf = layer.buffers[name]
            if isinstance(buf, np.ndarray):
                _push("buffer", li, name, buf)
        if isinstance(layer, BatchNorm):
            bn_flags.append({"layer": li, "initialized": bool(layer.buffers["initialized"])})

    header = {
        "format": MODEL_FORMAT,
        "head": net.head,
        "input_shape": list(net.input_shape),
        "layers": net.specs(),
        "weights": entries,
        "batchnorm_state": bn_flags,
        "train_config": train_config,
        "metrics": metrics,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(header_bytes)))
            fh.write(header_bytes)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc
    return path


def load_network(path) -> Network:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc
    if len(data) < 4:
        raise FormatError(f"{path} is too short to be a model file")
    (header_len,) = struct.unpack("<I", data[:4])
    try:
        header = json.loads(data[4 : 4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt model header in {path}") from exc
    if header.get("format") != MODEL_FORMAT:
        raise FormatError(f"unsupported model format {header.get('format')!r}")

    layers = [layer_from_spec(spec) for spec in header["layers"]]
    net = Network(layers, header["input_shape"], header["head"], seed=0)
    blob = data[4 + header_len :]
    expected = sum(e["size"] for e in header["weights"]) * 4
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} weight bytes, got {len(blob)}")
    for entry in header["weights"]:
        start = entry["offset"] * 4
        arr = np.frombuffer(blob, dtype="<f4", count=entry["size"], offset=start).reshape(
            entry["shape"]
        )
        layer = net.layers[entry["layer"]]
        if entry["kind"] == "param":
            layer.params[entry["name"]] = arr.copy()
        else:
            layer.buffers[entry["name"]] = arr.copy()
    for flag in header.get("batchnorm_state", []):
        net.layers[flag["layer"]].buffers["initialized"] = bool(flag["initialized"])
    net.loaded_train_config = header.get("train_config")
    net.loaded_metrics = header.get("metrics")
    return net
