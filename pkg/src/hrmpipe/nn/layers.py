"""Network layers with exact forward/backward passes in plain numpy.

Conventions: activations are NHWC (batch, height, width, channels) for
spatial layers and (batch, features) for dense layers; convolutions and
pooling use valid padding with floor-division output extents.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigError, GeometryError, UninitializedStatistics

ACTIVATIONS = ("relu", "linear", "softmax")


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _init_weights(rng, shape, fan_in, fan_out, activation, weight_init, dtype):
    scheme = weight_init or ("he" if activation == "relu" else "glorot")
    if scheme == "he":
        return _he_uniform(rng, shape, fan_in, dtype)
    return _glorot_uniform(rng, shape, fan_in, fan_out, dtype)


def _stable_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _conv_windows(x, kh, kw, sh, sw, oh, ow):
    n, _, _, c = x.shape
    sn, s_h, s_w, sc = x.strides
    shape = (n, oh, ow, kh, kw, c)
    strides = (sn, s_h * sh, s_w * sw, s_h, s_w, sc)
    return as_strided(x, shape=shape, strides=strides)


class Layer:
    """Base layer: subclasses fill params/grads and the two passes."""

    kind = "?"
    activation = "linear"

    def __init__(self):
        self.params: dict = {}
        self.grads: dict = {}
        self.buffers: dict = {}
        self.in_shape = None
        self.dtype = np.float32

    def out_shape(self, in_shape):
        raise NotImplementedError

    def build(self, in_shape, rng, dtype):
        self.in_shape = tuple(in_shape)
        self.dtype = dtype
        return self.out_shape(in_shape)

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def _activate(self, z):
        if self.activation == "relu":
            self._z = z
            return np.maximum(z, 0.0)
        if self.activation == "softmax":
            self._p = _stable_softmax(z)
            return self._p
        return z

    def _activation_backward(self, dout):
        if self.activation == "relu":
            return dout * (self._z > 0)
        if self.activation == "softmax":
            p = self._p
            return p * (dout - (dout * p).sum(axis=-1, keepdims=True))
        return dout

    def spec(self) -> dict:
        return {"kind": self.kind}

    def astype(self, dtype):
        self.dtype = dtype
        for name in self.params:
            self.params[name] = self.params[name].astype(dtype)
        for name, buf in self.buffers.items():
            if isinstance(buf, np.ndarray):
                self.buffers[name] = buf.astype(dtype)


class Conv2D(Layer):
    """Valid-padding cross-correlation with bias."""

    kind = "conv2d"

    def __init__(self, out_channels, kernel, stride=(1, 1), activation="linear",
                 weight_init=None):
        super().__init__()
        if activation == "softmax":
            raise ConfigError("softmax activation is only supported on dense layers")
        self.out_channels = int(out_channels)
        self.kernel = tuple(int(k) for k in kernel)
        self.stride = tuple(int(s) for s in stride)
        self.activation = activation
        self.weight_init = weight_init
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise ConfigError("kernel and stride extents must be >= 1")

    def out_shape(self, in_shape):
        h, w, _ = in_shape
        kh, kw = self.kernel
        sh, sw = self.stride
        if kh > h or kw > w:
            raise GeometryError(f"kernel {self.kernel} larger than input {in_shape[:2]}")
        return ((h - kh) // sh + 1, (w - kw) // sw + 1, self.out_channels)

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        kh, kw = self.kernel
        cin = in_shape[2]
        fan_in = kh * kw * cin
        fan_out = kh * kw * self.out_channels
        self.params["W"] = _init_weights(
            rng, (kh, kw, cin, self.out_channels), fan_in, fan_out,
            self.activation, self.weight_init, dtype,
        )
        self.params["b"] = np.zeros(self.out_channels, dtype=dtype)
        return out

    def forward(self, x, training=False):
        kh, kw = self.kernel
        sh, sw = self.stride
        oh, ow, _ = self.out_shape(x.shape[1:])
        n, _, _, cin = x.shape
        cols = _conv_windows(x, kh, kw, sh, sw, oh, ow).reshape(n * oh * ow, kh * kw * cin)
        w2 = self.params["W"].reshape(kh * kw * cin, self.out_channels)
        z = (cols @ w2 + self.params["b"]).reshape(n, oh, ow, self.out_channels)
        self._cols = cols
        self._x_shape = x.shape
        return self._activate(z)

    def backward(self, dout):
        dz = self._activation_backward(dout)
        n, oh, ow, f = dz.shape
        kh, kw = self.kernel
        sh, sw = self.stride
        cin = self._x_shape[3]
        dflat = dz.reshape(n * oh * ow, f)
        self.grads["W"] = (self._cols.T @ dflat).reshape(self.params["W"].shape)
        self.grads["b"] = dflat.sum(axis=0)
        dcols = (dflat @ self.params["W"].reshape(kh * kw * cin, f).T).reshape(
            n, oh, ow, kh, kw, cin
        )
        dx = np.zeros(self._x_shape, dtype=dz.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, i : i + oh * sh : sh, j : j + ow * sw : sw, :] += dcols[:, :, :, i, j, :]
        return dx

    def spec(self):
        return {
            "kind": self.kind,
            "out_channels": self.out_channels,
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "activation": self.activation,
            "weight_init": self.weight_init,
        }


class BatchNorm(Layer):
    """Per-channel batch normalization (last axis), with running statistics.

    eps is kept small (1e-6) so an already-standardized batch passes through
    essentially unchanged.
    """

    kind = "batchnorm"
    EPS = 1e-6
    MOMENTUM = 0.9

    def __init__(self, activation="linear"):
        super().__init__()
        if activation == "softmax":
            raise ConfigError("softmax activation is only supported on dense layers")
        self.activation = activation

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        c = in_shape[-1]
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)
        self.buffers["initialized"] = False
        return out

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.MOMENTUM
            self.buffers["running_mean"] = (
                m * self.buffers["running_mean"] + (1 - m) * mean
            ).astype(self.dtype)
            self.buffers["running_var"] = (
                m * self.buffers["running_var"] + (1 - m) * var
            ).astype(self.dtype)
            self.buffers["initialized"] = True
        else:
            if not self.buffers["initialized"]:
                raise UninitializedStatistics(
                    "batchnorm inference requested before any training batch"
                )
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.EPS)
        xhat = (x - mean) * inv_std
        z = self.params["gamma"] * xhat + self.params["beta"]
        if training:
            self._xhat = xhat
            self._inv_std = inv_std
            self._axes = axes
        return self._activate(z)

    def backward(self, dout):
        dz = self._activation_backward(dout)
        axes = self._axes
        xhat = self._xhat
        m = np.prod([dz.shape[a] for a in axes])
        self.grads["gamma"] = (dz * xhat).sum(axis=axes)
        self.grads["beta"] = dz.sum(axis=axes)
        dxhat = dz * self.params["gamma"]
        dx = (
            dxhat
            - dxhat.mean(axis=axes, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True)
        ) * self._inv_std
        return dx

    def spec(self):
        return {"kind": self.kind, "activation": self.activation}


class MaxPool2D(Layer):
    """Max pooling; the backward pass routes gradient to the first-found
    maximum of each window (row-major within the window)."""

    kind = "maxpool"

    def __init__(self, pool, stride=None):
        super().__init__()
        self.pool = tuple(int(p) for p in pool)
        self.stride = tuple(int(s) for s in (stride or pool))
        if min(self.pool) < 1 or min(self.stride) < 1:
            raise ConfigError("pool and stride extents must be >= 1")

    def out_shape(self, in_shape):
        h, w, c = in_shape
        ph, pw = self.pool
        sh, sw = self.stride
        if ph > h or pw > w:
            raise GeometryError(f"pool {self.pool} larger than input {in_shape[:2]}")
        return ((h - ph) // sh + 1, (w - pw) // sw + 1, c)

    def forward(self, x, training=False):
        ph, pw = self.pool
        sh, sw = self.stride
        oh, ow, c = self.out_shape(x.shape[1:])
        n = x.shape[0]
        windows = _conv_windows(x, ph, pw, sh, sw, oh, ow)
        flat = windows.reshape(n, oh, ow, ph * pw, c)
        self._argmax = flat.argmax(axis=3)  # first occurrence on ties
        self._x_shape = x.shape
        return flat.max(axis=3)

    def backward(self, dout):
        n, oh, ow, c = dout.shape
        ph, pw = self.pool
        sh, sw = self.stride
        _, h, w, _ = self._x_shape
        arg = self._argmax
        rel_h = arg // pw
        rel_w = arg % pw
        ni, ohi, owi, ci = np.ix_(np.arange(n), np.arange(oh), np.arange(ow), np.arange(c))
        ih = ohi * sh + rel_h
        iw = owi * sw + rel_w
        flat_idx = (((ni * h) + ih) * w + iw) * c + ci
        dx = np.zeros(n * h * w * c, dtype=dout.dtype)
        np.add.at(dx, flat_idx.ravel(), dout.ravel())
        return dx.reshape(self._x_shape)

    def spec(self):
        return {"kind": self.kind, "pool": list(self.pool), "stride": list(self.stride)}


class GlobalAvgPool(Layer):
    """Spatial mean over (height, width), yielding one value per channel."""

    kind = "globalavgpool"

    def out_shape(self, in_shape):
        return (in_shape[2],)

    def forward(self, x, training=False):
        self._x_shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout):
        _, h, w, _ = self._x_shape
        return np.broadcast_to(
            dout[:, None, None, :] / (h * w), self._x_shape
        ).astype(dout.dtype).copy()


class Dense(Layer):
    """Fully connected layer with relu, linear, or softmax activation."""

    kind = "dense"

    def __init__(self, units, activation="linear", weight_init=None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.units = int(units)
        self.activation = activation
        self.weight_init = weight_init

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise GeometryError(f"dense layer expects flat input, got shape {in_shape}")
        return (self.units,)

    def build(self, in_shape, rng, dtype):
        out = super().build(in_shape, rng, dtype)
        d = in_shape[0]
        self.params["W"] = _init_weights(
            rng, (d, self.units), d, self.units, self.activation, self.weight_init, dtype
        )
        self.params["b"] = np.zeros(self.units, dtype=dtype)
        return out

    def forward(self, x, training=False):
        if x.ndim != 2:
            raise GeometryError(f"dense layer expects 2-d batches, got {x.shape}")
        self._x = x
        z = x @ self.params["W"] + self.params["b"]
        return self._activate(z)

    def backward(self, dout, dout_is_preactivation=False):
        # losses fused with softmax hand back the gradient w.r.t. logits
        dz = dout if dout_is_preactivation else self._activation_backward(dout)
        self.grads["W"] = self._x.T @ dz
        self.grads["b"] = dz.sum(axis=0)
        return dz @ self.params["W"].T

    def spec(self):
        return {
            "kind": self.kind,
            "units": self.units,
            "activation": self.activation,
            "weight_init": self.weight_init,
        }


class Flatten(Layer):
    """Collapse all non-batch axes; a no-op on already-flat input."""

    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False):
        self._x_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._x_shape)


LAYER_KINDS = {
    cls.kind: cls for cls in (Conv2D, BatchNorm, MaxPool2D, GlobalAvgPool, Dense, Flatten)
}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec.get("kind")
    if kind == "conv2d":
        return Conv2D(
            spec["out_channels"], spec["kernel"], spec["stride"],
            spec.get("activation", "linear"), spec.get("weight_init"),
        )
    if kind == "batchnorm":
        return BatchNorm(spec.get("activation", "linear"))
    if kind == "maxpool":
        return MaxPool2D(spec["pool"], spec["stride"])
    if kind == "globalavgpool":
        return GlobalAvgPool()
    if kind == "dense":
        return Dense(spec["units"], spec.get("activation", "linear"), spec.get("weight_init"))
    if kind == "flatten":
        return Flatten()
    raise ConfigError(f"unknown layer kind {kind!r}")
