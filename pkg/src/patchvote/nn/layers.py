"""Network layers with forward passes and hand-derived backward passes.

All convolutions are 3x3-style "same" zero-padded, stride 1.  Layers are
stateless apart from their weights: forward returns (output, cache) and
backward consumes the cache, so evaluation against shared weights is safe
from concurrent callers.
"""

from __future__ import annotations

import numpy as np

SPARSE_EPS = 1e-8


def _im2col(x: np.ndarray, kh: int, kw: int, pad_value: float = 0.0) -> np.ndarray:
    """[B,H,W,C] -> [B,H,W,kh*kw*C] patch matrix of the padded input."""
    b, h, w, c = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)), constant_values=pad_value)
    cols = np.empty((b, h, w, kh * kw * c), dtype=x.dtype)
    k = 0
    for u in range(kh):
        for v in range(kw):
            cols[..., k * c:(k + 1) * c] = xp[:, u:u + h, v:v + w, :]
            k += 1
    return cols


def _col2im(dcols: np.ndarray, x_shape: tuple, kh: int, kw: int) -> np.ndarray:
    """Scatter-add adjoint of _im2col (fixed accumulation order over (u, v))."""
    b, h, w, c = x_shape
    ph, pw = kh // 2, kw // 2
    dxp = np.zeros((b, h + 2 * ph, w + 2 * pw, c), dtype=dcols.dtype)
    k = 0
    for u in range(kh):
        for v in range(kw):
            dxp[:, u:u + h, v:v + w, :] += dcols[..., k * c:(k + 1) * c]
            k += 1
    return dxp[:, ph:ph + h, pw:pw + w, :]


class Conv:
    """Standard same-padded convolution, weights [kh, kw, cin, cout]."""

    kind = "conv"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w
        self.b = b

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def spec(self) -> dict:
        kh, kw, cin, cout = self.w.shape
        return {"kind": self.kind, "kernel": [kh, kw], "in": cin, "out": cout}

    def forward(self, x, mask=None):
        kh, kw, cin, cout = self.w.shape
        cols = _im2col(x, kh, kw)
        y = cols.reshape(-1, kh * kw * cin) @ self.w.reshape(-1, cout)
        y = y.reshape(x.shape[:3] + (cout,)) + self.b
        return y, (x.shape, cols)

    def backward(self, dy, cache, need_param_grads=True):
        x_shape, cols = cache
        kh, kw, cin, cout = self.w.shape
        dyf = dy.reshape(-1, cout)
        grads = None
        if need_param_grads:
            dw = cols.reshape(-1, kh * kw * cin).T @ dyf
            grads = {"w": dw.reshape(self.w.shape), "b": dy.sum(axis=(0, 1, 2))}
        dcols = (dyf @ self.w.reshape(-1, cout).T).reshape(dy.shape[:3] + (kh * kw * cin,))
        return _col2im(dcols, x_shape, kh, kw), grads


class SparseConv(Conv):
    """Convolution over masked input, renormalized by visible-pixel count.

    out = (w * (x . mask)) * kn / (sum(mask over window) + eps) + b, where kn
    is the kernel pixel count.  The mask is padded with ones, so out-of-image
    area never counts as occluded and an all-ones mask reduces the layer to a
    standard convolution exactly.
    """

    kind = "sparse-conv"

    def forward(self, x, mask=None):
        if mask is None:
            raise ValueError("sparse-conv requires a mask input")
        if mask.shape != x.shape[:3]:
            raise ValueError(f"shape mismatch: input {x.shape} vs mask {mask.shape}")
        kh, kw, cin, cout = self.w.shape
        xm = x * mask[..., None]
        cols = _im2col(xm, kh, kw)
        mcols = _im2col(mask[..., None].astype(x.dtype), kh, kw, pad_value=1.0)
        scale = (kh * kw) / (mcols.sum(axis=-1) + np.asarray(SPARSE_EPS, dtype=x.dtype))
        s = cols.reshape(-1, kh * kw * cin) @ self.w.reshape(-1, cout)
        y = s.reshape(x.shape[:3] + (cout,)) * scale[..., None] + self.b
        return y, (x.shape, cols, scale, mask)

    def backward(self, dy, cache, need_param_grads=True):
        x_shape, cols, scale, mask = cache
        kh, kw, cin, cout = self.w.shape
        dys = (dy * scale[..., None]).reshape(-1, cout)
        grads = None
        if need_param_grads:
            dw = cols.reshape(-1, kh * kw * cin).T @ dys
            grads = {"w": dw.reshape(self.w.shape), "b": dy.sum(axis=(0, 1, 2))}
        dcols = (dys @ self.w.reshape(-1, cout).T).reshape(dy.shape[:3] + (kh * kw * cin,))
        dxm = _col2im(dcols, x_shape, kh, kw)
        return dxm * mask[..., None], grads


class ReLU:
    kind = "relu"

    def params(self):
        return {}

    def spec(self):
        return {"kind": self.kind}

    def forward(self, x, mask=None):
        return np.maximum(x, 0), x > 0

    def backward(self, dy, cache, need_param_grads=True):
        return dy * cache, None


class MaxPool:
    """Non-overlapping max pooling; ties route the gradient to the first max."""

    kind = "maxpool"

    def __init__(self, size: int = 2):
        self.size = size

    def params(self):
        return {}

    def spec(self):
        return {"kind": self.kind, "size": self.size}

    def forward(self, x, mask=None):
        b, h, w, c = x.shape
        s = self.size
        if h % s or w % s:
            raise ValueError(f"maxpool size {s} does not divide spatial dims {h}x{w}")
        xr = x.reshape(b, h // s, s, w // s, s, c)
        xr = xr.transpose(0, 1, 3, 5, 2, 4).reshape(b, h // s, w // s, c, s * s)
        idx = xr.argmax(axis=-1)
        y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, dy, cache, need_param_grads=True):
        x_shape, idx = cache
        b, h, w, c = x_shape
        s = self.size
        dxr = np.zeros((b, h // s, w // s, c, s * s), dtype=dy.dtype)
        np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
        dxr = dxr.reshape(b, h // s, w // s, c, s, s).transpose(0, 1, 4, 2, 5, 3)
        return dxr.reshape(x_shape), None


class Flatten:
    kind = "flatten"

    def params(self):
        return {}

    def spec(self):
        return {"kind": self.kind}

    def forward(self, x, mask=None):
        return x.reshape(len(x), -1), x.shape

    def backward(self, dy, cache, need_param_grads=True):
        return dy.reshape(cache), None


class Dense:
    kind = "dense"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w
        self.b = b

    def params(self):
        return {"w": self.w, "b": self.b}

    def spec(self):
        din, dout = self.w.shape
        return {"kind": self.kind, "in": din, "out": dout}

    def forward(self, x, mask=None):
        return x @ self.w + self.b, x

    def backward(self, dy, cache, need_param_grads=True):
        grads = None
        if need_param_grads:
            grads = {"w": cache.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.w.T, grads


class Softmax:
    kind = "softmax"

    def params(self):
        return {}

    def spec(self):
        return {"kind": self.kind}

    def forward(self, x, mask=None):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=-1, keepdims=True)
        return p, p

    def backward(self, dy, cache, need_param_grads=True):
        p = cache
        return p * (dy - (dy * p).sum(axis=-1, keepdims=True)), None


LAYER_CLASSES = {cls.kind: cls for cls in (SparseConv, Conv, ReLU, MaxPool, Flatten, Dense, Softmax)}
WEIGHTED_KINDS = ("sparse-conv", "conv", "dense")
