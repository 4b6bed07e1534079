"""Layer zoo with explicit forward/backward passes (numpy only).

Tensors are row-major numpy arrays; images are [batch, H, W, C]. All layers
support use in any float dtype, float32 by default.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Input shape does not match what the layer expects."""


class Layer:
    """Base layer: stateless unless it owns weights."""

    trainable = True

    def params(self) -> dict:
        return {}

    def set_params(self, values: dict) -> None:
        for name, arr in values.items():
            cur = self.params()[name]
            if cur.shape != tuple(arr.shape):
                raise ShapeError(
                    f"{type(self).__name__}.{name}: expected {cur.shape}, got {arr.shape}"
                )
            cur[...] = arr

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x, train: bool, rng) -> tuple:
        raise NotImplementedError

    def backward(self, cache, dy) -> tuple:
        """Return (dx, grads dict)."""
        raise NotImplementedError


def conv_output_hw(n: int, k: int, stride: int) -> int:
    if n < k:
        raise ShapeError(f"spatial size {n} smaller than kernel {k}")
    return (n - k) // stride + 1


class Conv2D(Layer):
    def __init__(self, in_channels, out_channels, kh, kw, stride=1, rng=None,
                 dtype=np.float32, trainable=True):
        self.kh, self.kw, self.stride = kh, kw, stride
        self.trainable = trainable
        fan_in = kh * kw * in_channels
        limit = np.sqrt(6.0 / fan_in)
        rng = rng or np.random.default_rng(0)
        self.w = rng.uniform(-limit, limit, (kh, kw, in_channels, out_channels)).astype(dtype)
        self.b = np.zeros(out_channels, dtype=dtype)

    def params(self):
        return {"W": self.w, "b": self.b}

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.w.shape[2]:
            raise ShapeError(f"conv2d expects {self.w.shape[2]} channels, got {c}")
        return (conv_output_hw(h, self.kh, self.stride),
                conv_output_hw(w, self.kw, self.stride),
                self.w.shape[3])

    def _patches(self, x):
        s = self.stride
        view = np.lib.stride_tricks.sliding_window_view(x, (self.kh, self.kw), axis=(1, 2))
        view = view[:, ::s, ::s]  # [B, OH, OW, C, KH, KW]
        return np.ascontiguousarray(view.transpose(0, 1, 2, 4, 5, 3))  # [B,OH,OW,KH,KW,C]

    def forward(self, x, train, rng):
        if x.ndim != 4 or x.shape[3] != self.w.shape[2]:
            raise ShapeError(f"conv2d expects [B,H,W,{self.w.shape[2]}], got {x.shape}")
        patches = self._patches(x)
        b_, oh, ow = patches.shape[:3]
        cols = patches.reshape(b_ * oh * ow, -1)
        wm = self.w.reshape(-1, self.w.shape[3])
        y = (cols @ wm + self.b).reshape(b_, oh, ow, -1)
        return y, (cols, x.shape, (oh, ow))

    def backward(self, cache, dy):
        cols, x_shape, (oh, ow) = cache
        b_, h, w, c = x_shape
        dym = dy.reshape(-1, dy.shape[3])
        wm = self.w.reshape(-1, self.w.shape[3])
        dcols = dym @ wm.T
        dpatches = dcols.reshape(b_, oh, ow, self.kh, self.kw, c)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        s = self.stride
        for ki in range(self.kh):
            for kj in range(self.kw):
                dx[:, ki:ki + s * oh:s, kj:kj + s * ow:s, :] += dpatches[:, :, :, ki, kj, :]
        grads = {}
        if self.trainable:
            grads["W"] = (cols.T @ dym).reshape(self.w.shape)
            grads["b"] = dym.sum(axis=0)
        return dx, grads


class MaxPool2D(Layer):
    def __init__(self, size=2):
        self.size = size

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < self.size or w < self.size:
            raise ShapeError(f"pool size {self.size} larger than input {h}x{w}")
        return (h // self.size, w // self.size, c)

    def forward(self, x, train, rng):
        p = self.size
        b_, h, w, c = x.shape
        oh, ow = h // p, w // p
        cropped = x[:, :oh * p, :ow * p, :]
        tiles = cropped.reshape(b_, oh, p, ow, p, c).transpose(0, 1, 3, 5, 2, 4)
        flat = tiles.reshape(b_, oh, ow, c, p * p)
        idx = flat.argmax(axis=4)
        y = np.take_along_axis(flat, idx[..., np.newaxis], axis=4)[..., 0]
        return y, (idx, x.shape)

    def backward(self, cache, dy):
        idx, x_shape = cache
        p = self.size
        b_, h, w, c = x_shape
        oh, ow = h // p, w // p
        dflat = np.zeros((b_, oh, ow, c, p * p), dtype=dy.dtype)
        np.put_along_axis(dflat, idx[..., np.newaxis], dy[..., np.newaxis], axis=4)
        dtiles = dflat.reshape(b_, oh, ow, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :oh * p, :ow * p, :] = dtiles.reshape(b_, oh * p, ow * p, c)
        return dx, {}


class Dropout(Layer):
    """Inverted dropout: kept activations scaled by 1/(1-rate) in train mode."""

    def __init__(self, rate):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def output_shape(self, input_shape):
        return input_shape

    def forward(self, x, train, rng):
        if not train or self.rate == 0:
            return x, None
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, cache, dy):
        if cache is None:
            return dy, {}
        return dy * cache, {}


class Flatten(Layer):
    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, train, rng):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dy):
        return dy.reshape(cache), {}


class Dense(Layer):
    def __init__(self, in_features, units, rng=None, dtype=np.float32, trainable=True):
        self.trainable = trainable
        limit = np.sqrt(6.0 / in_features)
        rng = rng or np.random.default_rng(0)
        self.w = rng.uniform(-limit, limit, (in_features, units)).astype(dtype)
        self.b = np.zeros(units, dtype=dtype)

    def params(self):
        return {"W": self.w, "b": self.b}

    def output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {input_shape}")
        if input_shape[0] != self.w.shape[0]:
            raise ShapeError(f"dense expects {self.w.shape[0]} features, got {input_shape[0]}")
        return (self.w.shape[1],)

    def forward(self, x, train, rng):
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"dense expects [B,{self.w.shape[0]}], got {x.shape}")
        return x @ self.w + self.b, x

    def backward(self, cache, dy):
        x = cache
        dx = dy @ self.w.T
        grads = {}
        if self.trainable:
            grads["W"] = x.T @ dy
            grads["b"] = dy.sum(axis=0)
        return dx, grads


class ReLU(Layer):
    def output_shape(self, input_shape):
        return input_shape

    def forward(self, x, train, rng):
        return np.maximum(x, 0), x > 0

    def backward(self, cache, dy):
        return dy * cache, {}


class Softmax(Layer):
    def output_shape(self, input_shape):
        return input_shape

    def forward(self, x, train, rng):
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=1, keepdims=True)
        return y, y

    def backward(self, cache, dy):
        y = cache
        dx = y * (dy - (dy * y).sum(axis=1, keepdims=True))
        return dx, {}
