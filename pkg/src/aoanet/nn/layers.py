"""Layers with hand-written forward and backward passes.

Tensors are channels-last: dense inputs are ``(B, F)``, image inputs
``(B, H, W, C)``. Every layer caches what its backward pass needs during
``forward``; calling ``backward`` without a matching forward raises.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import AoAError, ConfigurationError


class StaleCacheError(AoAError, RuntimeError):
    """backward() called without a matching forward()."""


class Layer:
    trainable = False

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _pop_cache(self):
        if self._cache is None:
            raise StaleCacheError(f"{type(self).__name__}.backward called without forward")
        cache, self._cache = self._cache, None
        return cache

    def output_shape(self, input_shape):
        return input_shape

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that must be checkpointed."""
        return {}

    def astype(self, dtype):
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
        for k, v in self.buffers().items():
            setattr(self, k, v.astype(dtype))
        return self


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    """Uniform on ``+-sqrt(6 / (fan_in + fan_out))``."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense(Layer):
    trainable = True

    def __init__(self, in_features, units, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.in_features, self.units = in_features, units
        self.params["W"] = glorot_uniform(rng, (in_features, units), in_features, units, dtype)
        self.params["b"] = np.zeros(units, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigurationError(f"Dense expects (B, {self.in_features}), got {x.shape}")
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        x = self._pop_cache()
        self.grads["W"] = x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T

    def output_shape(self, input_shape):
        return (input_shape[0], self.units)


class ReLU(Layer):
    def forward(self, x, training=False, rng=None):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad):
        return grad * self._pop_cache()


class Sigmoid(Layer):
    def forward(self, x, training=False, rng=None):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._cache = out
        return out

    def backward(self, grad):
        y = self._pop_cache()
        return grad * y * (1.0 - y)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` in training."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._cache = np.ones((), dtype=x.dtype)
            return x
        if rng is None:
            raise ConfigurationError("training-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.rate
        mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, grad):
        return grad * self._pop_cache()


class Flatten(Layer):
    def forward(self, x, training=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._pop_cache())

    def output_shape(self, input_shape):
        return (input_shape[0], int(np.prod(input_shape[1:])))


class Conv2D(Layer):
    """Valid-padding, stride-1 2D convolution (cross-correlation) via im2col."""

    trainable = True

    def __init__(self, in_channels, filters, kernel=3, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.kh = self.kw = kernel
        self.in_channels, self.filters = in_channels, filters
        self.params["W"] = glorot_uniform(rng, (kernel, kernel, in_channels, filters),
                                          kernel * kernel * in_channels, kernel * kernel * filters, dtype)
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False, rng=None):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ConfigurationError(f"Conv2D expects (B, H, W, {self.in_channels}), got {x.shape}")
        B, H, W, C = x.shape
        ho, wo = H - self.kh + 1, W - self.kw + 1
        if ho < 1 or wo < 1:
            raise ConfigurationError("input smaller than kernel")
        # (B, ho, wo, C, kh, kw) -> (B, ho, wo, kh, kw, C)
        win = sliding_window_view(x, (self.kh, self.kw), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = win.reshape(B * ho * wo, self.kh * self.kw * C)
        Wm = self.params["W"].reshape(-1, self.filters)
        self._cache = (x.shape, cols)
        return (cols @ Wm + self.params["b"]).reshape(B, ho, wo, self.filters)

    def backward(self, grad):
        xshape, cols = self._pop_cache()
        B, H, W, C = xshape
        ho, wo = H - self.kh + 1, W - self.kw + 1
        g = grad.reshape(-1, self.filters)
        self.grads["W"] = (cols.T @ g).reshape(self.params["W"].shape)
        self.grads["b"] = g.sum(axis=0)
        dcols = (g @ self.params["W"].reshape(-1, self.filters).T).reshape(B, ho, wo, self.kh, self.kw, C)
        dx = np.zeros(xshape, dtype=grad.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dx[:, i:i + ho, j:j + wo, :] += dcols[:, :, :, i, j, :]
        return dx

    def output_shape(self, input_shape):
        B, H, W, _ = input_shape
        return (B, H - self.kh + 1, W - self.kw + 1, self.filters)


class BatchNorm(Layer):
    """Batch normalization over every axis but the last (channels).

    Training uses batch statistics and updates the running estimates with
    ``momentum``; evaluation uses the running estimates.
    """

    trainable = True

    def __init__(self, features, momentum=0.99, eps=1e-3, dtype=np.float32):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(features, dtype=dtype)
        self.params["beta"] = np.zeros(features, dtype=dtype)
        self.running_mean = np.zeros(features, dtype=dtype)
        self.running_var = np.ones(features, dtype=dtype)

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False, rng=None):
        axes = tuple(range(x.ndim - 1))
        if training:
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1 - m) * mu).astype(self.running_mean.dtype)
            self.running_var = (m * self.running_var + (1 - m) * var).astype(self.running_var.dtype)
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv, training, axes)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, grad):
        xhat, inv, training, axes = self._pop_cache()
        self.grads["gamma"] = (grad * xhat).sum(axis=axes)
        self.grads["beta"] = grad.sum(axis=axes)
        g = grad * self.params["gamma"]
        if not training:
            return g * inv
        n = np.prod([xhat.shape[a] for a in axes])
        return inv / n * (n * g - g.sum(axis=axes) - xhat * (g * xhat).sum(axis=axes))


class MaxPool2D(Layer):
    """Non-overlapping max pooling; ties route the gradient to the first maximum."""

    def __init__(self, pool=2):
        super().__init__()
        self.pool = pool

    def forward(self, x, training=False, rng=None):
        B, H, W, C = x.shape
        p = self.pool
        if H % p or W % p:
            raise ConfigurationError(f"spatial size {(H, W)} not divisible by pool {p}")
        ho, wo = H // p, W // p
        blocks = x.reshape(B, ho, p, wo, p, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, ho, wo, C, p * p)
        idx = blocks.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        xshape, idx = self._pop_cache()
        B, H, W, C = xshape
        p = self.pool
        ho, wo = H // p, W // p
        blocks = np.zeros((B, ho, wo, C, p * p), dtype=grad.dtype)
        np.put_along_axis(blocks, idx[..., None], grad[..., None], axis=-1)
        return blocks.reshape(B, ho, wo, C, p, p).transpose(0, 1, 4, 2, 5, 3).reshape(xshape)

    def output_shape(self, input_shape):
        B, H, W, C = input_shape
        return (B, H // self.pool, W // self.pool, C)
