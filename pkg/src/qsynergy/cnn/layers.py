"""Layers with hand-written backward passes.

Activations are channels-last: ``(batch, *spatial, channels)``. Convolutions
work for any number of spatial axes and use zero "same" padding, so the
spatial extent never changes and any input size is accepted.
"""

from __future__ import annotations

import itertools

import numpy as np


class Layer:
    params: dict[str, np.ndarray]

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Return (gradient w.r.t. the input, gradients w.r.t. params)."""
        raise NotImplementedError

    def release(self) -> None:
        """Drop the activations cached for backward (private ``_`` attributes)."""
        for name in vars(self):
            if name.startswith("_"):
                setattr(self, name, None)


class Conv(Layer):
    """Stride-1 convolution with odd kernel extent on every spatial axis.

    Weight layout: ``(*kernel, c_in, c_out)``. With ``input_grad=False`` the
    backward pass skips the input gradient (useful for the first layer).
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray, input_grad: bool = True):
        if any(k % 2 == 0 for k in weight.shape[:-2]):
            raise ValueError("kernel extents must be odd for same padding")
        self.params = {"weight": weight, "bias": bias}
        self.input_grad = input_grad
        self._cache = None

    @property
    def kernel(self) -> tuple[int, ...]:
        return self.params["weight"].shape[:-2]

    def _windows(self, spatial):
        """For each kernel offset: (slices into the input, slices into the output).

        Output position ``i`` reads input ``i + o - k//2``; positions falling in
        the zero padding are simply left out.
        """
        out = []
        for off in itertools.product(*(range(k) for k in self.kernel)):
            src, dst = [slice(None)], [slice(None)]
            for o, k, s in zip(off, self.kernel, spatial):
                d = o - k // 2
                src.append(slice(max(d, 0), s + min(d, 0)))
                dst.append(slice(max(-d, 0), s - max(d, 0)))
            out.append((tuple(src), tuple(dst)))
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        w, b = self.params["weight"], self.params["bias"]
        c_in, c_out = w.shape[-2:]
        if x.shape[-1] != c_in:
            raise ValueError(f"expected {c_in} input channels, got {x.shape[-1]}")
        spatial = x.shape[1:-1]
        if len(spatial) != len(self.kernel):
            raise ValueError(f"expected {len(self.kernel)} spatial axes, got {len(spatial)}")
        windows = self._windows(spatial)
        cols = np.zeros(x.shape[:-1] + (len(windows), c_in))
        for i, (src, dst) in enumerate(windows):
            cols[dst + (i,)] = x[src]
        cols = cols.reshape(-1, len(windows) * c_in)
        y = cols @ w.reshape(-1, c_out)
        y += b
        self._cache = (cols, x.shape, windows)
        return y.reshape(x.shape[:-1] + (c_out,))

    def backward(self, dy: np.ndarray):
        w = self.params["weight"]
        c_in, c_out = w.shape[-2:]
        cols, x_shape, windows = self._cache
        dy2 = dy.reshape(-1, c_out)
        grads = {"weight": (cols.T @ dy2).reshape(w.shape), "bias": dy2.sum(axis=0)}
        if not self.input_grad:
            return None, grads
        dcols = (dy2 @ w.reshape(-1, c_out).T).reshape(x_shape[:-1] + (len(windows), c_in))
        dx = np.zeros(x_shape)
        for i, (src, dst) in enumerate(windows):
            dx[src] += dcols[dst + (i,)]
        return dx, grads


class Dense(Layer):
    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.params = {"weight": weight, "bias": bias}
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dy):
        grads = {"weight": self._x.T @ dy, "bias": dy.sum(axis=0)}
        return dy @ self.params["weight"].T, grads


class ReLU(Layer):
    def __init__(self):
        self.params = {}
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0), {}


class GlobalAvgPool(Layer):
    """Mean over every spatial axis: (batch, *spatial, c) -> (batch, c)."""

    def __init__(self):
        self.params = {}
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=tuple(range(1, x.ndim - 1)))

    def backward(self, dy):
        shape = self._shape
        count = int(np.prod(shape[1:-1]))
        expanded = dy.reshape((shape[0],) + (1,) * (len(shape) - 2) + (shape[-1],)) / count
        return np.broadcast_to(expanded, shape).copy(), {}
