"""Minimal reverse-mode network core: conv2d, softplus, Adam.

Just enough machinery to train the post-processing networks on a single
core with numpy: batched 2D cross-correlation (im2col + BLAS matmul),
softplus activation, Kaiming-initialized parameters, and Adam. Layers
cache their forward inputs and accumulate parameter gradients in place;
``Sequential`` chains them. No external ML framework is involved.

Shapes follow the (batch, channels, rows, cols) convention. A 2x2 kernel
with one-sided (right/bottom) zero padding preserves the spatial shape,
so every layer maps (B, C, H, W) to (B, C', H, W). Per-cell dense stages
are expressed as 1x1 convolutions.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LR = 0.001

CHECKPOINT_FORMAT = "cyclone-pp-net/1"


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


def softplus(x):
    """ln(1 + e^x) with the large-x branch returned as x itself."""
    x = np.asarray(x)
    out = np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))
    return out if out.ndim else float(out)


def softplus_grad(x):
    """Derivative of softplus, the logistic function."""
    return expit(x)


def kaiming_init(fan_in: int, shape, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean Gaussian draws with variance 2 / fan_in."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


@dataclass
class Parameter:
    """A trainable array and its gradient accumulator."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ValueError("gradient shape must match the value")

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def astype(self, dtype) -> None:
        self.value = self.value.astype(dtype)
        self.grad = np.zeros_like(self.value)


class ConvLayer:
    """2D cross-correlation, shape-preserving.

    Kernels of spatial size (kh, kw) slide over an input padded with
    kh-1 zero rows at the bottom and kw-1 zero columns at the right, so
    output rows/cols equal input rows/cols. Weights start Kaiming, bias
    starts zero.

    When the same read-only array object is passed to forward again, the
    im2col expansion is reused; full-batch training loops exploit this by
    freezing their input once. ``input_grad=False`` marks a first layer
    whose input gradient nobody consumes, skipping the col2im fold.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel=(2, 2),
                 rng: np.random.Generator | None = None, input_grad: bool = True):
        kh, kw = kernel
        if kh < 1 or kw < 1:
            raise ValueError(f"kernel must be at least 1x1, got {kernel}")
        fan_in = in_channels * kh * kw
        if rng is None:
            rng = np.random.default_rng(0)
        self.kernels = Parameter(kaiming_init(fan_in, (out_channels, in_channels, kh, kw), rng),
                                 name="kernels")
        self.bias = Parameter(np.zeros(out_channels), name="bias")
        self.input_grad = input_grad
        self._cols = None
        self._cols_src = None
        self._input_shape = None

    @property
    def in_channels(self) -> int:
        return self.kernels.value.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels.value.shape[0]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.kernels.value.shape[2:]

    def parameters(self) -> list[Parameter]:
        return [self.kernels, self.bias]

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        batch, channels, rows, cols = x.shape
        kh, kw = self.kernel_size
        xp = np.pad(x, ((0, 0), (0, 0), (0, kh - 1), (0, kw - 1)))
        # windows: (B, C, H, W, kh, kw) view, flattened to one tall matrix
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        patches = win.transpose(0, 2, 3, 1, 4, 5)
        return np.ascontiguousarray(patches).reshape(batch * rows * cols, channels * kh * kw)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ValueError(f"expected (batch, channels, rows, cols), got shape {x.shape}")
        batch, channels, rows, cols = x.shape
        if channels != self.in_channels:
            raise ValueError(f"layer expects {self.in_channels} input channels, got {channels}")
        if x is self._cols_src and not x.flags.writeable:
            cols_mat = self._cols
        else:
            cols_mat = self._im2col(x)
            self._cols = cols_mat
            self._cols_src = x if not x.flags.writeable else None
        self._input_shape = x.shape
        kmat = self.kernels.value.reshape(self.out_channels, -1).astype(x.dtype, copy=False)
        out = cols_mat @ kmat.T
        out += self.bias.value.astype(x.dtype, copy=False)
        return out.reshape(batch, rows * cols, self.out_channels).transpose(0, 2, 1) \
                  .reshape(batch, self.out_channels, rows, cols)

    def backward(self, grad_out: np.ndarray) -> np.ndarray | None:
        if self._input_shape is None:
            raise RuntimeError("backward called before forward")
        batch, channels, rows, cols = self._input_shape
        kh, kw = self.kernel_size
        g2 = grad_out.reshape(batch, self.out_channels, rows * cols).transpose(0, 2, 1)
        g2 = np.ascontiguousarray(g2).reshape(batch * rows * cols, self.out_channels)

        gk = g2.T @ self._cols
        self.kernels.grad += gk.reshape(self.kernels.value.shape)
        self.bias.grad += g2.sum(axis=0)
        if not self.input_grad:
            return None

        kmat = self.kernels.value.reshape(self.out_channels, -1).astype(g2.dtype, copy=False)
        gcols = (g2 @ kmat).reshape(batch, rows, cols, channels, kh, kw)
        gx = np.zeros((batch, channels, rows + kh - 1, cols + kw - 1), dtype=grad_out.dtype)
        for ki in range(kh):
            for kj in range(kw):
                gx[:, :, ki:ki + rows, kj:kj + cols] += gcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        return gx[:, :, :rows, :cols]


class SoftplusLayer:
    """Elementwise softplus; the cached exp also yields the derivative."""

    def __init__(self):
        self._exp_x = None
        self._saturated = None

    def parameters(self) -> list[Parameter]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._saturated = x > 30.0
        self._exp_x = np.exp(np.where(self._saturated, 0.0, x))
        return np.where(self._saturated, x, np.log1p(self._exp_x))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._exp_x is None:
            raise RuntimeError("backward called before forward")
        sig = self._exp_x / (1.0 + self._exp_x)
        np.copyto(sig, 1.0, where=self._saturated)
        return grad_out * sig


class Sequential:
    """A straight chain of layers."""

    def __init__(self, layers):
        self.layers = list(layers)

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype) -> "Sequential":
        for p in self.parameters():
            p.astype(dtype)
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray | None:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
            if grad_out is None:
                break
        return grad_out


class Adam:
    """Adam with bias correction; one shared step counter.

    Defaults follow the usual (0.9, 0.999, 1e-8) constants with learning
    rate 0.001. A non-finite gradient aborts training rather than
    poisoning the moment estimates.
    """

    def __init__(self, params, lr: float = DEFAULT_LR,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise TrainingDiverged(f"non-finite gradient in parameter {p.name!r}")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(p.grad)
            p.value -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {
        "dtype": a.dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(rec: dict) -> np.ndarray:
    raw = base64.b64decode(rec["data"])
    a = np.frombuffer(raw, dtype=np.dtype(rec["dtype"]))
    return a.reshape(rec["shape"]).copy()


def save_network(path, net: Sequential, meta: dict | None = None) -> None:
    """Write a bit-exact JSON checkpoint (base64 row-major arrays)."""
    layers = []
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            layers.append({
                "type": "conv",
                "kernels": _encode_array(layer.kernels.value),
                "bias": _encode_array(layer.bias.value),
            })
        elif isinstance(layer, SoftplusLayer):
            layers.append({"type": "softplus"})
        else:
            raise TypeError(f"cannot serialize layer of type {type(layer).__name__}")
    doc = {"format": CHECKPOINT_FORMAT, "meta": meta or {}, "layers": layers}
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        json.dump(doc, fh, sort_keys=True)
    os.replace(tmp, path)


def load_network(path) -> tuple[Sequential, dict]:
    """Rebuild a network from a checkpoint; inverse of save_network."""
    with open(path, encoding="ascii") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unrecognized checkpoint format {doc.get('format')!r}")
    layers = []
    for rec in doc["layers"]:
        if rec["type"] == "conv":
            kernels = _decode_array(rec["kernels"])
            out_ch, in_ch, kh, kw = kernels.shape
            layer = ConvLayer(in_ch, out_ch, kernel=(kh, kw))
            layer.kernels = Parameter(kernels, name="kernels")
            layer.bias = Parameter(_decode_array(rec["bias"]), name="bias")
            layers.append(layer)
        elif rec["type"] == "softplus":
            layers.append(SoftplusLayer())
        else:
            raise ValueError(f"unrecognized layer type {rec['type']!r}")
    return Sequential(layers), doc["meta"]
