"""2D network kernels (forward + backward) and MAC/parameter accounting.

All kernels take and return plain numpy arrays in (N, C, H, W) / (N, F)
layout and preserve the input dtype, so the float32 production path and the
float64 shadow path used by gradient checks share one implementation.
Convolution reduces over a fixed (channel, kh, kw) patch layout via matmul;
results are bit-reproducible run to run on one machine.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidShape, InvalidSpec
from .shift import ShiftSpec

# --- layer descriptors (shapes only; weights live in a store) ---


@dataclass(frozen=True)
class ConvSpec:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.in_ch < 1 or self.out_ch < 1 or self.kernel < 1:
            raise InvalidSpec(f"conv extents must be >= 1: {self}")
        if self.stride < 1 or self.pad < 0:
            raise InvalidSpec(f"bad stride/pad: {self}")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        ho = (h + 2 * self.pad - self.kernel) // self.stride + 1
        wo = (w + 2 * self.pad - self.kernel) // self.stride + 1
        return ho, wo


@dataclass(frozen=True)
class LinearSpec:
    in_features: int
    out_features: int

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise InvalidSpec(f"linear extents must be >= 1: {self}")


# --- parameter bundles (actual weights) ---


@dataclass
class Conv2dParams:
    weights: np.ndarray  # (C_out, C_in, K, K)
    bias: np.ndarray     # (C_out,)
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise InvalidSpec(f"conv weights must be (O, I, K, K), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise InvalidSpec(f"bias shape {self.bias.shape} != ({self.weights.shape[0]},)")
        if self.stride < 1 or self.pad < 0:
            raise InvalidSpec(f"bad stride/pad: stride={self.stride} pad={self.pad}")


@dataclass
class LinearParams:
    weights: np.ndarray  # (out_features, in_features)
    bias: np.ndarray     # (out_features,)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise InvalidSpec(
                f"linear shapes inconsistent: w {self.weights.shape}, b {self.bias.shape}"
            )


# --- MAC instrumentation ---


class MacCounter:
    """Accumulates the multiply-accumulate count of executed forward kernels."""

    __slots__ = ("total",)

    def __init__(self):
        self.total = 0


_active_counters: list[MacCounter] = []


@contextmanager
def count_macs():
    """Record MACs of every forward kernel run inside the block.

    Shift, relu and pooling perform no multiply-accumulates and record 0.
    """
    counter = MacCounter()
    _active_counters.append(counter)
    try:
        yield counter
    finally:
        _active_counters.remove(counter)


def _record_macs(n: int) -> None:
    for counter in _active_counters:
        counter.total += n


# --- kernels ---


def _conv_geometry(x: np.ndarray, p: Conv2dParams):
    if x.ndim != 4:
        raise InvalidShape(f"conv input must be (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape
    c_out, c_in, k, _ = p.weights.shape
    if c != c_in:
        raise InvalidShape(f"input has {c} channels, weights expect {c_in}")
    ho = (h + 2 * p.pad - k) // p.stride + 1
    wo = (w + 2 * p.pad - k) // p.stride + 1
    if ho < 1 or wo < 1 or h + 2 * p.pad < k or w + 2 * p.pad < k:
        raise InvalidShape(
            f"kernel {k} with pad {p.pad} does not fit {h}x{w} input"
        )
    return n, c_in, c_out, k, h, w, ho, wo


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, C, Ho, Wo, K, K) -> (N, Ho, Wo, C, K, K) -> (N*Ho*Wo, C*K*K)
    n, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k), ho, wo


def _conv_forward_cols(x: np.ndarray, p: Conv2dParams):
    """conv2d_forward that also hands back the im2col matrix.

    The columns are exactly what the backward pass needs; callers that keep
    activations around for a backward pass should keep these too instead of
    paying for a second im2col.
    """
    n, c_in, c_out, k, h, w, ho, wo = _conv_geometry(x, p)
    cols, _, _ = _im2col(x, k, p.stride, p.pad)
    out = cols @ p.weights.reshape(c_out, c_in * k * k).T
    out += p.bias
    _record_macs(n * c_out * c_in * k * k * ho * wo)
    return out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2).copy(), cols


def conv2d_forward(x: np.ndarray, p: Conv2dParams) -> np.ndarray:
    """Cross-correlation with bias, (N, C_in, H, W) -> (N, C_out, Ho, Wo)."""
    return _conv_forward_cols(x, p)[0]


def conv2d_backward(x: np.ndarray, p: Conv2dParams, grad_out: np.ndarray,
                    cols: np.ndarray | None = None):
    """Gradients of sum(grad_out * conv2d_forward(x, p)) w.r.t. (x, w, b).

    cols, if given, must be the im2col matrix of x (from _conv_forward_cols);
    it is recomputed otherwise.
    """
    n, c_in, c_out, k, h, w, ho, wo = _conv_geometry(x, p)
    if grad_out.shape != (n, c_out, ho, wo):
        raise InvalidShape(
            f"grad_out shape {grad_out.shape} != {(n, c_out, ho, wo)}"
        )
    if cols is None:
        cols, _, _ = _im2col(x, k, p.stride, p.pad)
    g2 = grad_out.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
    grad_w = (g2.T @ cols).reshape(c_out, c_in, k, k)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    # scatter grad through each kernel tap back onto the padded input; the
    # accumulator is channel-last so each tap view adds without a transpose
    gflat = g2 @ p.weights.reshape(c_out, c_in * k * k)
    gwin = gflat.reshape(n, ho, wo, c_in, k, k)
    gxp = np.zeros((n, h + 2 * p.pad, w + 2 * p.pad, c_in), dtype=x.dtype)
    for kh in range(k):
        for kw in range(k):
            gxp[:, kh : kh + p.stride * ho : p.stride,
                kw : kw + p.stride * wo : p.stride] += gwin[:, :, :, :, kh, kw]
    grad_x = gxp[:, p.pad : p.pad + h, p.pad : p.pad + w].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if x.shape != grad_out.shape:
        raise InvalidShape(f"relu grad shape {grad_out.shape} != input {x.shape}")
    return np.where(x > 0, grad_out, 0)


def global_avg_pool_forward(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> per-channel means (N, C)."""
    if x.ndim != 4:
        raise InvalidShape(f"pool input must be (N, C, H, W), got {x.shape}")
    return x.mean(axis=(2, 3))


def global_avg_pool_backward(x_shape, grad_out: np.ndarray) -> np.ndarray:
    n, c, h, w = x_shape
    if grad_out.shape != (n, c):
        raise InvalidShape(f"pool grad shape {grad_out.shape} != {(n, c)}")
    scale = grad_out / (h * w)
    return np.broadcast_to(scale[:, :, None, None], (n, c, h, w)).copy()


def linear_forward(x: np.ndarray, p: LinearParams) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != p.weights.shape[1]:
        raise InvalidShape(
            f"linear input {x.shape} does not match weights {p.weights.shape}"
        )
    _record_macs(x.shape[0] * p.weights.shape[0] * p.weights.shape[1])
    return x @ p.weights.T + p.bias


def linear_backward(x: np.ndarray, p: LinearParams, grad_out: np.ndarray):
    if grad_out.shape != (x.shape[0], p.weights.shape[0]):
        raise InvalidShape(
            f"linear grad shape {grad_out.shape} != {(x.shape[0], p.weights.shape[0])}"
        )
    return grad_out @ p.weights, grad_out.T @ x, grad_out.sum(axis=0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. logits.

    Softmax uses max-subtraction for stability; labels are class indices.
    """
    if logits.ndim != 2:
        raise InvalidShape(f"logits must be (N, K), got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise InvalidShape(f"labels shape {labels.shape} != ({logits.shape[0]},)")
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError(f"label out of range [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.log(probs[np.arange(n), labels]).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    grad /= n
    return loss, grad.astype(logits.dtype)


# --- cost accounting ---


def macs_of(layer, input_shape) -> int:
    """Multiply-accumulates of one layer applied to a (C, H, W) frame.

    Shift, relu and pooling are zero; unknown layer kinds are rejected.
    """
    if isinstance(layer, ConvSpec):
        c, h, w = input_shape
        if c != layer.in_ch:
            raise InvalidSpec(f"input has {c} channels, {layer} expects {layer.in_ch}")
        ho, wo = layer.out_hw(h, w)
        if ho < 1 or wo < 1:
            raise InvalidSpec(f"{layer} yields empty output on {input_shape}")
        return layer.out_ch * layer.in_ch * layer.kernel ** 2 * ho * wo
    if isinstance(layer, LinearSpec):
        return layer.out_features * layer.in_features
    if isinstance(layer, ShiftSpec) or layer in ("relu", "pool"):
        return 0
    raise InvalidSpec(f"unknown layer kind {layer!r}")


def params_of(layer) -> int:
    if isinstance(layer, ConvSpec):
        return layer.out_ch * layer.in_ch * layer.kernel ** 2 + layer.out_ch
    if isinstance(layer, LinearSpec):
        return layer.out_features * layer.in_features + layer.out_features
    if isinstance(layer, ShiftSpec) or layer in ("relu", "pool"):
        return 0
    raise InvalidSpec(f"unknown layer kind {layer!r}")
