"""Shared test utilities: random tensor makers and gradient-check oracles."""

from __future__ import annotations

import numpy as np

from tsmkit.net import BlockSpec, NetworkSpec
from tsmkit.ops import ConvSpec
from tsmkit.shift import ShiftSpec
from tsmkit.tensor import Tensor, ACTIVATION_AXES, FRAME_AXES


def random_activation(rng, n=1, t=4, c=8, h=3, w=3, scale=4.0) -> Tensor:
    data = rng.uniform(-scale, scale, size=(n, t, c, h, w)).astype(np.float32)
    return Tensor(data, ACTIVATION_AXES)


def random_frame(rng, n=1, c=8, h=3, w=3, scale=4.0) -> Tensor:
    data = rng.uniform(-scale, scale, size=(n, c, h, w)).astype(np.float32)
    return Tensor(data, FRAME_AXES)


def random_shape(rng, c_max=16, t_max=8, hw_max=4):
    return (
        int(rng.integers(1, 3)),
        int(rng.integers(1, t_max + 1)),
        int(rng.integers(1, c_max + 1)),
        int(rng.integers(1, hw_max + 1)),
        int(rng.integers(1, hw_max + 1)),
    )


def central_diff_grad(f, x, h=1e-4):
    """64-bit central finite differences of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def rel_grad_error(analytic, numeric) -> float:
    """max|a-n| normalized by the larger gradient magnitude."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-12)
    return float(np.max(np.abs(a - n)) / scale)


def random_network_spec(rng, n_blocks=None, frames=4, uni_only=False,
                        force_shift=False, hw=6):
    """Small random network with mixed placements and valid shifts."""
    if n_blocks is None:
        n_blocks = int(rng.integers(1, 4))
    c_in = int(rng.integers(1, 3))
    c = int(rng.integers(4, 9))
    stem = ConvSpec(c_in, c, 3, pad=1)
    blocks = []
    for i in range(n_blocks):
        placement = ["none", "inplace", "residual"][int(rng.integers(0, 3))]
        if force_shift and i == n_blocks - 1 and placement == "none":
            placement = "residual"
        shift = None
        if placement != "none":
            n_fwd = int(rng.integers(1, max(2, c // 4) + 1))
            if uni_only:
                shift = ShiftSpec(n_fwd, 0, padding="zero", mode="uni")
            else:
                n_bwd = int(rng.integers(0, max(1, c - n_fwd) // 2 + 1))
                padding = "zero" if rng.random() < 0.7 else "circular"
                shift = ShiftSpec(n_fwd, n_bwd, padding=padding)
        c_out = c if placement == "residual" else int(rng.integers(4, 9))
        down = None
        if placement == "residual" and rng.random() < 0.3:
            c_out = int(rng.integers(4, 9))
            down = ConvSpec(c, c_out, 1)
        blocks.append(BlockSpec(
            conv1=ConvSpec(c, c_out, 3, pad=1),
            conv2=ConvSpec(c_out, c_out, 3, pad=1),
            placement=placement,
            shift=shift,
            downsample=down,
        ))
        c = c_out
    return NetworkSpec(
        in_channels=c_in, height=hw, width=hw, frames=frames,
        stem=stem, blocks=tuple(blocks),
        num_classes=int(rng.integers(2, 5)),
    )
