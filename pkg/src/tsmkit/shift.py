"""Temporal channel shift: the zero-arithmetic temporal-mixing primitive.

A shift moves a leading group of channels one step forward in time (frame t
receives frame t-1's values), a second group one step backward, and leaves
the rest untouched. Offline clips may shift both ways; a live stream can
only shift forward (the future does not exist yet), which a one-frame cache
per layer turns into a constant-memory state machine.

All variants move data and perform no arithmetic on the values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CacheMismatch, InvalidSpec
from .tensor import ACTIVATION_AXES, FRAME_AXES, Tensor, _require_axes

PAD_ZERO = "zero"
PAD_CIRCULAR = "circular"
MODE_BI = "bi"
MODE_UNI = "uni"

#: Default shifted proportion per direction: floor(C/8) channels each way.
DEFAULT_SHIFT_DIV = 8


@dataclass(frozen=True)
class ShiftSpec:
    """Channel partition and boundary policy for a +/-1 temporal shift.

    ``n_fwd`` channels (the lowest indices) move forward in time, the next
    ``n_bwd`` move backward, the rest stay put. Unidirectional mode forbids
    backward movement and circular wrap-around, since both need future frames.
    """

    n_fwd: int
    n_bwd: int = 0
    padding: str = PAD_ZERO
    mode: str = MODE_BI

    def __post_init__(self):
        if self.n_fwd < 0 or self.n_bwd < 0:
            raise InvalidSpec(f"negative channel count in {self}")
        if self.padding not in (PAD_ZERO, PAD_CIRCULAR):
            raise InvalidSpec(f"unknown padding {self.padding!r}")
        if self.mode not in (MODE_BI, MODE_UNI):
            raise InvalidSpec(f"unknown mode {self.mode!r}")
        if self.mode == MODE_UNI and self.n_bwd != 0:
            raise InvalidSpec("unidirectional shift cannot move channels backward")
        if self.mode == MODE_UNI and self.padding != PAD_ZERO:
            raise InvalidSpec("unidirectional shift requires zero padding")

    def check_channels(self, c: int) -> None:
        if self.n_fwd + self.n_bwd > c:
            raise InvalidSpec(
                f"n_fwd+n_bwd = {self.n_fwd + self.n_bwd} exceeds C = {c}"
            )


@dataclass(frozen=True)
class ChannelPartition:
    """The three disjoint channel groups a spec induces on C channels."""

    fwd: range
    bwd: range
    untouched: range


def channel_partition(spec: ShiftSpec, c: int) -> ChannelPartition:
    spec.check_channels(c)
    nf, nb = spec.n_fwd, spec.n_bwd
    return ChannelPartition(range(0, nf), range(nf, nf + nb), range(nf + nb, c))


def fraction_to_count(c: int, fraction) -> int:
    """floor(C * fraction), exact for Fraction inputs; remainders stay untouched."""
    return math.floor(c * Fraction(fraction))


def partial_shift_spec(c, fraction=Fraction(1, DEFAULT_SHIFT_DIV),
                       padding=PAD_ZERO, mode=MODE_BI) -> ShiftSpec:
    """Spec shifting ``fraction`` of C per direction (default 1/8 each way)."""
    n = fraction_to_count(c, fraction)
    return ShiftSpec(n_fwd=n, n_bwd=0 if mode == MODE_UNI else n,
                     padding=padding, mode=mode)


def spec_from_total_fraction(c, fraction) -> ShiftSpec:
    """Spec whose two groups together cover ``fraction`` of C, split evenly.

    Used by the benchmark sweep: fraction 1 shifts every channel
    (n_fwd = n_bwd = C/2), fraction 0 is the copy-free identity.
    """
    n = fraction_to_count(c, Fraction(fraction) / 2)
    return ShiftSpec(n_fwd=n, n_bwd=n)


def _check_activation(x: Tensor, spec: ShiftSpec) -> None:
    _require_axes(x, ACTIVATION_AXES, "shift")
    spec.check_channels(x.extents[2])


def _shift_array(a: np.ndarray, spec: ShiftSpec) -> np.ndarray:
    """Shift an (N, T, C, H, W) array out-of-place; dtype preserved."""
    nf, nb = spec.n_fwd, spec.n_bwd
    out = a.copy()
    t = a.shape[1]
    if nf:
        out[:, 1:, :nf] = a[:, :-1, :nf]
        out[:, 0, :nf] = a[:, t - 1, :nf] if spec.padding == PAD_CIRCULAR else 0
    if nb:
        out[:, :-1, nf : nf + nb] = a[:, 1:, nf : nf + nb]
        out[:, t - 1, nf : nf + nb] = (
            a[:, 0, nf : nf + nb] if spec.padding == PAD_CIRCULAR else 0
        )
    return out


def _shift_array_adjoint(g: np.ndarray, spec: ShiftSpec) -> np.ndarray:
    """Adjoint shift on an (N, T, C, H, W) array: group directions reversed."""
    nf, nb = spec.n_fwd, spec.n_bwd
    out = g.copy()
    t = g.shape[1]
    circ = spec.padding == PAD_CIRCULAR
    if nf:
        out[:, :-1, :nf] = g[:, 1:, :nf]
        out[:, t - 1, :nf] = g[:, 0, :nf] if circ else 0
    if nb:
        out[:, 1:, nf : nf + nb] = g[:, :-1, nf : nf + nb]
        out[:, 0, nf : nf + nb] = g[:, t - 1, nf : nf + nb] if circ else 0
    return out


def shift_offline(x: Tensor, spec: ShiftSpec) -> Tensor:
    """Shift a whole clip: forward group reads frame t-1, backward group t+1.

    Boundary slots take zeros under zero padding and wrap under circular.
    The input is never modified; the identity spec (no moved channels)
    returns the input tensor itself, copy-free.
    """
    _check_activation(x, spec)
    if spec.n_fwd == 0 and spec.n_bwd == 0:
        return x
    return Tensor(_shift_array(x.data, spec), ACTIVATION_AXES)


def shift_offline_naive(x: Tensor, spec: ShiftSpec) -> Tensor:
    """Element-by-element reference for shift_offline; no slab copies."""
    _check_activation(x, spec)
    n_total, t_total, c_total, h_total, w_total = x.extents
    nf, nb = spec.n_fwd, spec.n_bwd
    circular = spec.padding == PAD_CIRCULAR
    src = x.data
    out = np.empty_like(src)
    for n in range(n_total):
        for t in range(t_total):
            for c in range(c_total):
                if c < nf:
                    ts = t - 1
                elif c < nf + nb:
                    ts = t + 1
                else:
                    ts = t
                if circular:
                    ts %= t_total
                for h in range(h_total):
                    for w in range(w_total):
                        if 0 <= ts < t_total:
                            out[n, t, c, h, w] = src[n, ts, c, h, w]
                        else:
                            out[n, t, c, h, w] = 0.0
    return Tensor(out, ACTIVATION_AXES)


def shift_adjoint(g: Tensor, spec: ShiftSpec) -> Tensor:
    """Backward operator of shift_offline: each group's direction reversed.

    Satisfies dot(shift_offline(x, s), y) == dot(x, shift_adjoint(y, s)) for
    either padding (the adjoint of a circular shift wraps the opposite way;
    under zero padding, boundary gradients fall off the clip and are dropped).
    Equivalently: the direction-swapped shift on the same channel groups.
    """
    _check_activation(g, spec)
    if spec.n_fwd == 0 and spec.n_bwd == 0:
        return g
    return Tensor(_shift_array_adjoint(g.data, spec), ACTIVATION_AXES)


def shift_inplace(x: Tensor, spec: ShiftSpec) -> None:
    """Shift a clip inside its own buffer, touching only the moved groups.

    Untouched channels are never read or written, so the traffic is exactly
    what bytes_moved() reports. Circular padding stashes one boundary slab
    per direction before overwriting it.
    """
    _check_activation(x, spec)
    nf, nb = spec.n_fwd, spec.n_bwd
    buf = x.data
    t_total = buf.shape[1]
    circ = spec.padding == PAD_CIRCULAR
    if nf:
        edge = buf[:, t_total - 1, :nf].copy() if circ else None
        for t in range(t_total - 1, 0, -1):
            buf[:, t, :nf] = buf[:, t - 1, :nf]
        buf[:, 0, :nf] = edge if circ else 0
    if nb:
        sl = slice(nf, nf + nb)
        edge = buf[:, 0, sl].copy() if circ else None
        for t in range(t_total - 1):
            buf[:, t, sl] = buf[:, t + 1, sl]
        buf[:, t_total - 1, sl] = edge if circ else 0


def bytes_moved(spec: ShiftSpec, shape) -> int:
    """Predicted data movement of shifting, in bytes.

    ``shape`` is (N, C, T, H, W). Counts one 4-byte read plus one 4-byte
    write per element of each moved channel group, the traffic of the
    in-buffer strategy (shift_inplace), which never touches the untouched
    channels. The identity spec moves nothing.
    """
    n, c, t, h, w = (int(v) for v in shape)
    if min(n, c, t, h, w) < 1:
        raise InvalidSpec(f"invalid shape {shape}")
    spec.check_channels(c)
    return 2 * (spec.n_fwd + spec.n_bwd) * n * t * h * w * 4


@dataclass
class ShiftCache:
    """One stream's per-layer state: the previous frame's forward-group slab."""

    slab: np.ndarray
    frame_counter: int = 0

    @classmethod
    def for_stream(cls, n: int, n_fwd: int, h: int, w: int) -> "ShiftCache":
        return cls(slab=np.zeros((n, n_fwd, h, w), dtype=np.float32))

    def reset(self) -> None:
        self.slab[:] = 0
        self.frame_counter = 0


def shift_online_step(frame: Tensor, spec: ShiftSpec, state: ShiftCache):
    """Uni-directional shift of one live frame against the layer cache.

    The output's forward-group channels are replaced by the cached slab
    (zeros before the first frame); the cache then holds this frame's
    forward group. Streaming a clip this way reproduces the offline
    unidirectional shift exactly.
    """
    if spec.mode != MODE_UNI:
        raise InvalidSpec("online shift requires a unidirectional spec")
    _require_axes(frame, FRAME_AXES, "shift_online_step")
    n, c, h, w = frame.extents
    nf = spec.n_fwd
    if c < nf:
        raise CacheMismatch(f"frame has C={c} < n_fwd={nf}")
    if state.slab.shape != (n, nf, h, w):
        raise CacheMismatch(
            f"cache slab {state.slab.shape} does not match frame ({n}, {nf}, {h}, {w})"
        )
    out = frame.data.copy()
    incoming = frame.data[:, :nf].copy()
    out[:, :nf] = state.slab
    state.slab = incoming
    state.frame_counter += 1
    return Tensor(out, FRAME_AXES), state
