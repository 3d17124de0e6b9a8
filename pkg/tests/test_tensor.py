import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tsmkit.errors import FormatError, InvalidShape
from tsmkit.tensor import (
    ACTIVATION_AXES,
    FRAME_AXES,
    Tensor,
    activation,
    dot,
    frame_at,
    frame_tensor,
    load_tensor,
    max_abs_diff,
    reverse_time,
    save_tensor,
    slice_frame,
    stack_frames,
    zeros,
)

from helpers import random_activation


def small_activations(t_max=6):
    shape = st.tuples(
        st.integers(1, 2), st.integers(1, t_max), st.integers(1, 8),
        st.integers(1, 3), st.integers(1, 3),
    )
    return shape.flatmap(
        lambda s: arrays(np.float32, s, elements=st.floats(-8, 8, width=32))
    ).map(activation)


def test_zeros_basic():
    z = zeros([1, 2], ("N", "C"))
    assert z.data.tolist() == [[0.0, 0.0]]
    z5 = zeros([2, 3, 1, 1, 1], ACTIVATION_AXES)
    assert z5.data.size == 6
    assert not z5.data.any()


def test_zeros_rejects_nonpositive_extent():
    with pytest.raises(InvalidShape):
        zeros([1, 0], ("N", "C"))
    with pytest.raises(InvalidShape):
        zeros([-1, 2], ("N", "C"))


def test_tensor_invariants():
    with pytest.raises(InvalidShape):
        Tensor(np.zeros((2, 2), dtype=np.float32), ("N",))
    with pytest.raises(InvalidShape):
        Tensor(np.zeros((2, 2), dtype=np.float32), ("N", "Q"))
    with pytest.raises(InvalidShape):
        Tensor(np.zeros((2, 2), dtype=np.float32), ("N", "N"))
    t = Tensor(np.zeros((2, 3), dtype=np.float64), ("N", "C"))
    assert t.data.dtype == np.float32
    assert t.extents == (2, 3)


def test_slice_frame_values():
    rng = np.random.default_rng(0)
    x = random_activation(rng, n=2, t=3, c=4, h=2, w=2)
    f = slice_frame(x, 1, 1)
    assert f.labels == FRAME_AXES
    assert f.extents == (1, 4, 2, 2)
    np.testing.assert_array_equal(f.data[0], x.data[1, 1])


def test_slice_frame_out_of_range():
    x = zeros([1, 3, 2, 2, 2], ACTIVATION_AXES)
    with pytest.raises(IndexError):
        slice_frame(x, 0, 3)
    with pytest.raises(IndexError):
        slice_frame(x, 1, 0)
    assert not slice_frame(x, 0, 1).data.any()


def test_stack_frames_identity_and_errors():
    rng = np.random.default_rng(1)
    f = frame_tensor(rng.uniform(-1, 1, size=(1, 3, 2, 2)).astype(np.float32))
    a = stack_frames([f])
    assert a.extents == (1, 1, 3, 2, 2)
    np.testing.assert_array_equal(a.data[:, 0], f.data)
    with pytest.raises(InvalidShape):
        stack_frames([])
    g = frame_tensor(np.zeros((1, 3, 3, 2), dtype=np.float32))
    with pytest.raises(InvalidShape):
        stack_frames([f, g])


@settings(max_examples=40, deadline=None)
@given(small_activations())
def test_frame_roundtrip_bit_exact(x):
    t_total = x.extents[1]
    rebuilt = stack_frames([frame_at(x, t) for t in range(t_total)])
    np.testing.assert_array_equal(rebuilt.data, x.data)


@settings(max_examples=40, deadline=None)
@given(small_activations())
def test_reverse_time_involution(x):
    np.testing.assert_array_equal(reverse_time(reverse_time(x)).data, x.data)


def test_reverse_time_values():
    x = activation(np.arange(3, dtype=np.float32).reshape(1, 3, 1, 1, 1))
    r = reverse_time(x)
    assert r.data.ravel().tolist() == [2.0, 1.0, 0.0]
    single = activation(np.full((1, 1, 2, 1, 1), 7, dtype=np.float32))
    np.testing.assert_array_equal(reverse_time(single).data, single.data)


def test_dot_and_max_abs_diff():
    x = Tensor(np.array([1.0, 2.0], dtype=np.float32), ("C",))
    y = Tensor(np.array([3.0, 4.0], dtype=np.float32), ("C",))
    assert dot(x, y) == 11.0
    assert dot(x, Tensor(np.zeros(2, dtype=np.float32), ("C",))) == 0.0
    assert max_abs_diff(x, x) == 0.0
    with pytest.raises(InvalidShape):
        dot(x, Tensor(np.zeros(3, dtype=np.float32), ("C",)))
    with pytest.raises(InvalidShape):
        max_abs_diff(x, Tensor(np.zeros(3, dtype=np.float32), ("C",)))


@settings(max_examples=40, deadline=None)
@given(small_activations(), st.integers(-4, 4), st.integers(-4, 4))
def test_dot_symmetric_and_linear(x, a, b):
    # integer-valued operands keep the f32 combination exact, isolating
    # the 64-bit accumulation from input rounding
    rng = np.random.default_rng(7)
    y = Tensor(rng.integers(-8, 9, size=x.extents).astype(np.float32), ACTIVATION_AXES)
    z = Tensor(rng.integers(-8, 9, size=x.extents).astype(np.float32), ACTIVATION_AXES)
    assert dot(x, y) == dot(y, x)
    combo = Tensor(np.float32(a) * y.data + np.float32(b) * z.data, ACTIVATION_AXES)
    lhs = dot(x, combo)
    rhs = np.float64(a) * dot(x, y) + np.float64(b) * dot(x, z)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))


def test_tensor_file_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    x = random_activation(rng, n=2, t=3, c=5, h=2, w=4)
    p = tmp_path / "clip.tsmt"
    save_tensor(x, p)
    y = load_tensor(p)
    assert y.labels == x.labels
    np.testing.assert_array_equal(y.data, x.data)


def test_tensor_file_header_layout(tmp_path):
    x = zeros([1, 2], ("N", "C"))
    p = tmp_path / "t.tsmt"
    save_tensor(x, p)
    blob = p.read_bytes()
    assert blob[:4] == b"TSMT"
    assert blob[4] == 1
    assert blob[5] == 2
    assert blob[6] == 0 and blob[7] == 2  # N, C axis codes
    assert int.from_bytes(blob[8:16], "little") == 1
    assert int.from_bytes(blob[16:24], "little") == 2
    assert len(blob) == 24 + 8


@pytest.mark.parametrize(
    "mutate, offset",
    [
        (lambda b: b"XSMT" + b[4:], 0),              # bad magic
        (lambda b: b[:4] + b"\x02" + b[5:], 4),      # bad version
        (lambda b: b[:6] + b"\x09" + b[7:], 6),      # unknown axis code
        (lambda b: b[:-3], None),                    # truncated payload
        (lambda b: b + b"\x00\x00", None),           # trailing bytes
        (lambda b: b[:5], 5),                        # no axis count
    ],
)
def test_tensor_file_corruption(tmp_path, mutate, offset):
    x = zeros([1, 2, 3, 2, 2], ACTIVATION_AXES)
    p = tmp_path / "t.tsmt"
    save_tensor(x, p)
    broken = tmp_path / "broken.tsmt"
    broken.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(FormatError) as exc:
        load_tensor(broken)
    assert str(broken) in str(exc.value)
    assert exc.value.offset is not None
    if offset is not None:
        assert exc.value.offset == offset
