import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparseloco.vectors import (
    axpy,
    chunk_layout,
    cosine_similarity,
    make_rng,
    mean_of,
)


@pytest.mark.parametrize(
    "a, x, y, want",
    [
        (0.0, [1, 2], [3, 4], [3, 4]),
        (1.0, [1, 1], [0, 0], [1, 1]),
        (2.0, [1, -1], [1, 1], [3, -1]),
    ],
)
def test_axpy_hand_cases(a, x, y, want):
    got = axpy(a, np.array(x, dtype=np.float64), np.array(y, dtype=np.float64))
    np.testing.assert_array_equal(got, np.array(want, dtype=np.float64))


def test_axpy_length_mismatch():
    with pytest.raises(ValueError):
        axpy(1.0, np.zeros(3), np.zeros(4))


@pytest.mark.parametrize(
    "a, b, want",
    [
        ([1, 2, 3], [1, 2, 3], 1.0),
        ([1, 0], [0, 1], 0.0),
        ([1, 0], [-1, 0], -1.0),
    ],
)
def test_cosine_hand_cases(a, b, want):
    got = cosine_similarity(np.array(a, dtype=np.float64), np.array(b, dtype=np.float64))
    assert got == pytest.approx(want, abs=1e-12)


def test_cosine_both_zero_raises():
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(4), np.zeros(4))


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=64),
    st.floats(1e-3, 1e3),
)
def test_cosine_scale_invariance(vals, c):
    a = np.array(vals, dtype=np.float32)
    if not np.any(a):
        return
    assert cosine_similarity(a, (c * a).astype(np.float32)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "length, C, num_chunks, tail",
    [
        (8192, 4096, 2, 4096),
        (5000, 4096, 2, 904),
        (10, 4096, 1, 10),
        (1, 1, 1, 1),
        (4096, 4096, 1, 4096),
    ],
)
def test_chunk_layout_cases(length, C, num_chunks, tail):
    lay = chunk_layout(length, C)
    assert lay.num_chunks == num_chunks
    assert lay.tail_len == tail
    # invariants
    assert lay.num_chunks == -(-length // C)
    assert 0 < lay.tail_len <= C
    assert sum(lay.chunk_len(c) for c in range(lay.num_chunks)) == length


@given(st.integers(1, 10_000), st.integers(1, 5000))
def test_chunk_layout_covers_vector(length, C):
    lay = chunk_layout(length, C)
    seen = np.zeros(length, dtype=bool)
    for c in range(lay.num_chunks):
        sl = lay.chunk_slice(c)
        assert not seen[sl].any()
        seen[sl] = True
    assert seen.all()


def test_chunk_layout_rejects_bad_args():
    with pytest.raises(ValueError):
        chunk_layout(0, 4)
    with pytest.raises(ValueError):
        chunk_layout(4, 0)


def test_rng_streams_reproducible_and_independent():
    a1 = make_rng(7, 3).standard_normal(16)
    a2 = make_rng(7, 3).standard_normal(16)
    b = make_rng(7, 4).standard_normal(16)
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, b)


def test_mean_of_is_left_to_right():
    vs = [np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0])]
    np.testing.assert_array_equal(mean_of(vs), np.array([3.0, 4.0]))
