import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ndtri

from parsel.errors import InvalidParameter
from parsel.kernels import uniforms
from parsel.rng import (
    Stream,
    derive_stream,
    draw_exponential,
    draw_normal,
    exponential_from_uniform,
    philox4x64,
    stream_key,
    to_unit,
    uniform_matrix,
)

u64 = st.integers(0, 2**64 - 1)


def numpy_philox_words(key, sub, lane, n_blocks):
    # numpy increments the counter before each block; word 0 wraps into word 1
    counter = np.array([2**64 - 1, sub - 1, lane, 0], dtype=np.uint64)
    bg = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=counter)
    return bg.random_raw(4 * n_blocks)


def test_philox_known_answer_zero():
    # Random123 known-answer vector for Philox4x64-10 with zero key and counter
    words = philox4x64(0, 0, 0, 0, 0, 0)
    assert [int(w[0]) for w in words] == [
        0x16554D9ECA36314C,
        0xDB20FE9D672D0FDC,
        0xD7E772CEE186176B,
        0x7E68B68AEC7BA23B,
    ]


@given(k0=u64, k1=u64, sub=st.integers(1, 2**40), lane=st.integers(1, 3))
def test_philox_matches_numpy(k0, k1, sub, lane):
    raw = numpy_philox_words((k0, k1), sub, lane, 3)
    blocks = np.arange(3, dtype=np.uint64)
    words = philox4x64(blocks, sub, lane, 0, k0, k1)
    ours = np.stack(words, axis=-1).reshape(-1)
    assert np.array_equal(ours, raw)


def test_to_unit_open_interval():
    u = to_unit(np.array([0, 2**64 - 1], dtype=np.uint64))
    assert u[0] == 2.0**-53 and u[1] == 1 - 2.0**-53
    assert np.isfinite(exponential_from_uniform(u, 1.0)).all()


def test_same_key_same_draws():
    a = derive_stream(7, 3, 2).uniforms(1000)
    b = derive_stream(7, 3, 2).uniforms(1000)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("other", [(8, 3, 2), (7, 4, 2), (7, 3, 3)])
def test_distinct_keys_differ(other):
    a = derive_stream(7, 3, 2).uniforms(64)
    b = derive_stream(*other).uniforms(64)
    assert not np.any(a == b)


@given(n1=st.integers(0, 9), n2=st.integers(0, 9), n3=st.integers(0, 9))
def test_sequential_reads_concatenate(n1, n2, n3):
    s = Stream(stream_key(1, 2, 3), substream=5)
    parts = np.concatenate([s.uniforms(n1), s.uniforms(n2), s.uniforms(n3)])
    whole = Stream(stream_key(1, 2, 3), substream=5).uniforms(n1 + n2 + n3)
    assert np.array_equal(parts, whole)
    assert s.position == n1 + n2 + n3


def test_uniform_matrix_rows_are_substreams():
    key = stream_key(11, 5, 1)
    m = uniform_matrix(key, [0, 3, 9], 7)
    for row, sub in zip(m, [0, 3, 9]):
        assert np.array_equal(row, Stream(key, sub).uniforms(7))


def test_lanes_are_independent_sequences():
    key = stream_key(1, 1, 1)
    assert not np.any(Stream(key, 0, 0).uniforms(16) == Stream(key, 0, 1).uniforms(16))


def test_stream_copy_reproduces_future():
    s = Stream(stream_key(4, 4, 4), 2)
    s.uniforms(5)
    t = Stream(s.key, s.substream, s.lane, s.position)
    assert s == t and hash(s) == hash(t)
    assert np.array_equal(s.uniforms(9), t.uniforms(9))


@pytest.mark.parametrize("sid,batch", [(-1, 0), (2**32, 0), (0, 2**32)])
def test_stream_key_range(sid, batch):
    with pytest.raises(InvalidParameter):
        stream_key(0, sid, batch)


def test_pooled_uniform_mean():
    u = np.concatenate([derive_stream(123, i, 1).uniforms(10_000) for i in range(100)])
    assert abs(u.mean() - 0.5) < 0.002
    assert abs(u.var() - 1 / 12) < 0.001


def test_first_draws_do_not_collide():
    one = np.ones(1, dtype=np.int64)
    first = np.array([uniforms(stream_key(5, i, 2), 0, one)[0, 0] for i in range(100_000)])
    assert len(np.unique(first)) == len(first)


def test_exponential_inverse_cdf():
    assert exponential_from_uniform(1 - np.exp(-1.0), 1.0) == pytest.approx(1.0, rel=1e-14)
    u = np.sort(Stream(stream_key(9, 0, 0)).uniforms(1000))
    assert np.all(np.diff(exponential_from_uniform(u, 3.0)) >= 0)
    x = exponential_from_uniform(Stream(stream_key(9, 0, 1)).uniforms(1_000_000), 2.0)
    assert x.min() > 0
    assert abs(x.mean() - 0.5) < 3 * 0.5 / 1e3
    s = Stream(stream_key(9, 1, 0))
    assert draw_exponential(s, 2.0) > 0
    with pytest.raises(InvalidParameter):
        draw_exponential(s, 0.0)


def test_normal_moments_and_affine():
    u = Stream(stream_key(10, 0, 0)).uniforms(1_000_000)
    z = ndtri(u)
    assert abs(z.mean()) < 0.004 and abs(z.var() - 1) < 0.01
    s1, s2 = Stream(stream_key(10, 3, 0)), Stream(stream_key(10, 3, 0))
    assert draw_normal(s1, 5.0, 2.0) == pytest.approx(5 + 2 * draw_normal(s2), rel=1e-15)


def test_draw_normal_zero_sd_consumes_one_draw():
    s = Stream(stream_key(1, 0, 0))
    assert draw_normal(s, 3.0, 0.0) == 3.0
    assert s.position == 1
    with pytest.raises(InvalidParameter):
        draw_normal(s, 0.0, -1.0)
