"""Counter-based random streams keyed by (root seed, system, batch).

Every replication value is a pure function of its key, so results do not depend
on which worker ran a batch or in which order batches finished.  The generator
is Philox4x64-10 (the same bijection as :class:`numpy.random.Philox`); a
128-bit key selects the stream and a 256-bit counter addresses draws:

=========  ==============================================
counter    meaning
=========  ==============================================
word 0     block index inside the substream (4 draws each)
word 1     substream (replication index inside a batch)
word 2     lane (0 = main draws, 1 = auxiliary draws)
word 3     unused, always 0
=========  ==============================================

Key derivation is O(1): ``key = (root_seed, system_id << 32 | batch_index)``.
Distinct keys give distinct Philox permutations, so streams never share a
counter space.
"""

import math

import numpy as np
from scipy.special import ndtri

from .errors import InvalidParameter

__all__ = [
    "Stream",
    "derive_stream",
    "draw_exponential",
    "draw_normal",
    "exponential_from_uniform",
    "philox4x64",
    "stream_key",
    "to_unit",
    "uniform_matrix",
]

_U64 = np.uint64
PHILOX_M0 = _U64(0xD2E7470EE14C6C93)
PHILOX_M1 = _U64(0xCA5A826395121157)
PHILOX_W0 = _U64(0x9E3779B97F4A7C15)
PHILOX_W1 = _U64(0xBB67AE8584CAA73B)
_MASK32 = _U64(0xFFFFFFFF)
_SHIFT32 = _U64(32)
_MASK64 = (1 << 64) - 1
_INV52 = 1.0 / 4503599627370496.0

ID_LIMIT = 1 << 32


def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    cross = (lo_lo >> _SHIFT32) + (hi_lo & _MASK32) + lo_hi
    hi = a_hi * b_hi + (hi_lo >> _SHIFT32) + (cross >> _SHIFT32)
    return hi, a * b


def philox4x64(c0, c1, c2, c3, k0, k1, rounds=10):
    """Vectorised Philox4x64 bijection.

    All counter arguments broadcast against each other; keys are scalars.
    Returns four ``uint64`` arrays.
    """
    c0, c1, c2, c3 = np.broadcast_arrays(
        *(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    )
    # copies so the in-place round updates never touch caller memory
    c0, c1, c2, c3 = c0.copy(), c1.copy(), c2.copy(), c3.copy()
    # 1-element arrays: uint64 array arithmetic wraps silently, scalars warn
    k0 = np.array([k0], dtype=np.uint64)
    k1 = np.array([k1], dtype=np.uint64)
    for r in range(rounds):
        if r:
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        hi0, lo0 = _mulhilo(PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def to_unit(raw):
    """Map raw 64-bit words to doubles in the open interval (0, 1).

    The top 52 bits plus a half step give ``(m + 0.5) / 2**52``; with 53 bits
    the largest word would round to exactly 1.0.
    """
    return ((np.asarray(raw, dtype=np.uint64) >> _U64(12)).astype(np.float64) + 0.5) * _INV52


def stream_key(root_seed, system_id, batch_index):
    """Philox key for one (system, batch) stream."""
    if not 0 <= system_id < ID_LIMIT:
        raise InvalidParameter(f"system_id must be in [0, 2**32), got {system_id}")
    if not 0 <= batch_index < ID_LIMIT:
        raise InvalidParameter(f"batch_index must be in [0, 2**32), got {batch_index}")
    return (int(root_seed) & _MASK64, (int(system_id) << 32) | int(batch_index))


def uniform_matrix(key, substreams, n_draws, lane=0):
    """Uniforms at positions ``0..n_draws-1`` of several substreams.

    Returns an array of shape ``(len(substreams), n_draws)``; row ``j`` equals
    ``Stream(key, substreams[j], lane).uniforms(n_draws)``.
    """
    subs = np.asarray(substreams, dtype=np.uint64).reshape(-1, 1)
    n_blocks = -(-int(n_draws) // 4)
    blocks = np.arange(n_blocks, dtype=np.uint64).reshape(1, -1)
    words = philox4x64(blocks, subs, _U64(lane), _U64(0), key[0], key[1])
    stacked = np.stack(words, axis=-1).reshape(subs.shape[0], n_blocks * 4)
    return to_unit(stacked[:, :n_draws])


class Stream:
    """Sequential view over one substream of a keyed Philox generator.

    Streams are value-like: copying one (``Stream(s.key, s.substream,
    s.lane, s.position)``) reproduces its future draws exactly.
    """

    __slots__ = ("key", "substream", "lane", "position")

    def __init__(self, key, substream=0, lane=0, position=0):
        self.key = (int(key[0]) & _MASK64, int(key[1]) & _MASK64)
        self.substream = int(substream)
        self.lane = int(lane)
        self.position = int(position)

    def __repr__(self):
        return (
            f"Stream(key=({self.key[0]:#x}, {self.key[1]:#x}), substream={self.substream}, "
            f"lane={self.lane}, position={self.position})"
        )

    def __eq__(self, other):
        if not isinstance(other, Stream):
            return NotImplemented
        return (self.key, self.substream, self.lane, self.position) == (
            other.key,
            other.substream,
            other.lane,
            other.position,
        )

    def __hash__(self):
        return hash((self.key, self.substream, self.lane, self.position))

    def child(self, substream, lane=0):
        """Fresh stream on another substream/lane of the same key."""
        return Stream(self.key, substream, lane)

    def uniforms(self, n):
        n = int(n)
        if n <= 0:
            return np.empty(0)
        first_block = self.position // 4
        offset = self.position % 4
        n_blocks = -(-(offset + n) // 4)
        blocks = np.arange(first_block, first_block + n_blocks, dtype=np.uint64)
        words = philox4x64(blocks, _U64(self.substream), _U64(self.lane), _U64(0), *self.key)
        raw = np.stack(words, axis=-1).reshape(-1)[offset : offset + n]
        self.position += n
        return to_unit(raw)

    def uniform(self):
        return float(self.uniforms(1)[0])


def derive_stream(root_seed, system_id, batch_index):
    """Stream for ``(root_seed, system_id, batch_index)``; substream 0, lane 0.

    ``batch_index`` 0 is reserved for Stage 0, 1 for Stage 1 and 2.. for later
    batches.  Replication ``j`` of a batch uses ``stream.child(j)``.
    """
    return Stream(stream_key(root_seed, system_id, batch_index))


def exponential_from_uniform(u, rate):
    """Inverse CDF of the exponential distribution, ``-ln(1-u)/rate``."""
    return -np.log1p(-np.asarray(u, dtype=np.float64)) / rate


def draw_exponential(stream, rate):
    if not rate > 0:
        raise InvalidParameter(f"rate must be positive, got {rate}")
    return float(exponential_from_uniform(stream.uniform(), rate))


def draw_normal(stream, mean=0.0, sd=1.0):
    """Normal draw by inverse CDF of one uniform; ``sd == 0`` returns ``mean``."""
    if sd < 0 or math.isnan(sd):
        raise InvalidParameter(f"sd must be non-negative, got {sd}")
    z = float(ndtri(stream.uniform()))
    if sd == 0:
        return float(mean)
    return mean + sd * z
