"""Hot simulation kernels with a numba and a pure-numpy implementation.

The active backend is chosen at import time (see :mod:`parsel._accel`).  Both
backends share the uniform-to-log transform (numpy's vectorised ``log1p``) and
perform the same IEEE operations afterwards, so they return bit-identical
values.
"""

import numpy as np

from .._accel import USE_NUMBA
from . import _numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

# replications per chunk; bounds the draw matrix to a few MB at default warm-up
_CHUNK = 64


def _backend(name):
    name = name or BACKEND
    if name == "numba":
        from . import _numba

        return _numba
    if name == "numpy":
        return _numpy
    raise ValueError(f"unknown backend {name!r}")


def uniforms(key, first_sub, counts, lane=0, backend=None):
    """Matrix whose row ``j`` starts with ``counts[j]`` uniforms of substream ``first_sub + j``."""
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    width = int(counts.max()) if len(counts) else 0
    # ragged rows: keep the unused tail finite for the vectorised transforms
    alloc = np.empty if len(counts) and counts.min() == width else np.zeros
    out = alloc((len(counts), width))
    _backend(backend).uniform_fill(np.uint64(key[0]), np.uint64(key[1]), int(first_sub), int(lane), counts, out)
    return out


def flowline_batch(key, first_sub, n_reps, rates, caps, warmups, observe, backend=None):
    """Throughput of ``n_reps`` flow-line replications.

    Replication ``j`` uses substream ``first_sub + j`` of ``key``: for job ``n``
    (0-based) the service times at stations 1, 2, 3 are ``-log1p(-u)/rate``
    for draws ``3n``, ``3n+1``, ``3n+2``.  ``caps`` are the station-2 and
    station-3 capacities (jobs waiting plus in service); a job finishing
    upstream of a full station blocks its server.  The value is
    ``observe / (D3[W+observe] - D3[W])`` with ``D3`` the station-3 departure
    epochs (``D3[0] = 0``) and ``W`` the replication's warm-up count.
    """
    impl = _backend(backend)
    rates = np.asarray(rates, dtype=np.float64)
    caps = np.ascontiguousarray(caps, dtype=np.int64)
    warmups = np.ascontiguousarray(warmups, dtype=np.int64)
    out = np.empty(int(n_reps))
    for lo in range(0, int(n_reps), _CHUNK):
        hi = min(lo + _CHUNK, int(n_reps))
        warm = warmups[lo:hi]
        x = uniforms(key, first_sub + lo, 3 * (warm + observe), 0, backend)
        np.negative(x, out=x)
        np.log1p(x, out=x)
        out[lo:hi] = impl.flowline_recursion(x, rates, caps, warm, int(observe))
    return out
