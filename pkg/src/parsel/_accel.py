"""Numba switch.

Kernels are compiled with numba unless ``PARSEL_DISABLE_NUMBA`` is set to a
truthy value or numba cannot be imported, in which case the vectorised numpy
implementations are used.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}


def numba_requested():
    return os.environ.get("PARSEL_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:  # pragma: no cover - exercised implicitly
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and numba_requested()
