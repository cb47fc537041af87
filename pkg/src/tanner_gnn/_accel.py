"""Optional numba acceleration.

Hot kernels are written twice: a loop-based version compiled with numba's
``njit`` and a vectorised pure-numpy version. Which one runs is decided once
at import time:

* numba must be importable, and
* the environment variable ``TANNER_GNN_NO_NUMBA`` must be unset or ``0``.

Set ``TANNER_GNN_NO_NUMBA=1`` to force the numpy path (useful for debugging
and for the kernel benchmark in ``benchmarks/``).
"""

from __future__ import annotations

import os


def _noop_jit(*args, **kwargs):
    """Stand-in decorator used when numba is missing."""
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba() -> bool:
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


HAVE_NUMBA = _have_numba()
USE_NUMBA = HAVE_NUMBA and os.environ.get("TANNER_GNN_NO_NUMBA", "0") in ("", "0")

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover
    njit = _noop_jit


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
