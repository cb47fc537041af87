"""Order-0 ordered statistics decoding."""

from __future__ import annotations

import numpy as np

from . import gf2


class InconsistentSyndromeError(ValueError):
    """The syndrome is not in the column space of the check matrix."""


def osd0_decode(h: np.ndarray, syndrome, reliabilities) -> np.ndarray:
    """Solve ``h e = syndrome`` on the most error-prone information set.

    Columns are ranked by descending ``reliabilities`` (higher means more
    likely to be in error; ties go to the lower column index). Scanning in
    that order, the first ``rank(h)`` independent columns carry the solution
    and every other bit is zero.
    """
    h = np.asarray(h, dtype=np.uint8)
    rel = np.asarray(reliabilities, dtype=np.float64).reshape(-1)
    if rel.shape[0] != h.shape[1]:
        raise ValueError(f"{rel.shape[0]} reliabilities for {h.shape[1]} columns")
    order = np.argsort(-rel, kind="stable")
    x = gf2.solve_mod2(h[:, order], syndrome)
    if x is None:
        raise InconsistentSyndromeError("syndrome is not reachable from any error")
    out = np.zeros_like(x)
    out[order] = x
    return out
