"""Dense linear algebra over GF(2).

Matrices are plain ``uint8`` numpy arrays holding 0/1 entries. Elimination
packs each row into 64-bit machine words and XORs whole words at a time.

Pivoting is deterministic: columns are scanned left to right and the topmost
remaining row with a 1 becomes the pivot. Kernel bases and solutions are
therefore reproducible bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

BitMatrix = np.ndarray


def bitmatrix(a, ncols: int | None = None) -> BitMatrix:
    """Validate ``a`` and return it as a 2-D ``uint8`` 0/1 array (a copy)."""
    arr = np.array(a, dtype=np.int64)
    if arr.ndim == 1 and arr.size == 0 and ncols is not None:
        arr = arr.reshape(0, ncols)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if ncols is not None and arr.shape[1] != ncols:
        raise ValueError(f"expected {ncols} columns, got {arr.shape[1]}")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError("GF(2) matrix entries must be 0 or 1")
    return arr.astype(np.uint8)


def pack_rows(m: np.ndarray, extra_cols: int = 0) -> np.ndarray:
    """Pack a 0/1 matrix into ``uint64`` words, column ``c`` at word ``c // 64`` bit ``c % 64``."""
    m = np.asarray(m, dtype=np.uint8)
    rows, cols = m.shape
    words = max(1, -(-(cols + extra_cols) // 64))
    padded = np.zeros((rows, words * 64), dtype=np.uint8)
    padded[:, :cols] = m
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def unpack_rows(packed: np.ndarray, cols: int) -> np.ndarray:
    raw = np.ascontiguousarray(packed.astype("<u8")).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, :cols].copy()


@njit(cache=True)
def _rref_numba(rows, ncols):
    m, w = rows.shape
    pivots = np.empty(min(m, ncols), dtype=np.int64)
    r = 0
    for c in range(ncols):
        if r == m:
            break
        wi = c >> 6
        bit = np.uint64(1) << np.uint64(c & 63)
        p = -1
        for i in range(r, m):
            if rows[i, wi] & bit:
                p = i
                break
        if p < 0:
            continue
        if p != r:
            for k in range(wi, w):
                tmp = rows[r, k]
                rows[r, k] = rows[p, k]
                rows[p, k] = tmp
        for i in range(m):
            if i != r and (rows[i, wi] & bit):
                for k in range(wi, w):
                    rows[i, k] ^= rows[r, k]
        pivots[r] = c
        r += 1
    return pivots[:r]


def _rref_numpy(rows: np.ndarray, ncols: int) -> np.ndarray:
    m = rows.shape[0]
    pivots = []
    r = 0
    one = np.uint64(1)
    for c in range(ncols):
        if r == m:
            break
        wi = c >> 6
        bit = one << np.uint64(c & 63)
        hits = np.flatnonzero(rows[r:, wi] & bit)
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            rows[[r, p], wi:] = rows[[p, r], wi:]
        mask = (rows[:, wi] & bit) != 0
        mask[r] = False
        rows[mask, wi:] ^= rows[r, wi:]
        pivots.append(c)
        r += 1
    return np.array(pivots, dtype=np.int64)


def rref_packed(rows: np.ndarray, ncols: int) -> np.ndarray:
    """Reduce packed ``rows`` in place; pivots are searched in columns ``< ncols`` only.

    Returns the pivot columns; pivot ``i`` lives in row ``i``.
    """
    if USE_NUMBA:
        return _rref_numba(rows, ncols)
    return _rref_numpy(rows, ncols)


def rref(m: BitMatrix) -> tuple[BitMatrix, np.ndarray]:
    """Reduced row echelon form. Returns ``(R, pivots)`` with zero rows dropped."""
    m = np.asarray(m, dtype=np.uint8)
    rows = pack_rows(m)
    piv = rref_packed(rows, m.shape[1])
    return unpack_rows(rows[: len(piv)], m.shape[1]), piv


def rank(m: BitMatrix) -> int:
    """Row rank over GF(2)."""
    m = np.asarray(m, dtype=np.uint8)
    if m.size == 0:
        return 0
    return int(len(rref_packed(pack_rows(m), m.shape[1])))


def kernel_basis(m: BitMatrix) -> BitMatrix:
    """Basis of the right null space, one basis vector per row.

    Row ``k`` of the result has a 1 at the ``k``-th free (non-pivot) column of
    ``rref(m)``, zeros at the other free columns, and the pivot entries needed
    to annihilate it.
    """
    m = np.asarray(m, dtype=np.uint8)
    cols = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(cols, dtype=np.uint8)
    r, piv = rref(m)
    free = np.setdiff1d(np.arange(cols), piv)
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    basis[np.arange(len(free)), free] = 1
    if len(piv):
        basis[:, piv] = r[:, free].T
    return basis


def solve_mod2(m: BitMatrix, rhs) -> np.ndarray | None:
    """Solve ``m @ x = rhs (mod 2)``.

    Free variables are set to zero, so the pivot columns chosen left to right
    carry the whole solution. Returns ``None`` when ``rhs`` is outside the
    column space.
    """
    m = np.asarray(m, dtype=np.uint8)
    rhs = np.asarray(rhs, dtype=np.uint8).reshape(-1)
    nrows, cols = m.shape
    if rhs.shape[0] != nrows:
        raise ValueError(f"rhs has length {rhs.shape[0]}, matrix has {nrows} rows")
    aug = np.zeros((nrows, cols + 1), dtype=np.uint8)
    aug[:, :cols] = m
    aug[:, cols] = rhs
    rows = pack_rows(aug)
    piv = rref_packed(rows, cols)
    rk = len(piv)
    wi, bit = cols >> 6, np.uint64(1) << np.uint64(cols & 63)
    if np.any(rows[rk:, wi] & bit):
        return None
    x = np.zeros(cols, dtype=np.uint8)
    x[piv] = ((rows[:rk, wi] & bit) != 0).astype(np.uint8)
    return x


def matvec_mod2(m: BitMatrix, v) -> np.ndarray:
    """``m @ v mod 2``. ``v`` may also be a stack of vectors with shape ``(batch, cols)``."""
    m = np.asarray(m, dtype=np.uint8)
    v = np.asarray(v, dtype=np.uint8)
    if v.shape[-1] != m.shape[1]:
        raise ValueError(f"vector length {v.shape[-1]} does not match {m.shape[1]} columns")
    return ((v.astype(np.int32) @ m.T.astype(np.int32)) & 1).astype(np.uint8)


def in_rowspace(m: BitMatrix, v) -> bool:
    """True if ``v`` is a GF(2) combination of the rows of ``m``."""
    m = np.asarray(m, dtype=np.uint8)
    v = np.asarray(v, dtype=np.uint8).reshape(1, -1)
    if m.shape[0] == 0:
        return not v.any()
    return rank(np.vstack([m, v])) == rank(m)
