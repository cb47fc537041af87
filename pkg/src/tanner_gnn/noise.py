"""Code-capacity depolarising noise, syndromes and datasets.

Pauli errors are integer words over ``{0: I, 1: X, 2: Z, 3: Y}``. The X
component of qubit ``i`` is set for classes 1 and 3, the Z component for
classes 2 and 3. Syndromes are laid out as ``[H_X e_z ; H_Z e_x]``.

Random numbers come from numpy's ``Philox`` counter-based generator. Datasets
are generated in fixed-size chunks, each with its own child seed spawned from
``SeedSequence(seed)``, so the result does not depend on how chunks are
scheduled.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codes import CssCode

I, X, Z, Y = 0, 1, 2, 3
CHUNK = 4096


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def x_part(word: np.ndarray) -> np.ndarray:
    word = np.asarray(word)
    return ((word == X) | (word == Y)).astype(np.uint8)


def z_part(word: np.ndarray) -> np.ndarray:
    word = np.asarray(word)
    return ((word == Z) | (word == Y)).astype(np.uint8)


def combine(e_x: np.ndarray, e_z: np.ndarray) -> np.ndarray:
    """Inverse of ``(x_part, z_part)``."""
    return (np.asarray(e_x, dtype=np.uint8) + 2 * np.asarray(e_z, dtype=np.uint8)).astype(np.uint8)


def sample_depolarizing(n: int, p, rng, size: int | None = None) -> np.ndarray:
    """Draw depolarising errors: I with prob ``1-p``, else X, Y or Z with ``p/3`` each.

    ``p`` may be a scalar or, with ``size``, one probability per word.
    Returns shape ``(n,)`` or ``(size, n)``.
    """
    rng = make_rng(rng)
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr < 0) or np.any(p_arr > 1):
        raise ValueError(f"error probability must lie in [0, 1], got {p}")
    shape = (n,) if size is None else (size, n)
    if size is not None and p_arr.ndim == 1:
        p_arr = p_arr[:, None]
    u = rng.random(shape)
    hit = u < p_arr
    with np.errstate(divide="ignore", invalid="ignore"):
        # conditioned on a hit, u/p is uniform on [0, 1) and picks X, Y, Z
        which = np.minimum((3.0 * u / p_arr).astype(np.int64), 2)
    word = np.where(hit, np.array([X, Y, Z], dtype=np.uint8)[np.where(hit, which, 0)], I)
    return word.astype(np.uint8)


def compute_syndrome(code: CssCode, error) -> np.ndarray:
    """Syndrome ``[H_X e_z ; H_Z e_x] mod 2`` of one word or a ``(batch, n)`` stack."""
    error = np.asarray(error)
    if error.shape[-1] != code.n:
        raise ValueError(f"error has length {error.shape[-1]}, code has n={code.n}")
    ex = x_part(error).astype(np.int32)
    ez = z_part(error).astype(np.int32)
    sx = (ez @ code.h_x.T.astype(np.int32)) & 1
    sz = (ex @ code.h_z.T.astype(np.int32)) & 1
    return np.concatenate([sx, sz], axis=-1).astype(np.uint8)


@dataclass
class Sample:
    error: np.ndarray
    syndrome: np.ndarray
    p_used: float


@dataclass
class Dataset:
    """Structure-of-arrays batch of (error, syndrome) samples."""

    errors: np.ndarray
    syndromes: np.ndarray
    p_used: np.ndarray
    code_id: str = ""
    p_max: float = 0.0
    seed: int = 0

    def __len__(self) -> int:
        return self.errors.shape[0]

    def __getitem__(self, i) -> Sample | "Dataset":
        if isinstance(i, (int, np.integer)):
            return Sample(self.errors[i], self.syndromes[i], float(self.p_used[i]))
        return Dataset(self.errors[i], self.syndromes[i], self.p_used[i],
                       self.code_id, self.p_max, self.seed)

    def validate(self, code: CssCode) -> None:
        if not np.array_equal(compute_syndrome(code, self.errors), self.syndromes):
            raise ValueError("dataset syndromes do not match their errors")


def _chunk_rngs(seed: int, count: int):
    n_chunks = -(-count // CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    for i, child in enumerate(children):
        yield min(CHUNK, count - i * CHUNK), make_rng(child)


def generate_dataset(code: CssCode, p_max: float, count: int, seed: int = 0,
                     fixed_p: bool = False) -> Dataset:
    """i.i.d. samples, each with its own ``p ~ U(0, p_max)``.

    With ``fixed_p=True`` every sample uses ``p_max`` itself (test sets).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= p_max <= 1:
        raise ValueError(f"p_max must lie in [0, 1], got {p_max}")
    errs, ps = [], []
    for size, rng in _chunk_rngs(seed, count):
        # draw whole chunks so a shorter dataset is a prefix of a longer one
        p = np.full(CHUNK, p_max) if fixed_p else rng.uniform(0.0, p_max, CHUNK)
        errs.append(sample_depolarizing(code.n, p, rng, size=CHUNK)[:size])
        ps.append(p[:size])
    errors = np.concatenate(errs)
    return Dataset(errors, compute_syndrome(code, errors), np.concatenate(ps),
                   code.name, float(p_max), int(seed))


def error_stream(code: CssCode, p: float, count: int, seed: int) -> np.ndarray:
    """Fixed-``p`` error words; identical for identical ``(p, count, seed)``."""
    return generate_dataset(code, p, count, seed, fixed_p=True).errors


# Dataset file, little-endian:
#   magic   b"TGDS"
#   u16     format version (1)
#   u16     length L of the code identifier, then L bytes UTF-8
#   u32 n, u32 m, u64 count, f64 p_max, u64 seed
#   count records of: ceil(n/4) bytes error (2 bits per qubit, qubit i in
#   byte i//4 at bit offset 2*(i%4)), ceil(m/8) bytes syndrome (np.packbits
#   little bit order), f64 p_used
MAGIC = b"TGDS"
VERSION = 1


def _pack_words(errors: np.ndarray) -> np.ndarray:
    count, n = errors.shape
    padded = np.zeros((count, -(-n // 4) * 4), dtype=np.uint8)
    padded[:, :n] = errors
    q = padded.reshape(count, -1, 4)
    return (q[:, :, 0] | (q[:, :, 1] << 2) | (q[:, :, 2] << 4) | (q[:, :, 3] << 6)).astype(np.uint8)


def _unpack_words(packed: np.ndarray, n: int) -> np.ndarray:
    parts = [(packed >> s) & 3 for s in (0, 2, 4, 6)]
    return np.stack(parts, axis=-1).reshape(packed.shape[0], -1)[:, :n].astype(np.uint8)


def save_dataset(ds: Dataset, path) -> None:
    count, n = ds.errors.shape
    m = ds.syndromes.shape[1]
    ident = ds.code_id.encode("utf-8")
    header = MAGIC + struct.pack("<HH", VERSION, len(ident)) + ident
    header += struct.pack("<IIQdQ", n, m, count, ds.p_max, ds.seed)
    eb, sb = -(-n // 4), -(-m // 8)
    rec = np.dtype([("e", np.uint8, (eb,)), ("s", np.uint8, (sb,)), ("p", "<f8")])
    body = np.empty(count, dtype=rec)
    body["e"] = _pack_words(ds.errors)
    body["s"] = np.packbits(ds.syndromes, axis=1, bitorder="little")
    body["p"] = ds.p_used
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def load_dataset(path, code: CssCode | None = None) -> Dataset:
    """Read a dataset file; with ``code`` every syndrome is re-checked."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a dataset file")
    version, ilen = struct.unpack_from("<HH", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    off = 8
    ident = raw[off:off + ilen].decode("utf-8")
    off += ilen
    n, m, count, p_max, seed = struct.unpack_from("<IIQdQ", raw, off)
    off += struct.calcsize("<IIQdQ")
    eb, sb = -(-n // 4), -(-m // 8)
    rec = np.dtype([("e", np.uint8, (eb,)), ("s", np.uint8, (sb,)), ("p", "<f8")])
    body = np.frombuffer(raw, dtype=rec, count=count, offset=off)
    ds = Dataset(_unpack_words(body["e"], n),
                 np.unpackbits(body["s"], axis=1, bitorder="little")[:, :m].copy(),
                 body["p"].astype(np.float64), ident, p_max, seed)
    if code is not None:
        if code.n != n or code.num_checks != m:
            raise ValueError(f"{path}: dataset shape ({n}, {m}) does not match {code}")
        ds.validate(code)
    return ds
