"""CSS code construction, logical operators and Tanner graphs.

Rotated surface code convention
-------------------------------
Data qubit ``(r, c)`` of the ``d x d`` grid has index ``r * d + c``.
Stabilisers sit on the faces ``(i, j)`` with ``0 <= i, j <= d``; face
``(i, j)`` touches the qubits ``(i-1, j-1), (i-1, j), (i, j-1), (i, j)`` that
exist. Interior faces are X-type when ``i + j`` is even and Z-type otherwise.
Weight-two X faces sit on the top and bottom edges (``i in {0, d}``, ``i + j``
even), weight-two Z faces on the left and right edges (``j in {0, d}``,
``i + j`` odd). Checks of each type are ordered by ``(i, j)`` row-major.
The X logical runs down column 0, the Z logical along row 0.

Bivariate bicycle codes
-----------------------
``x = S_l (x) I_m`` and ``y = I_l (x) S_m`` with ``S`` the cyclic shift;
``A`` and ``B`` are sums of monomials ``x^i y^j`` given as exponent pairs.
``H_X = [A | B]`` and ``H_Z = [B^T | A^T]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import gf2


@dataclass(frozen=True, eq=False)
class CssCode:
    """A CSS code with normalised logical operators (``logicals_x @ logicals_z.T = I``)."""

    h_x: np.ndarray
    h_z: np.ndarray
    logicals_x: np.ndarray
    logicals_z: np.ndarray
    d: int
    name: str = ""
    definition: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.h_x.shape[1]

    @property
    def k(self) -> int:
        return self.logicals_x.shape[0]

    @property
    def num_checks(self) -> int:
        return self.h_x.shape[0] + self.h_z.shape[0]

    def __repr__(self) -> str:
        return f"CssCode({self.name or '?'}, [[{self.n},{self.k},{self.d}]])"


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Combined Tanner graph of a CSS code.

    Nodes ``0 .. n-1`` are error (data qubit) nodes. Nodes ``n .. n+m_x-1``
    are X checks and the remaining ones Z checks, matching the syndrome
    layout ``[X checks ; Z checks]``.
    """

    num_error_nodes: int
    num_x_checks: int
    num_z_checks: int
    # (error_node, syndrome_node, check_type) with check_type 0 = X, 1 = Z
    edges: np.ndarray
    neighborhoods: tuple[np.ndarray, ...]

    @property
    def num_syndrome_nodes(self) -> int:
        return self.num_x_checks + self.num_z_checks

    @property
    def num_nodes(self) -> int:
        return self.num_error_nodes + self.num_syndrome_nodes

    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighborhoods], dtype=np.int64)


def check_css(code: CssCode) -> None:
    """Raise ``ValueError`` if any CssCode invariant fails."""
    hx, hz, lx, lz = code.h_x, code.h_z, code.logicals_x, code.logicals_z
    if gf2.matvec_mod2(hx, hz).any():
        raise ValueError("H_X H_Z^T != 0")
    k = code.n - gf2.rank(hx) - gf2.rank(hz)
    if k != lx.shape[0] or k != lz.shape[0]:
        raise ValueError(f"expected {k} logical pairs, got {lx.shape[0]}/{lz.shape[0]}")
    if k == 0:
        return
    if gf2.matvec_mod2(hz, lx).any() or gf2.matvec_mod2(hx, lz).any():
        raise ValueError("logical operators do not commute with the stabilisers")
    pairing = gf2.matvec_mod2(lx, lz)
    if not np.array_equal(pairing, np.eye(k, dtype=np.uint8)):
        raise ValueError("logical pairing matrix is not the identity")


def _independent_of(base: np.ndarray, candidates: np.ndarray, count: int) -> np.ndarray:
    # greedily keep candidates that raise the rank of rowspace(base)
    chosen = []
    current = base
    r = gf2.rank(current) if current.shape[0] else 0
    for v in candidates:
        trial = np.vstack([current, v[None, :]])
        rt = gf2.rank(trial)
        if rt > r:
            chosen.append(v)
            current, r = trial, rt
            if len(chosen) == count:
                break
    return np.array(chosen, dtype=np.uint8).reshape(len(chosen), base.shape[1])


def logical_operators(h_x, h_z) -> tuple[np.ndarray, np.ndarray]:
    """X and Z logical bases paired by symplectic Gram-Schmidt.

    X logicals lie in ``ker(H_Z)`` outside ``rowspace(H_X)`` and vice versa.
    The returned bases satisfy ``logicals_x @ logicals_z.T = I (mod 2)``.
    """
    h_x = gf2.bitmatrix(h_x)
    h_z = gf2.bitmatrix(h_z, ncols=h_x.shape[1])
    n = h_x.shape[1]
    if gf2.matvec_mod2(h_x, h_z).any():
        raise ValueError("H_X and H_Z do not commute")
    k = n - gf2.rank(h_x) - gf2.rank(h_z)
    lx = _independent_of(h_x, gf2.kernel_basis(h_z), k)
    lz = _independent_of(h_z, gf2.kernel_basis(h_x), k)

    lx = lx.copy()
    lz = lz.copy()
    for i in range(k):
        pair = (lz[i:].astype(np.int64) @ lx[i].astype(np.int64)) & 1
        j = i + int(np.flatnonzero(pair)[0])
        if j != i:
            lz[[i, j]] = lz[[j, i]]
        for t in range(k):
            if t == i:
                continue
            if (int(lx[t] @ lz[i]) & 1):
                lx[t] ^= lx[i]
            if (int(lx[i] @ lz[t]) & 1):
                lz[t] ^= lz[i]
    return lx, lz


def _make_code(h_x, h_z, d: int, name: str, definition: dict) -> CssCode:
    lx, lz = logical_operators(h_x, h_z)
    code = CssCode(h_x=h_x, h_z=h_z, logicals_x=lx, logicals_z=lz, d=d, name=name, definition=definition)
    check_css(code)
    return code


def rotated_surface_code(d: int) -> CssCode:
    """Rotated surface code of odd distance ``d >= 3`` (layout in the module docstring)."""
    if not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
        raise ValueError(f"surface code distance must be odd and >= 3, got {d!r}")
    d = int(d)
    n = d * d
    hx, hz = [], []
    for i in range(d + 1):
        for j in range(d + 1):
            even = (i + j) % 2 == 0
            interior = 1 <= i <= d - 1 and 1 <= j <= d - 1
            if interior:
                target = hx if even else hz
            elif i in (0, d) and 1 <= j <= d - 1 and even:
                target = hx
            elif j in (0, d) and 1 <= i <= d - 1 and not even:
                target = hz
            else:
                continue
            row = np.zeros(n, dtype=np.uint8)
            for a in (i - 1, i):
                for b in (j - 1, j):
                    if 0 <= a < d and 0 <= b < d:
                        row[a * d + b] = 1
            target.append(row)
    code = _make_code(np.array(hx), np.array(hz), d, f"surface_d{d}", {"family": "surface", "d": d})
    # replace the Gram-Schmidt logicals by the minimum-weight column/row representatives
    lx = np.zeros((1, n), dtype=np.uint8)
    lx[0, np.arange(d) * d] = 1
    lz = np.zeros((1, n), dtype=np.uint8)
    lz[0, np.arange(d)] = 1
    code = CssCode(h_x=code.h_x, h_z=code.h_z, logicals_x=lx, logicals_z=lz, d=d,
                   name=code.name, definition=code.definition)
    check_css(code)
    return code


def _shift(size: int, power: int) -> np.ndarray:
    return np.roll(np.eye(size, dtype=np.uint8), power % size, axis=1)


def _bb_poly(l: int, m: int, monomials) -> np.ndarray:
    out = np.zeros((l * m, l * m), dtype=np.uint8)
    for i, j in monomials:
        out ^= np.kron(_shift(l, i), _shift(m, j))
    return out


def bivariate_bicycle_code(l: int, m: int, a_monomials, b_monomials, d: int = 0, name: str = "") -> CssCode:
    """Bivariate bicycle code from two 3-term polynomials in ``x``, ``y``.

    ``a_monomials`` and ``b_monomials`` are sequences of ``(i, j)`` pairs for
    the terms ``x^i y^j``. ``d`` is only recorded, never verified.
    """
    if l < 1 or m < 1:
        raise ValueError("l and m must be positive")
    mons = []
    for poly in (a_monomials, b_monomials):
        poly = [tuple(int(t) for t in mono) for mono in poly]
        if len(poly) != 3 or any(len(mono) != 2 for mono in poly):
            raise ValueError("each polynomial needs exactly three (i, j) exponent pairs")
        if any(not (0 <= i < l and 0 <= j < m) for i, j in poly):
            raise ValueError(f"exponents must be reduced mod l={l} and m={m}: {poly}")
        if len(set(poly)) != 3:
            raise ValueError(f"repeated monomial in {poly}")
        mons.append(poly)
    a = _bb_poly(l, m, mons[0])
    b = _bb_poly(l, m, mons[1])
    h_x = np.hstack([a, b])
    h_z = np.hstack([b.T, a.T])
    definition = {"family": "bivariate_bicycle", "l": l, "m": m,
                  "a": [list(t) for t in mons[0]], "b": [list(t) for t in mons[1]], "d": d}
    return _make_code(h_x, h_z, d, name or f"bb_l{l}_m{m}", definition)


def tanner_graph(code: CssCode) -> TannerGraph:
    """Single Tanner graph holding both check types."""
    n = code.n
    mx = code.h_x.shape[0]
    edges = []
    for ctype, h, offset in ((0, code.h_x, n), (1, code.h_z, n + mx)):
        rows, cols = np.nonzero(h)
        for r, c in zip(rows, cols):
            edges.append((c, offset + r, ctype))
    edges = np.array(edges, dtype=np.int64).reshape(-1, 3)
    total = n + code.num_checks
    nbrs: list[list[int]] = [[] for _ in range(total)]
    for e, s, _ in edges:
        nbrs[e].append(int(s))
        nbrs[s].append(int(e))
    neighborhoods = tuple(np.array(sorted(nb), dtype=np.int64) for nb in nbrs)
    return TannerGraph(num_error_nodes=n, num_x_checks=mx, num_z_checks=code.h_z.shape[0],
                       edges=edges, neighborhoods=neighborhoods)


def code_from_definition(definition: dict) -> CssCode:
    """Rebuild a code from its definition dictionary (see :func:`load_code`)."""
    family = definition.get("family")
    if family == "surface":
        return rotated_surface_code(int(definition["d"]))
    if family == "bivariate_bicycle":
        cfg = definition
        return bivariate_bicycle_code(int(cfg["l"]), int(cfg["m"]), cfg["a"], cfg["b"],
                                      d=int(cfg.get("d", 0)), name=cfg.get("name", ""))
    raise ValueError(f"unknown code family {family!r}")


def named_codes() -> list[str]:
    files = resources.files("tanner_gnn") / "data" / "codes"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_code(source) -> CssCode:
    """Load a code definition.

    ``source`` is a path to a JSON file, the name of a bundled definition
    (``bb_72_12_6``, ``bb_288_12_18``, ...), ``surface_d<d>``, or a dict.

    File format::

        {"family": "surface", "d": 5}
        {"family": "bivariate_bicycle", "l": 6, "m": 6,
         "a": [[3, 0], [0, 1], [0, 2]], "b": [[0, 3], [1, 0], [2, 0]], "d": 6}
    """
    if isinstance(source, dict):
        return code_from_definition(source)
    src = str(source)
    path = Path(src)
    if path.suffix == ".json" and path.exists():
        return code_from_definition(json.loads(path.read_text()))
    if src.startswith("surface_d") and src[9:].isdigit():
        return rotated_surface_code(int(src[9:]))
    bundled = resources.files("tanner_gnn") / "data" / "codes" / f"{src}.json"
    if bundled.is_file():
        definition = json.loads(bundled.read_text())
        definition.setdefault("name", src)
        return code_from_definition(definition)
    raise FileNotFoundError(f"no code definition found for {src!r}")


def save_code(code: CssCode, path) -> None:
    definition = dict(code.definition)
    if code.name:
        definition.setdefault("name", code.name)
    Path(path).write_text(json.dumps(definition, indent=2) + "\n")
