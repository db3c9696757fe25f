"""Sparse conic program container and its plain-text exchange format.

A program is::

    minimize    c'x
    subject to  A x = b
                h - G x in K = K_1 x ... x K_r

where each ``K_j`` is declared over a contiguous block of rows of ``G``:

* ``nonneg``  -- componentwise ``>= 0``
* ``soc``     -- ``(t, x)`` with ``t >= ||x||``
* ``rsoc``    -- ``(u, w, x)`` with ``2 u w >= ||x||^2``, ``u, w >= 0``

Text format (whitespace separated, ``#`` starts a comment)::

    conic 1
    dims <n> <p> <m>
    objective <nnz>          followed by nnz lines "col value"
    offset <value>
    A <nnz>                  followed by nnz lines "row col value"
    b <nnz>                  followed by nnz lines "row value"
    G <nnz>                  followed by nnz lines "row col value"
    h <nnz>                  followed by nnz lines "row value"
    cones <r>                followed by r lines "kind start size"
    end

Indices are zero based.  Values are written with 17 significant digits so a
round trip is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

CONE_KINDS = ("nonneg", "soc", "rsoc")


@dataclass(frozen=True)
class Cone:
    kind: str
    start: int
    size: int

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.kind == "soc" and self.size < 1:
            raise ValueError("soc needs at least one row")
        if self.kind == "rsoc" and self.size < 2:
            raise ValueError("rsoc needs at least two rows")

    @property
    def rows(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cones: list[Cone]
    offset: float = 0.0
    # name -> column indices (interval order); filled by the program builder
    index: dict[str, np.ndarray] = field(default_factory=dict)
    # x_physical = col_scale * x ; objective_physical = (c'x + offset) / obj_scale
    col_scale: np.ndarray | None = None
    obj_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.A = sp.csr_matrix(self.A)
        self.G = sp.csr_matrix(self.G)
        n = self.c.size
        if self.A.shape != (self.b.size, n) or self.G.shape != (self.h.size, n):
            raise ValueError(
                f"dimension mismatch: c {n}, A {self.A.shape}, b {self.b.size}, "
                f"G {self.G.shape}, h {self.h.size}")
        covered = np.zeros(self.h.size, dtype=int)
        for cone in self.cones:
            covered[cone.rows] += 1
        if (covered != 1).any():
            raise ValueError("every row of G must belong to exactly one cone")
        if self.col_scale is None:
            self.col_scale = np.ones(n)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.b.size

    @property
    def n_cone_rows(self) -> int:
        return self.h.size

    def slack(self, x: np.ndarray) -> np.ndarray:
        return self.h - self.G @ x

    def physical(self, x: np.ndarray) -> np.ndarray:
        return self.col_scale * x

    def objective(self, x: np.ndarray) -> float:
        """Objective in physical units for a (scaled) primal vector."""
        return float((self.c @ x + self.offset) / self.obj_scale)

    def cone_margin(self, s: np.ndarray) -> np.ndarray:
        """Per-cone membership margin (>= 0 means inside)."""
        out = np.empty(len(self.cones))
        for j, cone in enumerate(self.cones):
            v = s[cone.rows]
            if cone.kind == "nonneg":
                out[j] = v.min()
            elif cone.kind == "soc":
                out[j] = v[0] - np.linalg.norm(v[1:])
            else:
                u, w, rest = v[0], v[1], v[2:]
                # distance-like margin of the rotated cone via its standard-cone image
                t, r = (u + w) / np.sqrt(2.0), (u - w) / np.sqrt(2.0)
                out[j] = t - np.hypot(r, np.linalg.norm(rest))
        return out


def _triplets(mat: sp.spmatrix):
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    return coo.row[order], coo.col[order], coo.data[order]


def write_text(program: ConicProgram, path: str | Path) -> None:
    fmt = "{:.17g}"
    lines = ["conic 1", f"dims {program.n} {program.n_eq} {program.n_cone_rows}"]
    nz = np.flatnonzero(program.c)
    lines.append(f"objective {nz.size}")
    lines += [f"{j} {fmt.format(program.c[j])}" for j in nz]
    lines.append(f"offset {fmt.format(program.offset)}")
    for name, mat, vec in (("A", program.A, program.b), ("G", program.G, program.h)):
        r, c, v = _triplets(mat)
        lines.append(f"{name} {r.size}")
        lines += [f"{i} {j} {fmt.format(x)}" for i, j, x in zip(r, c, v)]
        vn = np.flatnonzero(vec)
        lines.append(f"{'b' if name == 'A' else 'h'} {vn.size}")
        lines += [f"{i} {fmt.format(vec[i])}" for i in vn]
    lines.append(f"cones {len(program.cones)}")
    lines += [f"{k.kind} {k.start} {k.size}" for k in program.cones]
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_text(path: str | Path) -> ConicProgram:
    tokens: list[str] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        raw = raw.split("#", 1)[0]
        tokens.extend(raw.split())
    it = iter(tokens)

    def expect(word):
        got = next(it)
        if got != word:
            raise ValueError(f"expected {word!r}, found {got!r}")

    expect("conic")
    if next(it) != "1":
        raise ValueError("unsupported conic format version")
    expect("dims")
    n, p, m = int(next(it)), int(next(it)), int(next(it))
    expect("objective")
    c = np.zeros(n)
    for _ in range(int(next(it))):
        j = int(next(it))
        c[j] = float(next(it))
    expect("offset")
    offset = float(next(it))

    def matrix(name, rows):
        expect(name)
        k = int(next(it))
        r, cc, v = np.empty(k, int), np.empty(k, int), np.empty(k)
        for t in range(k):
            r[t], cc[t], v[t] = int(next(it)), int(next(it)), float(next(it))
        return sp.csr_matrix((v, (r, cc)), shape=(rows, n))

    def vector(name, size):
        expect(name)
        out = np.zeros(size)
        for _ in range(int(next(it))):
            i = int(next(it))
            out[i] = float(next(it))
        return out

    A = matrix("A", p)
    b = vector("b", p)
    G = matrix("G", m)
    h = vector("h", m)
    expect("cones")
    cones = [Cone(next(it), int(next(it)), int(next(it))) for _ in range(int(next(it)))]
    expect("end")
    return ConicProgram(c=c, A=A, b=b, G=G, h=h, cones=cones, offset=offset)


def _inf_norms(mat: sp.csr_matrix, axis: int) -> np.ndarray:
    out = abs(mat).max(axis=axis).toarray().ravel()
    return out


def _rsoc_scales(norms: np.ndarray) -> np.ndarray:
    """Row factors for rotated cones stacked as ``(k, d)`` row norms.

    ``(u, w, s) -> (a u, b w, sqrt(ab) s)`` keeps ``2 u w >= ||s||^2``, so ``a``
    and ``b`` are chosen by least squares in log space against the ideal
    factors ``1/norm`` of the u row, the w row and the largest s row.  Rows
    with zero norm carry no weight.
    """
    nu, nw = norms[:, 0], norms[:, 1]
    ns = norms[:, 2:].max(axis=1) if norms.shape[1] > 2 else np.zeros(len(norms))
    t = [np.where(n > 0, -np.log(np.where(n > 0, n, 1.0)), 0.0) for n in (nu, nw, ns)]
    wts = [(n > 0).astype(float) for n in (nu, nw, ns)]
    # normal equations for (la, lb); tiny ridge keeps all-empty cones at 1
    r = 1e-12
    a11 = wts[0] + 0.25 * wts[2] + r
    a22 = wts[1] + 0.25 * wts[2] + r
    a12 = 0.25 * wts[2]
    b1 = wts[0] * t[0] + 0.5 * wts[2] * t[2]
    b2 = wts[1] * t[1] + 0.5 * wts[2] * t[2]
    det = a11 * a22 - a12 * a12
    la = (a22 * b1 - a12 * b2) / det
    lb = (a11 * b2 - a12 * b1) / det
    out = np.empty_like(norms)
    out[:, 0] = np.exp(la)
    out[:, 1] = np.exp(lb)
    out[:, 2:] = np.exp(0.5 * (la + lb))[:, None]
    return out


def equilibrate(program: ConicProgram, typical: np.ndarray | None = None) -> ConicProgram:
    """Diagonal scaling of ``[A; G]`` plus objective normalisation.

    Columns are divided into units of ``typical`` (expected magnitude of each
    variable at a solution), so scaled iterates stay near one.  Rows are then
    normalised to unit infinity norm: rows of ``A`` and of the orthant
    independently, standard second-order cones by their block maximum, and
    rotated cones through their two-parameter freedom (:func:`_rsoc_scales`).
    Constant-only cone rows (such as the 1/2 of ``z >= v^2``) use ``|h|``.
    Returns a new program whose ``col_scale``/``obj_scale`` map back to
    physical quantities.
    """
    A, G = program.A.tocsr(), program.G.tocsr()
    d = np.ones(program.n) if typical is None else np.asarray(typical, dtype=float)
    if d.shape != (program.n,) or not (d > 0).all():
        raise ValueError("typical magnitudes must be positive, one per column")
    A = A @ sp.diags(d)
    G = G @ sp.diags(d)
    ra = _inf_norms(A, 1) if A.shape[0] else np.zeros(0)
    e_a = 1.0 / np.where(ra > 0, ra, 1.0)
    m = G.shape[0]
    rg = _inf_norms(G, 1) if m else np.zeros(0)
    anchored = np.where(rg > 0, rg, np.abs(program.h))
    anchored = np.where(anchored > 0, anchored, 1.0)
    e_g = 1.0 / anchored
    rsoc_groups: dict[int, list[int]] = {}
    for cone in program.cones:
        if cone.kind == "soc":
            e_g[cone.rows] = 1.0 / anchored[cone.rows].max()
        elif cone.kind == "rsoc":
            rsoc_groups.setdefault(cone.size, []).append(cone.start)
    for k, starts in rsoc_groups.items():
        rows = np.asarray(starts)[:, None] + np.arange(k)
        e_g[rows] = _rsoc_scales(anchored[rows])
    c = program.c * d
    cmax = np.abs(c).max(initial=0.0)
    obj = 1.0 / cmax if cmax > 0 else 1.0
    return ConicProgram(c=c * obj, A=sp.diags(e_a) @ A, b=e_a * program.b,
                        G=sp.diags(e_g) @ G, h=e_g * program.h, cones=program.cones,
                        offset=program.offset * obj, index=program.index,
                        col_scale=program.col_scale * d, obj_scale=program.obj_scale * obj,
                        meta=dict(program.meta, row_scale_A=e_a, row_scale_G=e_g))
