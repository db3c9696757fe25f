"""Sparse LDL^T factorization for quasi-definite matrices.

Up-looking factorization over an elimination tree (the QDLDL scheme) with a
fill-reducing AMD permutation.  No pivoting is done: the caller supplies the
expected sign of every pivot and tiny or wrong-signed pivots are replaced by a
dynamic regularization term.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from numba import njit

_UNUSED = 0
_USED = 1


@njit(cache=True)
def _etree(n, Ap, Ai, work, Lnz, parent):
    for i in range(n):
        work[i] = -1
        Lnz[i] = 0
        parent[i] = -1
    for j in range(n):
        work[j] = j
        for p in range(Ap[j], Ap[j + 1]):
            i = Ai[p]
            if i > j:
                return -1
            while work[i] != j:
                if parent[i] == -1:
                    parent[i] = j
                Lnz[i] += 1
                work[i] = j
                i = parent[i]
    total = 0
    for i in range(n):
        total += Lnz[i]
    return total


@njit(cache=True)
def _factor(n, Ap, Ai, Ax, Lp, Li, Lx, D, Dinv, Lnz, parent, signs, eps, delta):
    y_markers = np.zeros(n, dtype=np.int8)
    y_vals = np.zeros(n)
    y_idx = np.empty(n, dtype=np.int64)
    elim = np.empty(n, dtype=np.int64)
    next_space = np.empty(n, dtype=np.int64)
    n_bumped = 0
    for i in range(n):
        next_space[i] = Lp[i]

    for k in range(n):
        nnz_y = 0
        D[k] = 0.0
        for p in range(Ap[k], Ap[k + 1]):
            bidx = Ai[p]
            if bidx == k:
                D[k] = Ax[p]
                continue
            y_vals[bidx] = Ax[p]
            nxt = bidx
            if y_markers[nxt] == _UNUSED:
                y_markers[nxt] = _USED
                elim[0] = nxt
                n_e = 1
                nxt = parent[bidx]
                while nxt != -1 and nxt < k:
                    if y_markers[nxt] == _USED:
                        break
                    y_markers[nxt] = _USED
                    elim[n_e] = nxt
                    n_e += 1
                    nxt = parent[nxt]
                while n_e > 0:
                    n_e -= 1
                    y_idx[nnz_y] = elim[n_e]
                    nnz_y += 1
        for q in range(nnz_y - 1, -1, -1):
            c = y_idx[q]
            end = next_space[c]
            yc = y_vals[c]
            for j in range(Lp[c], end):
                y_vals[Li[j]] -= Lx[j] * yc
            Li[end] = k
            Lx[end] = yc * Dinv[c]
            D[k] -= yc * Lx[end]
            next_space[c] += 1
            y_vals[c] = 0.0
            y_markers[c] = _UNUSED
        if signs[k] * D[k] <= eps:
            D[k] = signs[k] * delta
            n_bumped += 1
        Dinv[k] = 1.0 / D[k]
    return n_bumped


@njit(cache=True)
def _solve(n, Lp, Li, Lx, Dinv, x):
    for i in range(n):
        xi = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            x[Li[j]] -= Lx[j] * xi
    for i in range(n):
        x[i] *= Dinv[i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(Lp[i], Lp[i + 1]):
            acc -= Lx[j] * x[Li[j]]
        x[i] = acc


def amd_order(pattern: sp.spmatrix) -> np.ndarray:
    """Approximate minimum degree ordering of a symmetric pattern."""
    from cvxopt import amd, spmatrix

    coo = sp.tril(pattern, format="coo")
    n = pattern.shape[0]
    if coo.nnz == 0:
        return np.arange(n)
    mat = spmatrix(1.0, coo.row.tolist(), coo.col.tolist(), (n, n))
    return np.asarray(amd.order(mat), dtype=np.int64).ravel()


class LDLFactor:
    """Reusable factorization of a fixed-pattern symmetric matrix.

    ``rows``/``cols`` give the coordinate pattern (either triangle or both; values
    on mirrored positions are summed by :meth:`factor` only once per pair because
    entries below the diagonal are discarded).  ``signs`` holds the expected sign
    of each pivot in the original ordering.
    """

    def __init__(self, n: int, rows, cols, signs, *, eps: float = 1e-13,
                 delta: float = 1e-7, perm: np.ndarray | None = None):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self.n = n
        self.eps = eps
        self.delta = delta
        keep = rows <= cols
        diag = np.arange(n)
        full_r = np.concatenate([rows[keep], diag])
        full_c = np.concatenate([cols[keep], diag])
        if perm is None:
            sym = sp.coo_matrix((np.ones(full_r.size), (full_r, full_c)), shape=(n, n))
            perm = amd_order(sym + sym.T)
        self.perm = perm
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        self.iperm = inv
        pr, pc = inv[full_r], inv[full_c]
        ur, uc = np.minimum(pr, pc), np.maximum(pr, pc)
        # collapse duplicates into CSC upper triangle, remembering where each input lands
        key = uc * n + ur
        uniq, dest = np.unique(key, return_inverse=True)
        self._dest_keep = dest[: int(keep.sum())]
        self._keep = keep
        self.nnz = uniq.size
        Ai = (uniq % n).astype(np.int64)
        colidx = (uniq // n).astype(np.int64)
        Ap = np.zeros(n + 1, dtype=np.int64)
        np.add.at(Ap, colidx + 1, 1)
        self.Ap = np.cumsum(Ap)
        self.Ai = Ai
        work = np.empty(n, dtype=np.int64)
        self.Lnz = np.empty(n, dtype=np.int64)
        self.parent = np.empty(n, dtype=np.int64)
        total = _etree(n, self.Ap, self.Ai, work, self.Lnz, self.parent)
        if total < 0:
            raise ValueError("pattern is not upper triangular after permutation")
        self.Lp = np.zeros(n + 1, dtype=np.int64)
        self.Lp[1:] = np.cumsum(self.Lnz)
        self.Li = np.empty(total, dtype=np.int64)
        self.Lx = np.empty(total)
        self.D = np.empty(n)
        self.Dinv = np.empty(n)
        self.signs = np.asarray(signs, dtype=np.float64)[perm]
        self.n_bumped = 0

    @property
    def fill(self) -> int:
        return int(self.Lp[-1])

    def factor(self, values) -> int:
        """Numeric factorization; returns the number of dynamically bumped pivots."""
        values = np.asarray(values, dtype=np.float64)
        Ax = np.bincount(self._dest_keep, weights=values[self._keep], minlength=self.nnz)
        self.n_bumped = _factor(self.n, self.Ap, self.Ai, Ax, self.Lp, self.Li, self.Lx,
                                self.D, self.Dinv, self.Lnz, self.parent, self.signs,
                                self.eps, self.delta)
        return self.n_bumped

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(rhs[self.perm], dtype=np.float64)
        _solve(self.n, self.Lp, self.Li, self.Lx, self.Dinv, x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def inertia(self) -> tuple[int, int]:
        return int((self.D > 0).sum()), int((self.D < 0).sum())
