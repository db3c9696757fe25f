"""Vectorized algebra for products of nonnegative orthants and second-order cones.

Rows are laid out as ``[nonnegative | soc blocks grouped by dimension]``; every
group of equal-dimension cones is handled as one ``(k, d)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConeLayout:
    n_nonneg: int
    soc_dims: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.groups: list[tuple[int, int, int]] = []  # (dim, count, row offset)
        off = self.n_nonneg
        dims = np.asarray(self.soc_dims, dtype=int)
        for d in sorted(set(dims.tolist())):
            k = int((dims == d).sum())
            self.groups.append((d, k, off))
            off += d * k
        self.size = off
        self.degree = self.n_nonneg + len(self.soc_dims)

    def blocks(self, x: np.ndarray):
        """Yield ``(dim, view)`` with ``view`` shaped ``(count, dim)``."""
        for d, k, off in self.groups:
            yield d, x[off:off + d * k].reshape(k, d)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.size)
        e[: self.n_nonneg] = 1.0
        for d, k, off in self.groups:
            e[off:off + d * k:d] = 1.0
        return e

    def margin(self, x: np.ndarray) -> float:
        """Smallest 'eigenvalue' of x; positive iff x lies in the cone interior."""
        vals = [np.inf]
        if self.n_nonneg:
            vals.append(x[: self.n_nonneg].min())
        for _, b in self.blocks(x):
            vals.append((b[:, 0] - np.linalg.norm(b[:, 1:], axis=1)).min())
        return float(min(vals))

    def dot(self, u, v) -> float:
        return float(u @ v)

    def jordan(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.size)
        l = self.n_nonneg
        out[:l] = u[:l] * v[:l]
        for (d, k, off), (_, ub), (_, vb) in zip(self.groups, self.blocks(u), self.blocks(v)):
            ob = out[off:off + d * k].reshape(k, d)
            ob[:, 0] = np.einsum("ij,ij->i", ub, vb)
            ob[:, 1:] = ub[:, :1] * vb[:, 1:] + vb[:, :1] * ub[:, 1:]
        return out

    def jordan_div(self, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = v`` for x."""
        out = np.empty(self.size)
        l = self.n_nonneg
        out[:l] = v[:l] / lam[:l]
        for (d, k, off), (_, lb), (_, vb) in zip(self.groups, self.blocks(lam), self.blocks(v)):
            ob = out[off:off + d * k].reshape(k, d)
            l0, l1 = lb[:, 0], lb[:, 1:]
            det = l0 ** 2 - np.einsum("ij,ij->i", l1, l1)
            x0 = (l0 * vb[:, 0] - np.einsum("ij,ij->i", l1, vb[:, 1:])) / det
            ob[:, 0] = x0
            ob[:, 1:] = (vb[:, 1:] - x0[:, None] * l1) / l0[:, None]
        return out

    def shift_into(self, x: np.ndarray) -> np.ndarray:
        """Return x shifted along e so that it sits strictly inside the cone."""
        m = self.margin(x) if self.size else 1.0
        if m > 1e-8 * max(1.0, float(np.linalg.norm(x))):
            return x.copy()
        return x + (1.0 - m) * self.identity()

    def max_step(self, lam: np.ndarray, d: np.ndarray) -> float:
        """Largest a with lam + a d in the cone (lam interior), +inf if unbounded."""
        best = np.inf
        l = self.n_nonneg
        if l:
            neg = d[:l] < 0
            if neg.any():
                best = min(best, float(np.min(-lam[:l][neg] / d[:l][neg])))
        for (_, lb), (_, db) in zip(self.blocks(lam), self.blocks(d)):
            l0, l1 = lb[:, 0], lb[:, 1:]
            nrm = np.sqrt(l0 ** 2 - np.einsum("ij,ij->i", l1, l1))
            lb0 = l0 / nrm
            lb1 = l1 / nrm[:, None]
            d0, d1 = db[:, 0], db[:, 1:]
            rho0 = (lb0 * d0 - np.einsum("ij,ij->i", lb1, d1)) / nrm
            fac = (rho0 + d0 / nrm) / (lb0 + 1.0)
            rho1 = d1 / nrm[:, None] - fac[:, None] * lb1
            t = np.linalg.norm(rho1, axis=1) - rho0
            pos = t > 0
            if pos.any():
                best = min(best, float(np.min(1.0 / t[pos])))
        return best


@dataclass
class NTScaling:
    """Nesterov-Todd scaling point: W z = W^{-1} s = lam, W symmetric."""
    layout: ConeLayout
    w_lin: np.ndarray            # sqrt(s/z) on the orthant
    eta: list[np.ndarray]        # per soc group, (k,)
    v: list[np.ndarray]          # per soc group, (k, d) with v'Jv = 1
    lam: np.ndarray

    @classmethod
    def compute(cls, layout: ConeLayout, s: np.ndarray, z: np.ndarray) -> "NTScaling":
        l = layout.n_nonneg
        w_lin = np.sqrt(s[:l] / z[:l])
        etas, vs = [], []
        lam = np.empty(layout.size)
        lam[:l] = np.sqrt(s[:l] * z[:l])
        for (d, k, off), (_, sb), (_, zb) in zip(layout.groups, layout.blocks(s), layout.blocks(z)):
            sn = np.sqrt(sb[:, 0] ** 2 - np.einsum("ij,ij->i", sb[:, 1:], sb[:, 1:]))
            zn = np.sqrt(zb[:, 0] ** 2 - np.einsum("ij,ij->i", zb[:, 1:], zb[:, 1:]))
            sbar = sb / sn[:, None]
            zbar = zb / zn[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", sbar, zbar)))
            wbar = sbar.copy()
            wbar[:, 0] += zbar[:, 0]
            wbar[:, 1:] -= zbar[:, 1:]
            wbar /= (2.0 * gamma)[:, None]
            v = wbar.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2.0 * (wbar[:, 0] + 1.0))[:, None]
            eta = np.sqrt(sn / zn)
            etas.append(eta)
            vs.append(v)
        out = cls(layout, w_lin, etas, vs, lam)
        out.lam = out.apply(z)
        out.lam[:l] = np.sqrt(s[:l] * z[:l])
        return out

    def _apply(self, x: np.ndarray, inverse: bool) -> np.ndarray:
        lay = self.layout
        l = lay.n_nonneg
        out = np.empty(lay.size)
        out[:l] = x[:l] / self.w_lin if inverse else x[:l] * self.w_lin
        for (d, k, off), (_, xb), eta, v in zip(lay.groups, lay.blocks(x), self.eta, self.v):
            ob = out[off:off + d * k].reshape(k, d)
            if inverse:
                # W^{-1} = (2 J v v' J - J) / eta
                jv = v.copy()
                jv[:, 1:] *= -1.0
                proj = np.einsum("ij,ij->i", jv, xb)
                ob[:] = 2.0 * proj[:, None] * jv
                ob[:, 0] -= xb[:, 0]
                ob[:, 1:] += xb[:, 1:]
                ob /= eta[:, None]
            else:
                proj = np.einsum("ij,ij->i", v, xb)
                ob[:] = 2.0 * proj[:, None] * v
                ob[:, 0] -= xb[:, 0]
                ob[:, 1:] += xb[:, 1:]
                ob *= eta[:, None]
        return out

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x, inverse=False)

    def apply_inv(self, x: np.ndarray) -> np.ndarray:
        return self._apply(x, inverse=True)

    def squared_blocks(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Diagonal of W^2 on the orthant and dense (k, d, d) W^2 blocks per soc group."""
        diag = self.w_lin ** 2
        mats = []
        for eta, v in zip(self.eta, self.v):
            d = v.shape[1]
            M = 2.0 * v[:, :, None] * v[:, None, :]
            M[:, 0, 0] -= 1.0
            idx = np.arange(1, d)
            M[:, idx, idx] += 1.0
            mats.append((eta ** 2)[:, None, None] * (M @ M))
        return diag, mats
