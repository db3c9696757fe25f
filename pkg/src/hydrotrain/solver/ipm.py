"""Primal-dual interior-point method for sparse SOCPs.

Homogeneous self-dual embedding, Nesterov-Todd scaling and a Mehrotra
predictor-corrector step.  Each iteration factors one quasi-definite KKT matrix

    [ dI   A'   G'          ]
    [ A   -dI               ]
    [ G        -(W'W + dI)  ]

and solves it three times (one constant right-hand side for the embedding
direction, predictor and corrector), each with iterative refinement against the
unregularized matrix.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..conic import ConicProgram
from .cones import ConeLayout, NTScaling
from .ldl import LDLFactor

log = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible-primal", "infeasible-dual",
            "iteration-limit", "numerical-failure")


@dataclass
class SolverSettings:
    max_iterations: int = 200
    feastol: float = 1e-8
    gaptol: float = 1e-8
    step_fraction: float = 0.99
    regularization: float = 1e-7
    dynamic_eps: float = 1e-13
    dynamic_delta: float = 2e-7
    refinement_steps: int = 10
    refinement_tol: float = 1e-13
    infeasibility_tol: float = 1e-8
    log_path: str | None = None
    debug: bool = False

    def __post_init__(self):
        if self.feastol <= 0 or self.gaptol <= 0 or self.regularization < 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.step_fraction < 1.0:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass
class SolveOutcome:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    residuals: dict
    pobj: float = math.nan
    dobj: float = math.nan
    log: list = field(default_factory=list)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _StandardForm:
    """Row permutation/rotation mapping a ConicProgram onto orthant+SOC layout."""

    def __init__(self, program: ConicProgram):
        nonneg, socs = [], []
        for cone in program.cones:
            if cone.kind == "nonneg":
                nonneg.append(cone)
            else:
                socs.append(cone)
        socs.sort(key=lambda k: k.size)  # stable: groups by dimension
        rows, cols, vals = [], [], []
        r = 0
        for cone in nonneg:
            for i in range(cone.size):
                rows.append(r)
                cols.append(cone.start + i)
                vals.append(1.0)
                r += 1
        k = 1.0 / math.sqrt(2.0)
        for cone in socs:
            s0 = cone.start
            if cone.kind == "soc":
                for i in range(cone.size):
                    rows.append(r + i)
                    cols.append(s0 + i)
                    vals.append(1.0)
            else:
                rows += [r, r, r + 1, r + 1]
                cols += [s0, s0 + 1, s0, s0 + 1]
                vals += [k, k, k, -k]
                for i in range(2, cone.size):
                    rows.append(r + i)
                    cols.append(s0 + i)
                    vals.append(1.0)
            r += cone.size
        m = program.n_cone_rows
        self.P = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
        self.layout = ConeLayout(sum(c.size for c in nonneg), [c.size for c in socs])
        self.G = (self.P @ program.G).tocsr()
        self.h = self.P @ program.h

    def back(self, v: np.ndarray) -> np.ndarray:
        return self.P.T @ v


class _KKT:
    def __init__(self, A: sp.csr_matrix, G: sp.csr_matrix, layout: ConeLayout,
                 settings: SolverSettings):
        n = A.shape[1]
        p, m = A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        self.layout = layout
        self.reg = settings.regularization
        self.refine = settings.refinement_steps
        self.refine_tol = settings.refinement_tol
        Ac, Gc = A.tocoo(), G.tocoo()
        r_parts = [np.arange(n), Ac.col, n + np.arange(p), Gc.col,
                   n + p + np.arange(layout.n_nonneg)]
        c_parts = [np.arange(n), n + Ac.row, n + np.arange(p), n + p + Gc.row,
                   n + p + np.arange(layout.n_nonneg)]
        self._fixed = np.concatenate([np.full(n, self.reg), Ac.data, np.full(p, -self.reg),
                                      Gc.data])
        self._soc_idx = []
        for d, k, off in layout.groups:
            a, b = np.triu_indices(d)
            base = n + p + off + d * np.arange(k)[:, None]
            r_parts.append((base + a).ravel())
            c_parts.append((base + b).ravel())
            self._soc_idx.append((a, b))
        signs = np.concatenate([np.ones(n), -np.ones(p + m)])
        self.factor = LDLFactor(n + p + m, np.concatenate(r_parts), np.concatenate(c_parts),
                                signs, eps=settings.dynamic_eps, delta=settings.dynamic_delta)
        self.A, self.G, self.AT, self.GT = A, G, A.T.tocsr(), G.T.tocsr()
        self.scaling: NTScaling | None = None

    def update(self, scaling: NTScaling) -> int:
        self.scaling = scaling
        diag, mats = scaling.squared_blocks()
        parts = [self._fixed, -(diag + self.reg)]
        for (a, b), M in zip(self._soc_idx, mats):
            vals = -M[:, a, b]
            vals[:, a == b] -= self.reg
            parts.append(vals.ravel())
        return self.factor.factor(np.concatenate(parts))

    def _matvec(self, v: np.ndarray) -> np.ndarray:
        n, p = self.n, self.p
        x, y, z = v[:n], v[n:n + p], v[n + p:]
        W = self.scaling
        return np.concatenate([self.AT @ y + self.GT @ z, self.A @ x,
                               self.G @ x - W.apply(W.apply(z))])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = self.factor.solve(rhs)
        res = rhs - self._matvec(sol)
        err = np.abs(res).max(initial=0.0)
        target = self.refine_tol * (1.0 + np.abs(rhs).max(initial=0.0))
        for _ in range(self.refine):
            if err <= target:
                break
            trial = sol + self.factor.solve(res)
            res_t = rhs - self._matvec(trial)
            err_t = np.abs(res_t).max(initial=0.0)
            if not err_t < 0.5 * err:  # stalled
                if err_t < err:
                    sol, res, err = trial, res_t, err_t
                break
            sol, res, err = trial, res_t, err_t
        return sol


def _norm(v) -> float:
    return float(np.linalg.norm(v)) if v.size else 0.0


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> SolveOutcome:
    """Solve ``program`` to the tolerances in ``settings``."""
    settings = settings or SolverSettings()
    std = _StandardForm(program)
    A, b, c = program.A, program.b, program.c
    G, h, lay = std.G, std.h, std.layout
    n, p, m = program.n, program.n_eq, program.n_cone_rows
    kkt = _KKT(A, G, lay, settings)
    nb, nh, nc = _norm(b), _norm(h), _norm(c)
    e = lay.identity()
    deg = lay.degree
    records: list[dict] = []
    sink = open(settings.log_path, "w", encoding="utf-8") if settings.log_path else None

    def finish(status, x, y, z, s, it, res, pobj=math.nan, dobj=math.nan, msg=""):
        if sink:
            sink.close()
        return SolveOutcome(status, x, y, std.back(z), std.back(s), it, res, pobj, dobj,
                            records, msg)

    # --- initial point -------------------------------------------------------
    ones = NTScaling(lay, np.ones(lay.n_nonneg), [np.ones(k) for _, k, _ in lay.groups],
                     [np.tile(np.eye(1, d).ravel(), (k, 1)) for d, k, _ in lay.groups], e)
    try:
        kkt.update(ones)
        sol = kkt.solve(np.concatenate([np.zeros(n), b, h]))
        x = sol[:n]
        s = lay.shift_into(h - G @ x) if m else np.zeros(0)
        sol = kkt.solve(np.concatenate([-c, np.zeros(p + m)]))
        y = sol[n:n + p]
        z = lay.shift_into(sol[n + p:]) if m else np.zeros(0)
    except (ZeroDivisionError, FloatingPointError) as err:  # pragma: no cover
        return finish("numerical-failure", np.zeros(n), np.zeros(p), np.zeros(m),
                      np.zeros(m), 0, {}, msg=str(err))
    tau, kappa = 1.0, 1.0
    cbh = np.concatenate([c, b, h])
    q_tau = np.concatenate([-c, b, h])

    best = None
    for it in range(settings.max_iterations + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rt = c @ x + b @ y + h @ z + kappa
        sz = float(s @ z)
        mu = (sz + tau * kappa) / (deg + 1)

        pcost = float(c @ x) / tau
        dcost = -float(b @ y + h @ z) / tau
        pres = max(_norm(ry) / tau / (1.0 + nb), _norm(rz) / tau / (1.0 + nh))
        dres = _norm(rx) / tau / (1.0 + nc)
        gap = sz / tau ** 2 / (1.0 + abs(pcost) + abs(dcost))
        slack = (abs(x @ rx) + abs(y @ ry) + abs(z @ rz)) / tau ** 2
        rec = {"iter": it, "mu": mu, "pres": pres, "dres": dres, "gap": gap,
               "pcost": pcost, "dcost": dcost, "tau": tau, "kappa": kappa,
               "wd_slack": slack}
        residuals = {"primal": pres, "dual": dres, "gap": gap}
        if settings.debug and m:
            assert lay.margin(s) > 0 and lay.margin(z) > 0, "iterate left the cone"

        if pres <= settings.feastol and dres <= settings.feastol and gap <= settings.gaptol:
            records.append(rec)
            _emit(sink, rec)
            return finish("optimal", x / tau, y / tau, z / tau, s / tau, it, residuals,
                          pcost, dcost)
        # infeasibility certificates
        byhz = float(b @ y + h @ z)
        if byhz < 0 and tau < kappa:
            pinf = _norm(A.T @ y + G.T @ z) / -byhz
            if pinf <= settings.infeasibility_tol:
                records.append(rec)
                _emit(sink, rec)
                return finish("infeasible-primal", x, y / -byhz, z / -byhz, s, it,
                              residuals, msg=f"certificate residual {pinf:.2e}")
        cx = float(c @ x)
        if cx < 0 and tau < kappa:
            dinf = max(_norm(A @ x), _norm(G @ x + s)) / -cx
            if dinf <= settings.infeasibility_tol:
                records.append(rec)
                _emit(sink, rec)
                return finish("infeasible-dual", x / -cx, y, z, s / -cx, it, residuals,
                              msg=f"certificate residual {dinf:.2e}")
        if best is None or max(pres, dres, gap) < best[0]:
            best = (max(pres, dres, gap), x / tau, y / tau, z / tau, s / tau, residuals,
                    pcost, dcost)
        if it == settings.max_iterations:
            records.append(rec)
            _emit(sink, rec)
            break

        # --- search directions -----------------------------------------------
        W = NTScaling.compute(lay, s, z)
        lam = W.lam
        try:
            bumped = kkt.update(W)
            u1 = kkt.solve(q_tau)
        except (FloatingPointError, ZeroDivisionError) as err:  # pragma: no cover
            return finish("numerical-failure", x / tau, y / tau, z / tau, s / tau, it,
                          residuals, msg=str(err))
        den_base = float(cbh @ u1) - kappa / tau

        def direction(dx_r, dy_r, dz_r, dt_r, ds_r, dk_r):
            lam_ds = lay.jordan_div(lam, ds_r)
            rhs = np.concatenate([dx_r, dy_r, dz_r - W.apply(lam_ds)])
            u2 = kkt.solve(rhs)
            dtau = (dt_r - dk_r / tau - float(cbh @ u2)) / den_base
            u = u2 + dtau * u1
            dx, dy, dz = u[:n], u[n:n + p], u[n + p:]
            ds = W.apply(lam_ds - W.apply(dz))
            dkap = (dk_r - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkap

        def step_len(dz, ds, dtau, dkap):
            # scaled directions keep the ratio test well conditioned
            a = min(lay.max_step(lam, W.apply_inv(ds)), lay.max_step(lam, W.apply(dz)))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        lamsq = lay.jordan(lam, lam)
        aff = direction(-rx, -ry, -rz, -rt, -lamsq, -tau * kappa)
        a_aff = min(1.0, step_len(aff[2], aff[3], aff[4], aff[5]))
        sigma = min(1.0, max(0.0, (1.0 - a_aff))) ** 3
        corr = lay.jordan(W.apply_inv(aff[3]), W.apply(aff[2]))
        ds_r = -lamsq - corr + sigma * mu * e
        dk_r = -tau * kappa - aff[4] * aff[5] + sigma * mu
        g = 1.0 - sigma
        dx, dy, dz, ds, dtau, dkap = direction(-g * rx, -g * ry, -g * rz, -g * rt, ds_r, dk_r)
        alpha = min(1.0, settings.step_fraction * step_len(dz, ds, dtau, dkap))
        rec.update(alpha=alpha, sigma=sigma, alpha_aff=a_aff, reg_bumps=bumped)
        records.append(rec)
        _emit(sink, rec)
        if not np.isfinite(alpha) or alpha < 1e-12:
            return finish("numerical-failure", best[1], best[2], best[3], best[4], it,
                          best[5], best[6], best[7], msg="step length collapsed")
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkap
        if not (np.isfinite(tau) and tau > 0 and kappa > 0):
            return finish("numerical-failure", best[1], best[2], best[3], best[4], it,
                          best[5], best[6], best[7], msg="embedding variables lost sign")

    return finish("iteration-limit", best[1], best[2], best[3], best[4],
                  settings.max_iterations, best[5], best[6], best[7])


def _emit(sink, rec):
    if sink is not None:
        sink.write(json.dumps(rec) + "\n")
