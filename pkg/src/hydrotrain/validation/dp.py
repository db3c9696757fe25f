"""Brute-force dynamic-programming oracle on small instances.

The oracle searches the *unrelaxed* discrete model: ``z = v^2`` and
``v lambda_v = 1`` hold with equality, the power balance is an equality, and the
SOC change follows ``lambda_zeta lambda_v = alpha F_batt^2 ds`` exactly.  Every
DP path is therefore a feasible point of the non-convex problem whose convex
relaxation the program solves, so the convex optimum is a lower bound on the DP
fuel.

Grids:

* speed: harmonic, ``v = ds / (m q)`` for integer ``m`` in ``[m_lo, m_hi]``,
  so each interval takes a whole number of time quanta ``q`` and the journey
  time can be met exactly;
* SOC: uniform around ``zeta_0``.

Controls are transitions to the next node's grid values; motor/brake forces
and the battery force are solved from them.  Refining with :meth:`DPGrid.refined`
halves ``q`` and the SOC step, which keeps every coarse node, so refinement
never increases the DP fuel.

The battery temperature is not a DP state: the oracle is meant for short
instances where the thermal bound is slack, which is verified on the returned
path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..params import G as GRAVITY
from ..params import ScenarioConfig, TrainParameters
from ..route import RouteProfile
from ..surrogates import SurrogateSet

INF = np.inf


class DPError(ValueError):
    """Instance unsupported by the oracle or no feasible grid path."""


@dataclass(frozen=True)
class DPGrid:
    time_quantum: float = 0.5       # s
    m_lo: int = 5                   # fastest speed ds / (m_lo q)
    m_hi: int = 25                  # slowest speed ds / (m_hi q)
    soc_points: int = 21
    soc_halfwidth: float = 0.01

    def __post_init__(self):
        if not (self.time_quantum > 0 and 1 <= self.m_lo < self.m_hi):
            raise DPError("invalid speed grid")
        if self.soc_points < 1 or self.soc_points % 2 == 0:
            raise DPError("soc_points must be odd so that zeta_0 is a node")

    def refined(self) -> "DPGrid":
        return DPGrid(self.time_quantum / 2, 2 * self.m_lo, 2 * self.m_hi,
                      2 * self.soc_points - 1, self.soc_halfwidth)

    def speeds(self, delta_s: float) -> tuple[np.ndarray, np.ndarray]:
        m = np.arange(self.m_lo, self.m_hi + 1)
        return m, delta_s / (m * self.time_quantum)

    def socs(self, zeta_0: float) -> np.ndarray:
        if self.soc_points == 1:
            return np.array([zeta_0])
        return zeta_0 + np.linspace(-self.soc_halfwidth, self.soc_halfwidth, self.soc_points)


@dataclass
class DPResult:
    fuel: float                 # J
    v: np.ndarray               # node speeds, N + 1
    zeta: np.ndarray            # N + 1
    T_batt: np.ndarray          # N + 1, tight split and no cooling
    Fm: np.ndarray
    Fbrk: np.ndarray
    Fbatt: np.ndarray
    Ffc: np.ndarray
    journey_time: float
    n_states: int


def _uniform(route: RouteProfile) -> float:
    if route.is_dwell.any():
        raise DPError("the oracle supports running intervals only")
    ds = route.delta_s
    if not np.allclose(ds, ds[0], rtol=1e-12):
        raise DPError("the oracle needs uniform interval lengths")
    return float(ds[0])


def _grid_index(values: np.ndarray, target: float, what: str) -> int:
    k = int(np.argmin(np.abs(values - target)))
    if abs(values[k] - target) > 1e-9 * max(1.0, abs(target)):
        raise DPError(f"{what} {target:g} is not a grid node")
    return k


def stage_costs(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
                surrogates: SurrogateSet, grid: DPGrid):
    """Fuel of every grid transition, ``cost[i, k, k2, dj]`` (inf if infeasible),
    plus the forces that realise it."""
    P = params
    ds = _uniform(route)
    N = route.n_intervals
    m, v = grid.speeds(ds)
    K = v.size
    zs = grid.socs(scenario.zeta_0)
    Z = zs.size
    step = zs[1] - zs[0] if Z > 1 else 1.0
    dj = np.arange(-(Z - 1), Z)
    dzeta = -dj * step                      # positive dzeta discharges (zeta falls)
    qm, qf, bat = surrogates.motor, surrogates.fuel_cell, surrogates.battery

    v1 = v[:, None]
    z1, z2 = v1 ** 2, (v ** 2)[None, :]
    lv = 1.0 / v1
    # battery force from the exact SOC relation  alpha ds v F^2 + beta ds F = dzeta
    a = bat.alpha * ds * v1[..., None]
    b = bat.beta * ds
    disc = b * b + 4.0 * a * dzeta[None, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        root = np.sqrt(np.where(disc >= 0, disc, np.nan))
        Fb = np.where(a > 0, 2.0 * dzeta[None, None, :] / (b + root), dzeta[None, None, :] / b)
    Fb = np.broadcast_to(Fb, (K, 1, dj.size))[:, 0, :]          # (K, D)
    batt_ok = (disc[:, 0, :] >= 0) & (Fb >= P.P_batt_min * lv) & (Fb <= P.P_batt_max * lv)

    cost = np.full((N, K, K, dj.size), INF)
    Fm_all = np.zeros((N, K, K))
    Fbrk_all = np.zeros((N, K, K))
    vmax = route.array("v_max")
    vmin = np.maximum(route.array("v_min"), scenario.v_stop)
    for i, iv in enumerate(route.intervals):
        ext = P.davis_a + P.davis_b * v1 + P.davis_c * z1 + P.m * GRAVITY * math.sin(iv.grade_angle)
        F = 0.5 * P.m_eq * (z2 - z1) / ds + ext                 # (K, K) total tractive force
        lo = np.maximum(P.F_m_min, P.P_m_min * lv)
        hi = np.minimum(P.F_m_max, P.P_m_max * lv)
        Fm = np.clip(F, lo, hi)                                 # regenerate as much as allowed
        Fbrk = F - Fm
        ok = (F <= hi) & (Fbrk >= P.F_brk_min) & (Fbrk <= 0.0)
        ok &= (v1 >= vmin[i] * (1 - 1e-12)) & (v1 <= vmax[i] * (1 + 1e-12))
        Fm_all[i], Fbrk_all[i] = Fm, Fbrk
        demand = qm(Fm, z1) + P.P_aux * lv                      # (K, K)
        Ffc = demand[:, :, None] - Fb[:, None, :]               # (K, K, D)
        lvb = lv[:, :, None]
        fc_ok = (Ffc >= P.P_fc_min * lvb) & (Ffc <= P.P_fc_max * lvb)
        feas = ok[:, :, None] & fc_ok & batt_ok[:, None, :]
        fuel = qf(Ffc, z1[:, :, None]) * ds
        cost[i] = np.where(feas, fuel, INF)
    return cost, Fm_all, Fbrk_all, Fb, m, v, zs


@njit(cache=True)
def _forward(cost, m_of, Z, T_total, k0, j0, k_end, j_end):
    N, K, _, D = cost.shape
    half = Z - 1
    m_min = m_of.min()
    m_max = m_of.max()
    V = np.full((K, T_total + 1, Z), np.inf)
    V[k0, 0, j0] = 0.0
    pred = np.full((N, K, T_total + 1, Z), -1, np.int64)
    n_states = 0
    for i in range(N):
        W = np.full((K, T_total + 1, Z), np.inf)
        rest = N - i - 1
        for k in range(K):
            mk = m_of[k]
            for t in range(T_total + 1 - mk):
                t2 = t + mk
                if t2 + rest * m_min > T_total or t2 + rest * m_max < T_total:
                    continue
                for j in range(Z):
                    v0 = V[k, t, j]
                    if v0 == np.inf:
                        continue
                    n_states += 1
                    for k2 in range(K):
                        if i == N - 1 and k2 != k_end:
                            continue
                        for d in range(D):
                            j2 = j + d - half
                            if j2 < 0 or j2 >= Z:
                                continue
                            if i == N - 1 and j2 != j_end:
                                continue
                            c = cost[i, k, k2, d]
                            if c == np.inf:
                                continue
                            val = v0 + c
                            if val < W[k2, t2, j2]:
                                W[k2, t2, j2] = val
                                pred[i, k2, t2, j2] = (k * (T_total + 1) + t) * Z + j
        V = W
    return V[k_end, T_total, j_end], pred, n_states


def dp_oracle(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
              surrogates: SurrogateSet, grid: DPGrid | None = None) -> DPResult:
    """Best grid trajectory of the unrelaxed discrete model (fuel in J)."""
    grid = grid or DPGrid()
    N = route.n_intervals
    if not 1 <= N <= 30:
        raise DPError("the oracle is limited to 1..30 intervals")
    ds = _uniform(route)
    cost, Fm_all, Fbrk_all, Fb, m, v, zs = stage_costs(route, params, scenario, surrogates, grid)
    T_total = scenario.tau / grid.time_quantum
    if abs(T_total - round(T_total)) > 1e-9 * T_total:
        raise DPError("tau must be a whole number of time quanta")
    T_total = int(round(T_total))
    k0 = _grid_index(v, scenario.v_start, "initial speed")
    k_end = _grid_index(v, scenario.v_end, "terminal speed")
    j0 = (zs.size - 1) // 2
    best, pred, n_states = _forward(cost, m.astype(np.int64), zs.size, T_total, k0, j0, k_end, j0)
    if not np.isfinite(best):
        raise DPError("no feasible grid trajectory")

    # walk back
    ks = np.empty(N + 1, np.int64)
    js = np.empty(N + 1, np.int64)
    ks[N], js[N] = k_end, j0
    t = T_total
    for i in range(N - 1, -1, -1):
        code = pred[i, ks[i + 1], t, js[i + 1]]
        js[i] = code % zs.size
        t = (code // zs.size) % (T_total + 1)
        ks[i] = code // zs.size // (T_total + 1)
    half = zs.size - 1
    idx = np.arange(N)
    dsel = js[1:] - js[:-1] + half
    Fbatt = Fb[ks[:-1], dsel]
    Fm = Fm_all[idx, ks[:-1], ks[1:]]
    Fbrk = Fbrk_all[idx, ks[:-1], ks[1:]]
    vv = v[ks]
    lv = 1.0 / vv[:-1]
    Ffc = surrogates.motor(Fm, vv[:-1] ** 2) + params.P_aux * lv - Fbatt
    T = _temperature(Fbatt, lv, ds, params, scenario)
    if T.max() > params.T_batt_max:
        raise DPError("temperature bound binds on the DP path; the oracle does not model cooling")
    return DPResult(fuel=float(best), v=vv, zeta=zs[js], T_batt=T, Fm=Fm, Fbrk=Fbrk,
                    Fbatt=Fbatt, Ffc=Ffc, journey_time=float(np.sum(ds * lv)),
                    n_states=int(n_states))


def _temperature(Fbatt, lv, ds, P: TrainParameters, sc: ScenarioConfig) -> np.ndarray:
    T = np.empty(Fbatt.size + 1)
    T[0] = sc.T_batt_0
    gen = np.where(Fbatt > 0, (1 - P.eta_dis) * Fbatt, -(1 - P.eta_chr) * Fbatt)
    for i in range(Fbatt.size):
        T[i + 1] = T[i] + ds / P.heat_capacity * (gen[i] - P.h_amb * (T[i] - sc.T_amb) * lv[i])
    return T
