"""Assembly of the space-domain SOCP.

Per interval ``i`` the concurrent program carries

    z, v, lv, lz, dzeta, zeta, T, dT, Fm, Fbrk, Ffc, Fbatt, Fdis, Fchr, Qc

(``lv = 1/v`` relaxed, ``lz`` the SOC auxiliary), an epigraph variable ``t``
bounding the interval's fuel energy, and the terminal states ``z_N``,
``zeta_N``, ``T_N``.  State columns in :attr:`ConicProgram.index` therefore have
``N + 1`` entries.  The sequential program drops every thermal variable.

Relaxed constraint families, all as rotated cones ``2 u w >= ||s||^2``:

* ``v_lv``:    (v, lv, sqrt 2)                       ->  v lv >= 1
* ``z_v``:     (z, 1/2, v)                           ->  z >= v^2
* ``balance``: (Ffc + Fbatt - Qc/cop - Paux lv - p00 - p10 z - p01 Fm, 1/2,
                sqrt(p20) z, sqrt(p02) Fm)
* ``soc``:     (lz, lv, sqrt(2 alpha ds) Fbatt)      ->  lz lv >= alpha Fbatt^2 ds
* ``fuel``:    (t - ds (p00' + p10' z + p01' Ffc), 1/2, sqrt(ds p20') z, sqrt(ds p02') Ffc)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .conic import Cone, ConicProgram, equilibrate
from .params import G as GRAVITY
from .params import ScenarioConfig, TrainParameters
from .route import RouteProfile
from .surrogates import SurrogateSet

INTERVAL_VARS = ("z", "v", "lv", "lz", "dzeta", "zeta", "T", "dT", "Fm", "Fbrk", "Ffc",
                 "Fbatt", "Fdis", "Fchr", "Qc")
THERMAL_VARS = ("T", "dT", "Fdis", "Fchr", "Qc")
STATE_VARS = ("z", "zeta", "T")
RELAXED_FAMILIES = ("v_lv", "z_v", "balance", "soc")

# expected solution magnitudes; columns are scaled into these units
_TYPICAL = {"z": 400.0, "v": 20.0, "lv": 0.05, "lz": 1e-5, "dzeta": 1e-3, "zeta": 0.05,
            "T": 30.0, "dT": 0.03, "Fm": 2e4, "Fbrk": 2e4, "Ffc": 1e4, "Fbatt": 1e4,
            "Fdis": 1e4, "Fchr": 1e4, "Qc": 750.0, "t": 2e5}


class BuildError(ValueError):
    """Inconsistent route, parameters, scenario or surrogates."""


class ScheduleError(BuildError):
    """The journey time cannot be met (detected before solving)."""


class ConvexityError(BuildError):
    """A surrogate is not convex in the lifted variables."""


def compute_average_delta_t(route: RouteProfile, tau: float) -> float:
    """Average time per metre (s/m) over the running intervals.

    Dwell intervals use their exact ``1/v_stop``; the remaining journey time is
    spread over the running track length.
    """
    dwell = route.total_dwell
    if not tau > dwell:
        raise ScheduleError(f"journey time {tau:g} s does not exceed total dwell {dwell:g} s")
    running = float(sum(iv.delta_s for iv in route.intervals if not iv.is_dwell))
    if running <= 0:
        raise BuildError("route has no running intervals")
    return (tau - dwell) / running


def external_force(v, z, grade, params: TrainParameters, is_dwell=False):
    """Davis resistance plus gravity, ``a + b v + c z + m g sin(grade)``; zero on dwells."""
    f = (params.davis_a + params.davis_b * np.asarray(v, dtype=float)
         + params.davis_c * np.asarray(z, dtype=float)
         + params.m * GRAVITY * np.sin(np.asarray(grade, dtype=float)))
    return np.where(is_dwell, 0.0, f)


class _Assembler:
    """Collects sparse rows for ``A x = b`` and ``h - G x in K``."""

    def __init__(self):
        self.n = 0
        self.index: dict[str, np.ndarray] = {}
        self._a: list[tuple] = []
        self._b: list[np.ndarray] = []
        self.p = 0
        self._g: list[tuple] = []
        self._h: list[tuple] = []
        self.m = 0
        self.cones: list[Cone] = []
        self.families: dict[str, np.ndarray] = {}

    def var(self, name: str, count: int) -> np.ndarray:
        cols = np.arange(self.n, self.n + count)
        self.n += count
        self.index[name] = cols
        return cols

    @staticmethod
    def _terms(terms, k):
        for cols, vals in terms:
            cols = np.broadcast_to(np.asarray(cols, dtype=np.int64), (k,))
            vals = np.broadcast_to(np.asarray(vals, dtype=float), (k,))
            yield cols, vals

    def eq(self, terms, rhs, k: int):
        """``k`` rows of ``sum(vals * x[cols]) = rhs``."""
        rows = self.p + np.arange(k)
        for cols, vals in self._terms(terms, k):
            self._a.append((rows, cols, vals))
        self._b.append(np.broadcast_to(np.asarray(rhs, dtype=float), (k,)).copy())
        self.p += k

    def le(self, terms, rhs, k: int):
        """``k`` orthant rows of ``sum(vals * x[cols]) <= rhs``."""
        rows = self.m + np.arange(k)
        for cols, vals in self._terms(terms, k):
            self._g.append((rows, cols, vals))
        self._h.append((rows, np.broadcast_to(np.asarray(rhs, dtype=float), (k,)).copy()))
        self.m += k

    def eq_row(self, cols, vals, rhs: float):
        """One dense equality row ``sum(vals * x[cols]) = rhs``."""
        cols = np.asarray(cols, dtype=np.int64)
        self._a.append((np.full(cols.size, self.p), cols,
                        np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)))
        self._b.append(np.array([rhs], dtype=float))
        self.p += 1

    def rsoc(self, family: str, slots, k: int):
        """``k`` rotated cones; each slot is ``(terms, constant)`` giving one entry."""
        d = len(slots)
        base = self.m + d * np.arange(k)
        for j, (terms, const) in enumerate(slots):
            rows = base + j
            for cols, vals in self._terms(terms, k):
                self._g.append((rows, cols, -vals))
            h = np.zeros(k) + np.broadcast_to(np.asarray(const, dtype=float), (k,))
            self._h.append((rows, h))
        self.cones.extend(Cone("rsoc", int(r), d) for r in base)
        self.families[family] = base
        self.m += d * k

    def finish(self, c: np.ndarray) -> ConicProgram:
        def mat(parts, nrows):
            if not parts:
                return sp.csr_matrix((nrows, self.n))
            r = np.concatenate([p[0] for p in parts])
            cc = np.concatenate([p[1] for p in parts])
            v = np.concatenate([p[2] for p in parts])
            keep = v != 0
            return sp.csr_matrix((v[keep], (r[keep], cc[keep])), shape=(nrows, self.n))

        b = np.concatenate(self._b) if self._b else np.zeros(0)
        h = np.zeros(self.m)
        for rows, vals in self._h:
            h[rows] = vals
        orth_rows = np.ones(self.m, dtype=bool)
        for cone in self.cones:
            orth_rows[cone.rows] = False
        cones = list(self.cones)
        # orthant rows are interleaved with cone blocks: declare each maximal run
        start = None
        for i in range(self.m + 1):
            inside = i < self.m and orth_rows[i]
            if inside and start is None:
                start = i
            elif not inside and start is not None:
                cones.append(Cone("nonneg", start, i - start))
                start = None
        cones.sort(key=lambda k: k.start)
        return ConicProgram(c=c, A=mat(self._a, self.p), b=b, G=mat(self._g, self.m), h=h,
                            cones=cones)


def _check_domains(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
                   surrogates: SurrogateSet):
    v_hi = max(iv.v_max for iv in route.intervals)
    tol = 1e-9
    mb = surrogates.motor.domain_box
    if mb:
        if mb["F"][0] > params.F_m_min + tol * abs(params.F_m_min) or \
                mb["F"][1] < params.F_m_max * (1 - tol):
            raise BuildError("motor surrogate force domain is narrower than the motor bounds")
        if mb["v"][0] > scenario.v_stop * (1 + tol) or mb["v"][1] < v_hi * (1 - tol):
            raise BuildError("motor surrogate speed domain does not cover the route speeds")
    fb = surrogates.fuel_cell.domain_box
    if fb:
        if fb["P"][0] > params.P_fc_min * (1 + tol) or fb["P"][1] < params.P_fc_max * (1 - tol):
            raise BuildError("fuel-cell surrogate power domain is narrower than the bounds")
        if fb["v"][0] > scenario.v_stop * (1 + tol) or fb["v"][1] < v_hi * (1 - tol):
            raise BuildError("fuel-cell surrogate speed domain does not cover the route speeds")
    bat = surrogates.battery
    if bat.p_min > params.P_batt_min or bat.p_max < params.P_batt_max:
        raise BuildError("battery surrogate power range is narrower than the battery bounds")
    for s in (surrogates.motor, surrogates.fuel_cell):
        if s.p20 < 0 or s.p02 < 0 or s.p11 != 0:
            raise ConvexityError(f"{s.kind} surrogate is not certified convex in lifted form")
    if scenario.T_batt_0 > params.T_batt_max:
        raise BuildError("initial battery temperature exceeds the upper bound")


def _build(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
           surrogates: SurrogateSet, thermal: bool, scale: bool = True) -> ConicProgram:
    _check_domains(route, params, scenario, surrogates)
    N = route.n_intervals
    if N < 1:
        raise BuildError("route has no intervals")
    ds = route.delta_s
    dwell = route.is_dwell
    grade = route.grade
    vmax = route.array("v_max")
    vmin = np.maximum(route.array("v_min"), scenario.v_stop)
    # v_0^2 <= z_0 = v_start^2 caps the first interval's speed
    vmax[0] = min(vmax[0], scenario.v_start)
    if (vmin > vmax * (1 + 1e-12)).any():
        raise BuildError("interval speed bounds are inconsistent")
    dt_avg = compute_average_delta_t(route, scenario.tau)
    dt = np.where(dwell, 1.0 / scenario.v_stop, dt_avg)
    P = params
    qm, qf, bat = surrogates.motor, surrogates.fuel_cell, surrogates.battery

    asm = _Assembler()
    names = INTERVAL_VARS if thermal else tuple(n for n in INTERVAL_VARS if n not in THERMAL_VARS)
    col = {}
    for name in names:
        col[name] = asm.var(name, N)
    col["t"] = asm.var("t", N)
    term = {s: asm.var(f"{s}_N", 1) for s in STATE_VARS if thermal or s != "T"}
    # state arrays of length N + 1
    z1 = np.concatenate([col["z"], term["z"]])
    zeta1 = np.concatenate([col["zeta"], term["zeta"]])
    idx = np.arange(N)

    # ---- state equations ---------------------------------------------------
    half_m = 0.5 * P.m_eq
    ext = np.where(dwell, 0.0, P.davis_a + P.m * GRAVITY * np.sin(grade))
    b_eff = np.where(dwell, 0.0, P.davis_b)
    c_eff = np.where(dwell, 0.0, P.davis_c)
    # per-metre form:  m/2 (z' - z)/ds + c z + b v - Fm - Fbrk = -ext
    asm.eq([(z1[idx + 1], half_m / ds), (col["z"], -half_m / ds + c_eff),
            (col["v"], b_eff), (col["Fm"], -1.0), (col["Fbrk"], -1.0)], -ext, N)
    asm.eq([(zeta1[idx + 1], 1.0), (col["zeta"], -1.0), (col["dzeta"], 1.0)], 0.0, N)
    asm.eq([(col["lz"], 1.0), (col["dzeta"], -1.0), (col["Fbatt"], bat.beta * ds)], 0.0, N)
    if thermal:
        T1 = np.concatenate([col["T"], term["T"]])
        asm.eq([(T1[idx + 1], 1.0), (col["T"], -1.0), (col["dT"], -1.0)], 0.0, N)
        # m c dT / ds = Fdis (1-eta_dis) - Fchr (1-eta_chr) - h (T - T_amb) dt - Qc
        asm.eq([(col["dT"], P.heat_capacity / ds), (col["Fdis"], -(1.0 - P.eta_dis)),
                (col["Fchr"], 1.0 - P.eta_chr), (col["T"], P.h_amb * dt), (col["Qc"], 1.0)],
               P.h_amb * scenario.T_amb * dt, N)

    # ---- boundary conditions -------------------------------------------------
    asm.eq([(z1[0], 1.0)], scenario.v_start ** 2, 1)
    asm.eq([(z1[N], 1.0)], scenario.v_end ** 2, 1)
    asm.eq([(zeta1[0], 1.0)], scenario.zeta_0, 1)
    asm.eq([(zeta1[N], 1.0)], scenario.zeta_0, 1)
    if thermal:
        asm.eq([(T1[0], 1.0)], scenario.T_batt_0, 1)
    asm.eq_row(col["lv"], ds, scenario.tau)

    fixed = np.abs(vmax - vmin) <= 1e-12 * vmax
    if fixed.any():
        asm.eq([(col["v"][fixed], 1.0)], vmin[fixed], int(fixed.sum()))
        zfix = fixed.copy()
        zfix[0] = False     # z_0 is already pinned by the boundary condition
        if zfix.any():
            asm.eq([(col["z"][zfix], 1.0)], vmin[zfix] ** 2, int(zfix.sum()))
    free = ~fixed
    nf = int(free.sum())

    # ---- simple bounds ---------------------------------------------------------
    def lower(name, lo, sel=None):
        c = col[name] if sel is None else col[name][sel]
        asm.le([(c, -1.0)], -np.asarray(lo, dtype=float), c.size)

    def upper(name, hi, sel=None):
        c = col[name] if sel is None else col[name][sel]
        asm.le([(c, 1.0)], hi, c.size)

    lower("lv", 0.0)
    lower("lz", 0.0)
    if nf:
        lower("v", vmin[free], free)
        upper("v", vmax[free], free)
        lower("z", vmin[free] ** 2, free)
        upper("z", vmax[free] ** 2, free)
    # at fixed-speed intervals v lv >= 1 is linear
    if fixed.any():
        lower("lv", 1.0 / vmin[fixed], fixed)
    for name in ("zeta",):
        lower(name, P.zeta_min)
        upper(name, P.zeta_max)
    lower("Fm", P.F_m_min)
    upper("Fm", P.F_m_max)
    lower("Fbrk", P.F_brk_min)
    upper("Fbrk", 0.0)
    if thermal:
        upper("T", P.T_batt_max)
        asm.le([(term["T"], 1.0)], P.T_batt_max, 1)
        lower("Fdis", 0.0)
        upper("Fchr", 0.0)
        lower("Qc", 0.0)
        # relaxed |Fbatt| split
        asm.le([(col["Fchr"], 1.0), (col["Fbatt"], -1.0)], 0.0, N)
        asm.le([(col["Fbatt"], 1.0), (col["Fdis"], -1.0)], 0.0, N)
        asm.le([(col["Qc"], 1.0), (col["lv"], -P.Q_cool_max)], 0.0, N)

    # ---- speed-coupled power limits -------------------------------------------
    for name, lo, hi in (("Fm", P.P_m_min, P.P_m_max), ("Fbatt", P.P_batt_min, P.P_batt_max),
                         ("Ffc", P.P_fc_min, P.P_fc_max)):
        asm.le([(col["lv"], lo), (col[name], -1.0)], 0.0, N)
        asm.le([(col[name], 1.0), (col["lv"], -hi)], 0.0, N)

    # ---- relaxed cones ---------------------------------------------------------
    if nf:
        asm.rsoc("v_lv", [([(col["v"][free], 1.0)], 0.0), ([(col["lv"][free], 1.0)], 0.0),
                          ([], math.sqrt(2.0))], nf)
        asm.rsoc("z_v", [([(col["z"][free], 1.0)], 0.0), ([], 0.5),
                         ([(col["v"][free], 1.0)], 0.0)], nf)
    bal = [(col["Ffc"], 1.0), (col["Fbatt"], 1.0), (col["lv"], -P.P_aux),
           (col["z"], -qm.p10), (col["Fm"], -qm.p01)]
    if thermal:
        bal.append((col["Qc"], -1.0 / P.cop))
    slots = [(bal, -qm.p00), ([], 0.5)]
    if qm.p20 > 0:
        slots.append(([(col["z"], math.sqrt(qm.p20))], 0.0))
    if qm.p02 > 0:
        slots.append(([(col["Fm"], math.sqrt(qm.p02))], 0.0))
    asm.rsoc("balance", slots, N)
    if bat.alpha > 0:
        asm.rsoc("soc", [([(col["lz"], 1.0)], 0.0), ([(col["lv"], 1.0)], 0.0),
                         ([(col["Fbatt"], np.sqrt(2.0 * bat.alpha * ds))], 0.0)], N)
    fuel = [(col["t"], 1.0), (col["z"], -qf.p10 * ds), (col["Ffc"], -qf.p01 * ds)]
    slots = [(fuel, -qf.p00 * ds), ([], 0.5)]
    if qf.p20 > 0:
        slots.append(([(col["z"], np.sqrt(qf.p20 * ds))], 0.0))
    if qf.p02 > 0:
        slots.append(([(col["Ffc"], np.sqrt(qf.p02 * ds))], 0.0))
    if len(slots) > 2:
        asm.rsoc("fuel", slots, N)
    else:
        # linear fuel model: t >= ds q_fc
        asm.le([(c, -v) for c, v in fuel], qf.p00 * ds, N)

    c = np.zeros(asm.n)
    c[col["t"]] = 1.0
    prog = asm.finish(c)
    index = dict(asm.index)
    for s in term:
        index[s] = np.concatenate([col[s], term[s]])
        del index[f"{s}_N"]
    prog.index = index
    prog.meta = {"method": "concurrent" if thermal else "sequential", "n_intervals": N,
                 "delta_t_avg": dt_avg, "delta_t": dt, "free": free, "families": asm.families,
                 "delta_s": ds, "dwell": dwell, "params": params, "scenario": scenario,
                 "surrogates": surrogates, "v_min": vmin, "v_max": vmax}
    if scale:
        pre = np.ones(prog.n)
        for name, cols in index.items():
            pre[cols] = _TYPICAL.get(name, 1.0)
        prog = equilibrate(prog, pre)
    return prog


def build_concurrent(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
                     surrogates: SurrogateSet, *, scale: bool = True) -> ConicProgram:
    """Speed, power split and battery temperature in one SOCP."""
    return _build(route, params, scenario, surrogates, thermal=True, scale=scale)


def build_sequential(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
                     surrogates: SurrogateSet, *, scale: bool = True) -> ConicProgram:
    """Speed and power split only; no thermal states, limits or cooling."""
    return _build(route, params, scenario, surrogates, thermal=False, scale=scale)


def scaling_range(prog: ConicProgram) -> tuple[float, float]:
    """Smallest and largest nonzero coefficient magnitude of ``[A; G]``."""
    vals = np.abs(np.concatenate([prog.A.data, prog.G.data]))
    vals = vals[vals > 0]
    return float(vals.min()), float(vals.max())


@dataclass
class TrajectoryResult:
    method: str
    delta_s: np.ndarray
    is_dwell: np.ndarray
    z: np.ndarray              # N + 1 (terminal included)
    v: np.ndarray
    zeta: np.ndarray           # N + 1
    T_batt: np.ndarray | None  # N + 1, None for the sequential method
    Fm: np.ndarray
    Fbrk: np.ndarray
    Ffc: np.ndarray
    Fbatt: np.ndarray
    Fdis: np.ndarray | None
    Fchr: np.ndarray | None
    Qc: np.ndarray | None
    lv: np.ndarray
    lz: np.ndarray
    dzeta: np.ndarray
    dT: np.ndarray | None
    fuel_epigraph: np.ndarray
    fuel: float                # J, surrogate fuel evaluated on the solution
    journey_time: float        # s
    params: TrainParameters | None = None
    scenario: ScenarioConfig | None = None
    surrogates: SurrogateSet | None = None
    delta_t: np.ndarray | None = None     # s/m per interval used by the heat balance

    @property
    def n_intervals(self) -> int:
        return self.v.size

    @property
    def P_fc(self) -> np.ndarray:
        return self.Ffc * self.v

    @property
    def P_batt(self) -> np.ndarray:
        return self.Fbatt * self.v

    @property
    def cooling_rate(self) -> np.ndarray:
        return np.zeros_like(self.v) if self.Qc is None else self.Qc * self.v

    @property
    def position(self) -> np.ndarray:
        """Cumulative (virtual) distance at interval starts, length N + 1."""
        return np.concatenate([[0.0], np.cumsum(self.delta_s)])

    @property
    def time(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.delta_s * self.lv)])

    def series(self) -> dict[str, np.ndarray]:
        """Per-interval columns for export (states at interval start)."""
        out = {"position_m": self.position[:-1], "delta_s_m": self.delta_s,
               "dwell": self.is_dwell.astype(float), "time_s": self.time[:-1],
               "z": self.z[:-1], "v": self.v, "zeta": self.zeta[:-1]}
        if self.T_batt is not None:
            out["T_batt_K"] = self.T_batt[:-1]
        for name in ("Fm", "Fbrk", "Ffc", "Fbatt", "Fdis", "Fchr", "Qc", "lv", "lz", "dzeta",
                     "dT"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        out["P_fc_W"] = self.P_fc
        out["P_batt_W"] = self.P_batt
        out["cooling_W"] = self.cooling_rate
        return out


def extract_trajectory(program: ConicProgram, x: np.ndarray,
                       surrogates: SurrogateSet | None = None,
                       status: str = "optimal", *, tighten: bool = True) -> TrajectoryResult:
    """Named physical series from a (scaled) primal vector.

    With ``tighten`` the charge/discharge split is moved to its tight point
    (see :func:`tighten_split`), which leaves the objective unchanged.
    """
    surrogates = surrogates or program.meta.get("surrogates")
    if surrogates is None:
        raise ValueError("surrogates are required to evaluate the fuel objective")
    if status != "optimal":
        raise ValueError(f"cannot extract a trajectory from a {status} solve")
    xp = program.physical(np.asarray(x, dtype=float))
    get = lambda name: xp[program.index[name]] if name in program.index else None
    ds = program.meta["delta_s"]
    z, Ffc = get("z"), get("Ffc")
    fuel = float(np.sum(surrogates.fuel_cell(Ffc, z[:-1]) * ds))
    result = TrajectoryResult(
        method=program.meta["method"], delta_s=ds, is_dwell=program.meta["dwell"],
        z=z, v=get("v"), zeta=get("zeta"), T_batt=get("T"), Fm=get("Fm"), Fbrk=get("Fbrk"),
        Ffc=Ffc, Fbatt=get("Fbatt"), Fdis=get("Fdis"), Fchr=get("Fchr"), Qc=get("Qc"),
        lv=get("lv"), lz=get("lz"), dzeta=get("dzeta"), dT=get("dT"),
        fuel_epigraph=get("t"), fuel=fuel, journey_time=float(np.sum(ds * get("lv"))),
        params=program.meta.get("params"), scenario=program.meta.get("scenario"),
        surrogates=surrogates, delta_t=program.meta.get("delta_t"))
    return tighten_split(result) if tighten else result


def tighten_split(result: TrajectoryResult) -> TrajectoryResult:
    """Set ``F_dis = max(F_batt, 0)``, ``F_chr = min(F_batt, 0)`` and recompute
    the temperature states with the program's own heat balance.

    Away from an active temperature bound the split carries no cost, so an
    interior-point solution may report spurious extra heat.  The tight split
    generates the least heat, hence every temperature can only drop: the new
    point stays feasible with the same cooling, fuel and objective.
    """
    r = result
    if r.T_batt is None or r.params is None or r.delta_t is None:
        return r
    P, sc = r.params, r.scenario
    Fdis = np.maximum(r.Fbatt, 0.0)
    Fchr = np.minimum(r.Fbatt, 0.0)
    gen = Fdis * (1.0 - P.eta_dis) - Fchr * (1.0 - P.eta_chr)
    T = np.empty_like(r.T_batt)
    dT = np.empty_like(r.dT)
    T[0] = r.T_batt[0]
    for i in range(r.n_intervals):
        dT[i] = r.delta_s[i] / P.heat_capacity * (
            gen[i] - P.h_amb * (T[i] - sc.T_amb) * r.delta_t[i] - r.Qc[i])
        T[i + 1] = T[i] + dT[i]
    return replace(r, Fdis=Fdis, Fchr=Fchr, T_batt=T, dT=dT)
