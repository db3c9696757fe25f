"""Time-domain re-simulation of optimised commands with the exact component models.

Commands are held per space interval (zero-order hold by position).  Speed
follows the point-mass equation with the full Davis resistance, state of charge
the open-circuit-voltage/internal-resistance battery, and temperature the lumped
heat balance with ambient loss at the actual elapsed time.  Fuel is integrated
through the fuel-cell efficiency curve; the fuel cell balances the electrical
bus while battery dispatch follows the plan.

Station handling: on entering a dwell interval the train is held at ``v_stop``
for the dwell time (the arrival speed is recorded).  The net traction work done
during the dwell, which the formulation books as kinetic energy at the end of
the dwell interval, is released as departure speed.  On the interval that
approaches a station the speed is not allowed below ``v_stop``; the traction
needed to creep on is supplied by the motor and accounted for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..params import G as GRAVITY
from ..params import ScenarioConfig, TrainParameters
from ..program import TrajectoryResult
from ..route import RouteProfile
from ..surrogates import FuelCellEfficiencyCurve, MotorEfficiencyMap


class SimulationError(RuntimeError):
    """Commands that cannot be executed by the exact models."""


@dataclass
class Thermostat:
    """Bang-bang cooling with hysteresis: full rate at or above ``T_on``,
    off at or below ``T_off``."""
    T_on: float
    T_off: float
    rate: float
    on: bool = False

    @classmethod
    def for_params(cls, params: TrainParameters, on_below: float = 2.0,
                   off_below: float = 4.0) -> "Thermostat":
        return cls(params.T_batt_max - on_below, params.T_batt_max - off_below, params.Q_cool_max)

    def __call__(self, T: float) -> float:
        if T >= self.T_on:
            self.on = True
        elif T <= self.T_off:
            self.on = False
        return self.rate if self.on else 0.0


def thermostat_cooling(T_batt: float, on: bool, params: TrainParameters,
                       on_below: float = 2.0, off_below: float = 4.0) -> tuple[float, bool]:
    """Cooling rate (W of heat removed) and the new switch state."""
    th = Thermostat.for_params(params, on_below, off_below)
    th.on = on
    rate = th(T_batt)
    return rate, th.on


@dataclass
class ExactModels:
    motor_map: MotorEfficiencyMap
    fc_curve: FuelCellEfficiencyCurve

    def motor_electrical(self, F: float, v: float) -> float:
        """Electrical power (W) for shaft force ``F`` at speed ``v``."""
        eff = _bilinear(self.motor_map, F, v)
        p = F * v
        return p / eff if p >= 0 else p * eff

    def fuel_rate(self, p: float) -> float:
        c = self.fc_curve
        return p / float(np.interp(p, c.power, c.eff))


def _bilinear(emap: MotorEfficiencyMap, F: float, v: float) -> float:
    f, s, e = emap.force, emap.speed, emap.eff
    F = min(max(F, f[0]), f[-1])
    v = min(max(v, s[0]), s[-1])
    i = min(max(int(np.searchsorted(f, F)) - 1, 0), f.size - 2)
    j = min(max(int(np.searchsorted(s, v)) - 1, 0), s.size - 2)
    tf = (F - f[i]) / (f[i + 1] - f[i])
    tv = (v - s[j]) / (s[j + 1] - s[j])
    return float((1 - tf) * (1 - tv) * e[i, j] + tf * (1 - tv) * e[i + 1, j]
                 + (1 - tf) * tv * e[i, j + 1] + tf * tv * e[i + 1, j + 1])


@dataclass
class SimTrace:
    time: np.ndarray
    position: np.ndarray          # virtual distance along the interval sequence, m
    v: np.ndarray
    zeta: np.ndarray
    T_batt: np.ndarray
    P_fc: np.ndarray
    P_batt: np.ndarray
    cooling: np.ndarray           # W of heat removed
    fuel: np.ndarray              # cumulative fuel energy, J
    cooling_electrical: np.ndarray  # cumulative cooling electrical energy, J
    # cumulative bus energies for the conservation check, J
    fc_energy: np.ndarray
    batt_energy: np.ndarray
    motor_energy: np.ndarray
    aux_energy: np.ndarray
    dumped_energy: np.ndarray
    arrival_speeds: list = field(default_factory=list)
    creep_energy: float = 0.0
    fc_overload: bool = False
    cooling_policy: str = "commanded"

    @property
    def total_fuel(self) -> float:
        return float(self.fuel[-1])

    @property
    def peak_T(self) -> float:
        return float(self.T_batt.max())

    @property
    def total_cooling_electrical(self) -> float:
        return float(self.cooling_electrical[-1])

    def terminal(self) -> dict:
        return {"v": float(self.v[-1]), "zeta": float(self.zeta[-1]),
                "T_batt": float(self.T_batt[-1]), "time": float(self.time[-1])}

    def columns(self) -> dict[str, np.ndarray]:
        return {"time_s": self.time, "position_m": self.position, "v_mps": self.v,
                "zeta": self.zeta, "T_batt_K": self.T_batt, "P_fc_W": self.P_fc,
                "P_batt_W": self.P_batt, "cooling_W": self.cooling, "fuel_J": self.fuel,
                "cooling_electrical_J": self.cooling_electrical}


class _Bus:
    """Per-step power flows; accumulates energies."""

    def __init__(self):
        self.fc = self.batt = self.motor = self.aux = self.dumped = 0.0
        self.fuel = self.cool_el = 0.0


def simulate_forward(result: TrajectoryResult, route: RouteProfile | None = None,
                     scenario: ScenarioConfig | None = None,
                     params: TrainParameters | None = None, *,
                     models: ExactModels | None = None, dt: float | None = None,
                     thermostat: Thermostat | None = None) -> SimTrace:
    """Replay ``result``'s commands in time.

    ``route`` supplies grades (defaults to zero-grade if omitted only when the
    result already carries them through the program; pass the route used to
    build the program).  With ``thermostat`` the commanded cooling is replaced
    by the hysteresis controller (sequential baseline).
    """
    params = params or result.params
    scenario = scenario or result.scenario
    if params is None or scenario is None:
        raise ValueError("params and scenario are required")
    if route is None:
        raise ValueError("the route used to build the program is required (grades)")
    if route.n_intervals != result.n_intervals:
        raise ValueError("route does not match the trajectory's interval count")
    if models is None:
        from ..benchmark import default_models
        models = default_models()
    dt = scenario.delta_t_sim if dt is None else dt
    if not 0 < dt <= 1.0:
        raise ValueError("dt must lie in (0, 1] s")

    P = params
    N = result.n_intervals
    ds = result.delta_s
    edges = np.concatenate([[0.0], np.cumsum(ds)])
    sin_g = np.sin(route.grade)
    dwell = result.is_dwell
    approach = np.zeros(N, bool)
    approach[:-1] = dwell[1:]
    Fm, Fbrk, Fbatt = result.Fm, result.Fbrk, result.Fbatt
    Qc = result.Qc if result.Qc is not None else np.zeros(N)
    v_stop = scenario.v_stop
    m_eq = P.m_eq
    p_lim = P.U_oc ** 2 / (4.0 * P.R)
    q_as = 3600.0 * P.Q_ah
    heat_cap = P.heat_capacity

    def ext(v, k):
        return P.davis_a + P.davis_b * v + P.davis_c * v * v + P.m * GRAVITY * sin_g[k]

    def accel(v, k, F):
        return (F - ext(v, k)) / m_eq

    # state
    t, s, v = 0.0, 0.0, math.sqrt(max(result.z[0], v_stop ** 2))
    zeta, T = scenario.zeta_0, scenario.T_batt_0
    k = 0
    bus = _Bus()
    rec = {name: [] for name in ("time", "position", "v", "zeta", "T_batt", "P_fc", "P_batt",
                                 "cooling", "fuel", "cooling_electrical", "fc_energy",
                                 "batt_energy", "motor_energy", "aux_energy", "dumped_energy")}
    arrivals: list[tuple[int, float]] = []
    creep = 0.0
    overload = False
    dwell_left = None
    dwell_work = 0.0
    last = (0.0, 0.0, 0.0)

    def record(p_fc, p_batt, q):
        rec["time"].append(t)
        rec["position"].append(s)
        rec["v"].append(v)
        rec["zeta"].append(zeta)
        rec["T_batt"].append(T)
        rec["P_fc"].append(p_fc)
        rec["P_batt"].append(p_batt)
        rec["cooling"].append(q)
        rec["fuel"].append(bus.fuel)
        rec["cooling_electrical"].append(bus.cool_el)
        rec["fc_energy"].append(bus.fc)
        rec["batt_energy"].append(bus.batt)
        rec["motor_energy"].append(bus.motor)
        rec["aux_energy"].append(bus.aux)
        rec["dumped_energy"].append(bus.dumped)

    def powers(k, v, F_motor, q):
        """Bus flows at speed v; returns (p_fc, p_batt, p_motor_el, dumped, cool_el)."""
        nonlocal overload
        p_batt = Fbatt[k] * v
        if p_batt > p_lim:
            raise SimulationError(
                f"interval {k}: battery power {p_batt:.4g} W exceeds U_oc^2/4R = {p_lim:.4g} W")
        p_m = models.motor_electrical(F_motor, v)
        cool_el = q / P.cop
        demand = p_m + P.P_aux + cool_el - p_batt
        p_fc = max(demand, P.P_fc_min)
        if p_fc > P.P_fc_max * (1 + 1e-9):
            overload = True
        return p_fc, p_batt, p_m, p_fc - demand, cool_el

    def advance(h, k, F_motor, q, hold=False):
        """Integrate all states over h seconds with interval k's commands."""
        nonlocal v, s, zeta, T, t, creep
        v0 = v
        if hold:
            v1 = v0
            ds_ = v0 * h
        else:
            # RK4 on (s, v)
            a1 = accel(v0, k, F_motor)
            a2 = accel(v0 + 0.5 * h * a1, k, F_motor)
            a3 = accel(v0 + 0.5 * h * a2, k, F_motor)
            a4 = accel(v0 + h * a3, k, F_motor)
            v1 = v0 + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            ds_ = h / 6.0 * (v0 + 2 * (v0 + 0.5 * h * a1) + 2 * (v0 + 0.5 * h * a2)
                             + (v0 + h * a3))
        vm = 0.5 * (v0 + v1)
        p_fc, p_batt, p_m, dumped, cool_el = powers(k, vm, F_motor, q)
        current = (P.U_oc - math.sqrt(P.U_oc ** 2 - 4.0 * p_batt * P.R)) / (2.0 * P.R)
        zeta -= current / q_as * h
        gen = ((1.0 - P.eta_dis) * p_batt if p_batt > 0 else -(1.0 - P.eta_chr) * p_batt)
        T += (gen - P.h_amb * (T - scenario.T_amb) - q) / heat_cap * h
        bus.fc += p_fc * h
        bus.batt += p_batt * h
        bus.motor += p_m * h
        bus.aux += P.P_aux * h
        bus.dumped += dumped * h
        bus.cool_el += cool_el * h
        bus.fuel += models.fuel_rate(p_fc) * h
        v, s, t = v1, s + ds_, t + h
        return p_fc, p_batt

    def cooling_rate(k, vel):
        if thermostat is not None:
            return thermostat(T)
        return Qc[k] * vel

    q0 = cooling_rate(0, v)
    p_fc0, p_b0, *_ = powers(0, v, Fm[0] + Fbrk[0], q0)
    record(p_fc0, p_b0, q0)
    next_sample = dt
    if dwell[0]:
        v = v_stop
        dwell_left = result_dwell_time(route, 0, ds[0], v_stop)
    guard = 0
    max_steps = int(50 * (scenario.tau + 1.0) / dt) + 10
    while k < N:
        guard += 1
        if guard > max_steps:
            raise SimulationError("simulation did not reach the end of the route")
        h = next_sample - t
        q = cooling_rate(k, v)
        if dwell[k]:
            # held at v_stop for the known dwell time
            v = v_stop
            h = min(h, dwell_left)
            last = advance(h, k, Fm[k] + Fbrk[k], q, hold=True)
            dwell_work += (Fm[k] + Fbrk[k]) * v_stop * h
            dwell_left -= h
            if dwell_left <= 1e-12:
                s = edges[k + 1]
                v = math.sqrt(max(v_stop ** 2 + 2.0 * dwell_work / m_eq, v_stop ** 2))
                dwell_work = 0.0
                k += 1
                if k < N and dwell[k]:
                    dwell_left = result_dwell_time(route, k, ds[k], v_stop)
        else:
            F = Fm[k] + Fbrk[k]
            remaining = edges[k + 1] - s
            hold = False
            if approach[k] and v <= v_stop and accel(v, k, F) <= 0:
                # creep into the station at v_stop
                need = ext(v_stop, k)
                creep += max(need - F, 0.0) * v_stop * h
                F = max(F, need)
                hold = True
                v = v_stop
            elif v <= 0.0:
                raise SimulationError(f"speed collapsed between stations in interval {k} "
                                      f"(position {s:.1f} m)")
            # time to the interval edge at the current speed and acceleration
            a = 0.0 if hold else accel(v, k, F)
            t_edge = _time_to(remaining, v, a)
            if t_edge is not None and t_edge < h:
                h = max(t_edge, 1e-9)
                last = advance(h, k, F, q, hold)
                s = edges[k + 1]
                k += 1
                if k < N and dwell[k]:
                    arrivals.append((k, v))
                    v = v_stop
                    dwell_left = result_dwell_time(route, k, ds[k], v_stop)
            else:
                last = advance(h, k, F, q, hold)
                if not hold and v <= 0.0:
                    if approach[k]:
                        v = v_stop
                    else:
                        raise SimulationError(f"speed collapsed between stations in interval {k}")
        if t >= next_sample - 1e-9:
            record(last[0], last[1], cooling_rate(min(k, N - 1), v) if thermostat is None
                   else (thermostat.rate if thermostat.on else 0.0))
            next_sample += dt
    if rec["time"][-1] < t - 1e-9:
        record(last[0], last[1], 0.0)

    arr = {key: np.asarray(val) for key, val in rec.items()}
    return SimTrace(**arr, arrival_speeds=arrivals, creep_energy=creep, fc_overload=overload,
                    cooling_policy="thermostat" if thermostat is not None else "commanded")


def result_dwell_time(route: RouteProfile, k: int, delta_s: float, v_stop: float) -> float:
    iv = route.intervals[k]
    return iv.dwell_time if iv.dwell_time > 0 else delta_s / v_stop


def _time_to(dist: float, v: float, a: float) -> float | None:
    """Smallest t > 0 with v t + a t^2 / 2 = dist, or None if never reached."""
    if dist <= 0:
        return 0.0
    if abs(a) < 1e-12:
        return dist / v if v > 0 else None
    disc = v * v + 2.0 * a * dist
    if disc < 0:
        return None
    return (-v + math.sqrt(disc)) / a if a != 0 else None
