"""Train parameters and scenario settings.

Everything is SI internally (J, N, W, K, s, m; state of charge as a fraction).
Temperatures are given in degrees Celsius only in JSON files.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

KELVIN = 273.15
G = 9.81


def c_to_k(t: float) -> float:
    return t + KELVIN


def k_to_c(t: float) -> float:
    return t - KELVIN


@dataclass(frozen=True)
class TrainParameters:
    # vehicle
    m: float = 183e3                 # kg
    rotary_inertia: float = 0.0625   # m_eq = (1 + lambda) m
    davis_a: float = 1743.0          # N
    davis_b: float = 76.4            # kg/s
    davis_c: float = 6.2             # kg/m
    F_brk_min: float = -180e3        # N, upper bound is 0
    P_aux: float = 85e3              # W
    # motor
    P_m_min: float = -585e3
    P_m_max: float = 585e3
    F_m_min: float = -87e3
    F_m_max: float = 87e3
    # fuel cell
    P_fc_min: float = 24e3
    P_fc_max: float = 400e3
    # battery
    P_batt_min: float = -600e3
    P_batt_max: float = 600e3
    Q_wh: float = 220e3
    R: float = 21.7e-3
    U_oc: float = 600.0
    zeta_min: float = 0.2
    zeta_max: float = 0.8
    # thermal
    T_batt_max: float = c_to_k(40.0)
    Q_cool_max: float = 15e3         # W of heat removal
    cop: float = 4.0
    m_batt: float = 3000.0
    c_batt: float = 1000.0           # J/(kg K)
    eta_dis: float = 0.9
    eta_chr: float = 0.9
    h_amb: float = 25.0              # W/K

    def __post_init__(self):
        positive = ("m", "davis_a", "P_aux", "P_m_max", "F_m_max", "P_fc_max", "P_batt_max",
                    "Q_wh", "R", "U_oc", "Q_cool_max", "cop", "m_batt", "c_batt")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.davis_b < 0 or self.davis_c < 0 or self.h_amb < 0 or self.P_fc_min < 0:
            raise ValueError("resistance and heat-transfer coefficients must be non-negative")
        if not self.F_brk_min < 0:
            raise ValueError("F_brk_min must be negative")
        if not 0 < self.zeta_min < self.zeta_max < 1:
            raise ValueError("SOC bounds must satisfy 0 < zeta_min < zeta_max < 1")
        if not (0 < self.eta_dis <= 1 and 0 < self.eta_chr <= 1):
            raise ValueError("battery efficiencies must lie in (0, 1]")
        if self.P_fc_min >= self.P_fc_max or self.P_batt_min >= self.P_batt_max:
            raise ValueError("inconsistent power bounds")
        if self.P_batt_max > self.U_oc ** 2 / (4 * self.R):
            raise ValueError("P_batt_max exceeds the U_oc^2/4R validity bound")

    @property
    def m_eq(self) -> float:
        return (1.0 + self.rotary_inertia) * self.m

    @property
    def Q_ah(self) -> float:
        return self.Q_wh / self.U_oc

    @property
    def heat_capacity(self) -> float:
        return self.m_batt * self.c_batt

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "TrainParameters":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown train parameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "TrainParameters":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ScenarioConfig:
    tau: float = 87 * 60.0            # s
    zeta_0: float = 0.5
    T_batt_0: float = c_to_k(20.0)    # K
    T_amb: float = c_to_k(20.0)       # K
    v_stop: float = 0.1               # m/s
    delta_s: float = 10.0             # m
    delta_t_sim: float = 0.1          # s
    v_initial: float | None = None    # defaults to v_stop
    v_terminal: float | None = None   # defaults to v_stop

    def __post_init__(self):
        if not (self.tau > 0 and self.v_stop > 0 and self.delta_s > 0):
            raise ValueError("tau, v_stop and delta_s must be positive")
        if not 0 < self.zeta_0 < 1:
            raise ValueError("zeta_0 must be a fraction")
        if not 0 < self.delta_t_sim <= 1.0:
            raise ValueError("delta_t_sim must lie in (0, 1] s")

    @property
    def v_start(self) -> float:
        return self.v_stop if self.v_initial is None else self.v_initial

    @property
    def v_end(self) -> float:
        return self.v_stop if self.v_terminal is None else self.v_terminal

    def at_ambient(self, t_amb_c: float, preheat_c: float = 10.0) -> "ScenarioConfig":
        """Ambient scenario: the battery starts at ambient, pre-heated when colder
        than ``preheat_c``."""
        return replace(self, T_amb=c_to_k(t_amb_c), T_batt_0=c_to_k(max(t_amb_c, preheat_c)))

    def to_json(self) -> dict:
        d = asdict(self)
        d["T_batt_0_C"] = k_to_c(d.pop("T_batt_0"))
        d["T_amb_C"] = k_to_c(d.pop("T_amb"))
        return d

    @classmethod
    def from_json(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        for key in ("T_batt_0", "T_amb"):
            if f"{key}_C" in data:
                data[key] = c_to_k(float(data.pop(f"{key}_C")))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
