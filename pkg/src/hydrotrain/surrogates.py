"""Convex quadratic surrogates for motor draw, fuel use and battery SOC rate.

Motor and fuel-cell surrogates share the form

    q(F, z) = p00 + p10 z + p01 F + p11 F sqrt(z) + p20 z^2 + p02 F^2

with ``z = v^2``.  They are fitted by weighted least squares on a fixed sample
grid, subject to ``p20, p02 >= 0``; ``p11`` is held at zero unless explicitly
requested because ``F v`` is not jointly convex in the lifted variables.
Residuals are weighted by ``1 / max(|target|, floor)`` so the fit controls
relative error.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .params import TrainParameters

COEFS = ("p00", "p10", "p01", "p11", "p20", "p02")
RIDGE = 1e-10
REL_FLOOR = 0.05          # relative-error floor as a fraction of max |target|
DEFAULT_THRESHOLD = 0.03


class FitError(ValueError):
    """Surrogate fit could not satisfy its domain or accuracy requirements."""


@dataclass(frozen=True)
class MotorEfficiencyMap:
    force: np.ndarray         # (nf,) N, strictly increasing
    speed: np.ndarray         # (nv,) m/s, strictly increasing
    eff: np.ndarray           # (nf, nv) in (0, 1]

    def __post_init__(self):
        f, v, e = (np.asarray(a, dtype=float) for a in (self.force, self.speed, self.eff))
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "speed", v)
        object.__setattr__(self, "eff", e)
        if e.shape != (f.size, v.size):
            raise ValueError("efficiency grid must be rectangular (force x speed)")
        if (np.diff(f) <= 0).any() or (np.diff(v) <= 0).any():
            raise ValueError("map axes must be strictly increasing")
        if not ((e > 0) & (e <= 1)).all():
            raise ValueError("motor efficiencies must lie in (0, 1]")

    def target(self) -> np.ndarray:
        """Electrical force on the grid: F/eta when motoring, F*eta when regenerating."""
        F = self.force[:, None]
        return np.where(F >= 0, F / self.eff, F * self.eff)


@dataclass(frozen=True)
class FuelCellEfficiencyCurve:
    power: np.ndarray         # W, strictly increasing
    eff: np.ndarray

    def __post_init__(self):
        p, e = np.asarray(self.power, dtype=float), np.asarray(self.eff, dtype=float)
        object.__setattr__(self, "power", p)
        object.__setattr__(self, "eff", e)
        if p.shape != e.shape or p.size < 2:
            raise ValueError("curve needs matching power/efficiency samples")
        if (np.diff(p) <= 0).any():
            raise ValueError("curve power must be strictly increasing")
        if not ((e > 0) & (e <= 1)).all():
            raise ValueError("fuel-cell efficiencies must lie in (0, 1]")

    def __call__(self, p):
        return np.interp(p, self.power, self.eff)

    def fuel_power(self, p):
        """Chemical power drawn for electrical output ``p`` (W)."""
        return np.asarray(p, dtype=float) / self(p)


@dataclass(frozen=True)
class QuadraticSurrogate:
    p00: float
    p10: float
    p01: float
    p11: float
    p20: float
    p02: float
    fit_rms: float
    p95_rel_error: float = 0.0
    domain_box: dict = field(default_factory=dict)
    kind: str = ""

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in COEFS])

    def __call__(self, F, z):
        F, z = np.asarray(F, dtype=float), np.asarray(z, dtype=float)
        return (self.p00 + self.p10 * z + self.p01 * F + self.p11 * F * np.sqrt(z)
                + self.p20 * z * z + self.p02 * F * F)

    def to_json(self) -> dict:
        return {"kind": self.kind, "coefficients": {k: getattr(self, k) for k in COEFS},
                "fit_rms": self.fit_rms, "p95_rel_error": self.p95_rel_error,
                "domain_box": self.domain_box}

    @classmethod
    def from_json(cls, d: dict) -> "QuadraticSurrogate":
        return cls(**d["coefficients"], fit_rms=d["fit_rms"],
                   p95_rel_error=d.get("p95_rel_error", 0.0),
                   domain_box=d.get("domain_box", {}), kind=d.get("kind", ""))


@dataclass(frozen=True)
class BatterySocSurrogate:
    alpha: float              # 1/(W^2 s)
    beta: float               # 1/(W s)
    p_min: float
    p_max: float
    max_rel_error: float
    kind: str = "battery"

    def rate(self, p):
        """SOC rate (fraction per second, positive when discharging)."""
        p = np.asarray(p, dtype=float)
        return self.alpha * p * p + self.beta * p

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "BatterySocSurrogate":
        return cls(**d)


@dataclass(frozen=True)
class SurrogateSet:
    motor: QuadraticSurrogate
    fuel_cell: QuadraticSurrogate
    battery: BatterySocSurrogate

    FILES = {"motor": "motor.json", "fuel_cell": "fuel_cell.json", "battery": "battery.json"}

    def save(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for name, fname in self.FILES.items():
            path = directory / fname
            path.write_text(dumps(getattr(self, name).to_json()), encoding="utf-8")
            out.append(path)
        return out

    @classmethod
    def load(cls, directory: str | Path) -> "SurrogateSet":
        directory = Path(directory)
        read = lambda f: json.loads((directory / f).read_text(encoding="utf-8"))
        return cls(QuadraticSurrogate.from_json(read(cls.FILES["motor"])),
                   QuadraticSurrogate.from_json(read(cls.FILES["fuel_cell"])),
                   BatterySocSurrogate.from_json(read(cls.FILES["battery"])))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# constrained least squares
# --------------------------------------------------------------------------

def design_matrix(F, z, with_p11: bool = False) -> np.ndarray:
    F, z = np.asarray(F, dtype=float), np.asarray(z, dtype=float)
    cols = [np.ones_like(F), z, F, F * np.sqrt(z) if with_p11 else np.zeros_like(F), z * z, F * F]
    return np.column_stack(cols)


def relative_weights(target: np.ndarray) -> np.ndarray:
    t = np.abs(target)
    return 1.0 / np.maximum(t, REL_FLOOR * t.max())


def constrained_lsq(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                    nonneg: tuple[int, ...], free: tuple[int, ...]) -> np.ndarray:
    """min ||w (X p - y)|| with p[nonneg] >= 0 and p over ``free`` + ``nonneg`` only.

    Solves the ridge-regularized normal equations for every active set of the
    sign constraints and keeps the best feasible candidate, which is the exact
    minimizer for a handful of constraints.
    """
    Xw = X * w[:, None]
    yw = y * w
    scale = np.abs(Xw).max(axis=0)
    scale[scale == 0] = 1.0
    Xs = Xw / scale
    best, best_obj = None, np.inf
    for k in range(len(nonneg) + 1):
        for fixed in itertools.combinations(nonneg, k):
            cols = [j for j in sorted(free + nonneg) if j not in fixed]
            M = Xs[:, cols]
            N = M.T @ M + RIDGE * np.eye(len(cols))
            sol = np.linalg.solve(N, M.T @ yw)
            p = np.zeros(X.shape[1])
            p[cols] = sol
            if any(p[j] < 0 for j in nonneg):
                continue
            obj = float(np.sum((Xs @ p - yw) ** 2))
            if best is None or obj < best_obj * (1.0 - 1e-15):
                best, best_obj = p, obj
    assert best is not None  # all-fixed candidate is always feasible
    return best / scale


def _fit(F, z, target, threshold, kind, box, with_p11) -> QuadraticSurrogate:
    X = design_matrix(F, z, with_p11)
    w = relative_weights(target)
    free = (0, 1, 2, 3) if with_p11 else (0, 1, 2)
    p = constrained_lsq(X, target, w, nonneg=(4, 5), free=free)
    rel = (X @ p - target) * w
    rms = float(np.sqrt(np.mean(rel ** 2)))
    p95 = float(np.percentile(np.abs(rel), 95))
    if not math.isfinite(rms) or rms > threshold:
        raise FitError(f"{kind} surrogate fit error {rms:.4f} exceeds threshold {threshold:.4f}")
    return QuadraticSurrogate(*map(float, p), fit_rms=rms, p95_rel_error=p95,
                              domain_box=box, kind=kind)


def fit_motor_surrogate(emap: MotorEfficiencyMap, box: dict, *,
                        threshold: float = DEFAULT_THRESHOLD,
                        with_p11: bool = False) -> QuadraticSurrogate:
    """Fit q_m over the map grid points inside ``box``.

    ``box`` holds ``F`` and ``v`` ranges and optionally ``P``, the motor power
    limits; grid points outside the power envelope are not sampled.
    """
    (f_lo, f_hi), (v_lo, v_hi) = box["F"], box["v"]
    tol = 1e-9
    if (emap.force[0] > f_lo + tol * abs(f_lo) or emap.force[-1] < f_hi - tol * abs(f_hi)
            or emap.speed[0] > v_lo * (1 + tol) or emap.speed[-1] < v_hi * (1 - tol)):
        raise FitError("motor map does not cover the requested domain box")
    FF, VV = np.meshgrid(emap.force, emap.speed, indexing="ij")
    T = emap.target()
    keep = (FF >= f_lo) & (FF <= f_hi) & (VV >= v_lo) & (VV <= v_hi)
    if "P" in box:
        p_lo, p_hi = box["P"]
        keep &= (FF * VV >= p_lo) & (FF * VV <= p_hi)
    if not np.isfinite(T[keep]).all():
        raise FitError("non-finite motor target samples")
    if keep.sum() < 6:
        raise FitError("too few motor map samples inside the domain box")
    z = VV[keep] ** 2
    return _fit(FF[keep], z, T[keep], threshold, "motor",
                {k: [float(a), float(b)] for k, (a, b) in box.items()}, with_p11)


def fuelcell_samples(curve: FuelCellEfficiencyCurve, p_range, v_range,
                     n_p: int = 41, n_v: int = 41):
    """Sample grid (F, z, target) for the fuel-cell fit: powers uniform, speeds geometric."""
    p = np.linspace(p_range[0], p_range[1], n_p)
    v = np.geomspace(v_range[0], v_range[1], n_v)
    PP, VV = np.meshgrid(p, v, indexing="ij")
    F = (PP / VV).ravel()
    return F, (VV ** 2).ravel(), (F / curve(PP.ravel()))


def fit_fuelcell_surrogate(curve: FuelCellEfficiencyCurve, p_range, v_range, *,
                           threshold: float = DEFAULT_THRESHOLD,
                           with_p11: bool = False) -> QuadraticSurrogate:
    """Fit q_fc to fuel energy per metre ``F / eta_fc(F v)``."""
    p_lo, p_hi = p_range
    if curve.power[0] > p_lo * (1 + 1e-12) or curve.power[-1] < p_hi * (1 - 1e-12):
        raise FitError(f"fuel-cell curve spans [{curve.power[0]:g}, {curve.power[-1]:g}] W, "
                       f"not the required [{p_lo:g}, {p_hi:g}] W")
    if not 0 < v_range[0] < v_range[1]:
        raise FitError("invalid speed range for the fuel-cell fit")
    F, z, T = fuelcell_samples(curve, p_range, v_range)
    box = {"P": [float(p_lo), float(p_hi)], "v": [float(v_range[0]), float(v_range[1])]}
    return _fit(F, z, T, threshold, "fuel_cell", box, with_p11)


def exact_soc_rate(p, U_oc: float, R: float, Q_ah: float):
    """SOC rate of the fixed-voltage, fixed-resistance cell (fraction per second)."""
    p = np.asarray(p, dtype=float)
    disc = U_oc ** 2 - 4.0 * p * R
    if (disc < 0).any():
        raise ValueError("battery power exceeds U_oc^2/4R")
    # rationalized form avoids cancellation at small power
    current = 2.0 * p / (U_oc + np.sqrt(disc))
    return current / (3600.0 * Q_ah)


def fit_battery_soc_surrogate(U_oc: float, R: float, Q_ah: float, p_range, *,
                              threshold: float = 0.01, n: int = 2401) -> BatterySocSurrogate:
    """Fit ``alpha P^2 + beta P`` to the exact rate with relative weighting.

    Dividing by ``P`` makes the model linear, ``rate/P = alpha P + beta``, so the
    fit minimizes relative error directly.  Samples with ``|P| <= 1 kW`` are
    excluded from the error statistic.
    """
    p_lo, p_hi = map(float, p_range)
    if p_hi > U_oc ** 2 / (4.0 * R):
        raise FitError(f"power range exceeds the validity bound U_oc^2/4R = {U_oc**2/(4*R):g} W")
    p = np.linspace(p_lo, p_hi, n)
    p = p[p != 0.0]
    y = exact_soc_rate(p, U_oc, R, Q_ah) / p
    X = np.column_stack([p, np.ones_like(p)])
    coef = constrained_lsq(X, y, np.ones_like(p), nonneg=(0,), free=(1,))
    alpha, beta = float(coef[0]), float(coef[1])
    mask = np.abs(p) > 1e3
    rel = np.abs((alpha * p + beta) - y)[mask] / np.abs(y[mask])
    err = float(rel.max()) if rel.size else 0.0
    if err > threshold:
        raise FitError(f"battery surrogate error {err:.4f} exceeds threshold {threshold:.4f}")
    return BatterySocSurrogate(alpha, beta, p_lo, p_hi, err)


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    worst_eigenvalue: float
    detail: str = ""


def certify_convexity(s: QuadraticSurrogate, box: dict | None = None,
                      n: int = 64) -> ConvexityReport:
    """Check the surrogate's convexity.

    With ``p11 = 0`` the surrogate is separable and convex in (z, F) exactly
    when ``p20, p02 >= 0``.  Otherwise the (v, F) Hessian
    ``[[2 p10 + 12 p20 v^2, p11], [p11, 2 p02]]`` is checked on a speed grid.
    """
    diag = min(2.0 * s.p20, 2.0 * s.p02)
    if s.p20 < 0 or s.p02 < 0:
        return ConvexityReport(False, diag, "negative diagonal coefficient")
    if s.p11 == 0.0:
        return ConvexityReport(True, diag, "separable in (z, F)")
    box = box or s.domain_box
    v_lo, v_hi = box["v"]
    v = np.linspace(v_lo, v_hi, n)
    a = 2.0 * s.p10 + 12.0 * s.p20 * v ** 2
    c = 2.0 * s.p02
    lam_min = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + s.p11 ** 2)
    worst = float(lam_min.min())
    return ConvexityReport(worst >= 0.0, worst,
                           "pointwise (v, F) Hessian check; lifted form remains non-convex")


# --------------------------------------------------------------------------
# map files
# --------------------------------------------------------------------------

def read_motor_map(path: str | Path) -> MotorEfficiencyMap:
    rows = _read_csv(path, ("force_n", "speed_mps", "eff"))
    f = np.unique(rows[:, 0])
    v = np.unique(rows[:, 1])
    if rows.shape[0] != f.size * v.size:
        raise ValueError(f"{path}: motor map is not a full rectangular grid")
    eff = np.full((f.size, v.size), np.nan)
    eff[np.searchsorted(f, rows[:, 0]), np.searchsorted(v, rows[:, 1])] = rows[:, 2]
    if np.isnan(eff).any():
        raise ValueError(f"{path}: duplicate or missing grid points")
    return MotorEfficiencyMap(f, v, eff)


def write_motor_map(emap: MotorEfficiencyMap, path: str | Path) -> None:
    lines = ["force_n,speed_mps,eff"]
    for i, f in enumerate(emap.force):
        for j, v in enumerate(emap.speed):
            lines.append(f"{f:.12g},{v:.12g},{emap.eff[i, j]:.12g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_fc_curve(path: str | Path) -> FuelCellEfficiencyCurve:
    rows = _read_csv(path, ("power_w", "eff"))
    return FuelCellEfficiencyCurve(rows[:, 0], rows[:, 1])


def write_fc_curve(curve: FuelCellEfficiencyCurve, path: str | Path) -> None:
    lines = ["power_w,eff"] + [f"{p:.12g},{e:.12g}" for p, e in zip(curve.power, curve.eff)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_csv(path, columns) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if tuple(header[:len(columns)]) != columns:
            raise ValueError(f"{path}: expected columns {','.join(columns)}")
        out = []
        for row in reader:
            if not row:
                continue
            try:
                out.append([float(x) for x in row[:len(columns)]])
            except ValueError as err:
                raise ValueError(f"{path}:{reader.line_num}: {err}") from None
    if not out:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(out)


# --------------------------------------------------------------------------
# bundled synthetic component maps
# --------------------------------------------------------------------------

MOTOR_COPPER = 6e-7       # 1/N: copper loss per metre k F^2
MOTOR_IRON = 10.0         # N s/m: iron and windage loss per metre k v
FC_EFFICIENCY = (0.54, 0.56, 0.53)   # at P_fc_min, peak, P_fc_max


def synthetic_motor_map(params: TrainParameters, v_max: float = 40.0,
                        nf: int = 59, nv: int = 41) -> MotorEfficiencyMap:
    """Loss-based map: per-metre loss ``k_cu F^2 + k_fe v``."""
    f = np.linspace(params.F_m_min, params.F_m_max, nf)
    v = np.linspace(0.0, v_max, nv)
    v[0] = 0.05
    F, V = np.meshgrid(f, v, indexing="ij")
    loss = MOTOR_COPPER * F ** 2 + MOTOR_IRON * V
    with np.errstate(divide="ignore", invalid="ignore"):
        eff = np.where(F > 0, F / (F + loss), (np.abs(F) - loss) / np.abs(F))
    eff = np.where(F == 0, 1.0, eff)
    return MotorEfficiencyMap(f, v, np.clip(eff, 1e-3, 1.0))


def synthetic_fc_curve(params: TrainParameters, n: int = 41) -> FuelCellEfficiencyCurve:
    """Single-peak curve from a quadratic fuel-power law ``a0 + a1 P + a2 P^2``."""
    from scipy.optimize import fsolve

    e_lo, e_pk, e_hi = FC_EFFICIENCY
    p_lo, p_hi = params.P_fc_min, params.P_fc_max

    def eqs(u):
        a0, a1, a2 = math.exp(u[0]), u[1], math.exp(u[2])
        eta = lambda p: p / (a0 + a1 * p + a2 * p * p)
        return [eta(p_lo) - e_lo, eta(p_hi) - e_hi, 1.0 / (a1 + 2.0 * math.sqrt(a0 * a2)) - e_pk]

    u = fsolve(eqs, [math.log(2e3), 1.7, math.log(1e-7)], xtol=1e-13)
    a0, a1, a2 = math.exp(u[0]), u[1], math.exp(u[2])
    p = np.linspace(p_lo, p_hi, n)
    return FuelCellEfficiencyCurve(p, p / (a0 + a1 * p + a2 * p * p))


def data_dir() -> Path:
    return Path(__file__).parent / "data"


def default_boxes(params: TrainParameters, v_stop: float, v_max: float) -> dict:
    return {"motor": {"F": [params.F_m_min, params.F_m_max], "v": [v_stop, v_max],
                      "P": [params.P_m_min, params.P_m_max]},
            "fuel_cell": {"P": [params.P_fc_min, params.P_fc_max], "v": [v_stop, v_max]},
            "battery": {"P": [params.P_batt_min, params.P_batt_max]}}


def fit_all(emap: MotorEfficiencyMap, curve: FuelCellEfficiencyCurve, params: TrainParameters,
            v_stop: float, v_max: float, threshold: float = DEFAULT_THRESHOLD) -> SurrogateSet:
    boxes = default_boxes(params, v_stop, v_max)
    motor = fit_motor_surrogate(emap, boxes["motor"], threshold=threshold)
    fc = fit_fuelcell_surrogate(curve, boxes["fuel_cell"]["P"], boxes["fuel_cell"]["v"],
                                threshold=threshold)
    batt = fit_battery_soc_surrogate(params.U_oc, params.R, params.Q_ah, boxes["battery"]["P"])
    return SurrogateSet(motor, fc, batt)
