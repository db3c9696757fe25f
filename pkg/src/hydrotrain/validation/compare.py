"""Concurrent versus sequential method on one scenario, judged by forward simulation."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

from ..conic import ConicProgram
from ..params import ScenarioConfig, TrainParameters, k_to_c
from ..program import TrajectoryResult, build_concurrent, build_sequential, extract_trajectory
from ..route import RouteProfile
from ..solver import SolveOutcome, SolverSettings, solve
from ..surrogates import SurrogateSet
from .simulate import ExactModels, SimTrace, Thermostat, simulate_forward

# flags reported with every comparison
DESIGN_FLAGS = {
    "sequential_cooling": "hysteresis thermostat; on at T_max - 2 K, off at T_max - 4 K",
    "sequential_cooling_supply": "cooling electrical draw charged to the fuel cell at curve "
                                 "efficiency; battery dispatch frozen to the sequential plan",
    "fuel_accounting": "fuel from the forward simulation through the exact efficiency curve",
    "simulation": "zero-order hold of commands per space interval, exact battery and heat models",
}


class SolveFailure(RuntimeError):
    def __init__(self, method: str, outcome):
        super().__init__(f"{method} solve ended {outcome.status}: {outcome.message}")
        self.method = method
        self.outcome = outcome


@dataclass
class MethodRun:
    result: TrajectoryResult
    trace: SimTrace
    iterations: int
    solve_seconds: float
    program: ConicProgram | None = None
    outcome: SolveOutcome | None = None


@dataclass
class ComparisonReport:
    ambient_c: float
    fuel_concurrent: float            # J, simulated
    fuel_sequential: float            # J, simulated
    planned_fuel_concurrent: float    # J, surrogate objective
    planned_fuel_sequential: float
    peak_T_concurrent: float          # K, simulated
    peak_T_sequential: float
    cooling_energy_concurrent: float  # J electrical, simulated
    cooling_energy_sequential: float
    violations_concurrent: dict = field(default_factory=dict)
    violations_sequential: dict = field(default_factory=dict)
    design_flags: dict = field(default_factory=lambda: dict(DESIGN_FLAGS))

    @property
    def saving(self) -> float:
        return 1.0 - self.fuel_concurrent / self.fuel_sequential

    def to_json(self) -> dict:
        out = asdict(self)
        out["saving"] = self.saving
        out["peak_T_concurrent_C"] = k_to_c(self.peak_T_concurrent)
        out["peak_T_sequential_C"] = k_to_c(self.peak_T_sequential)
        return out


def violations(trace: SimTrace, params: TrainParameters, margin_K: float = 0.5) -> dict:
    """Constraint flags of a simulated run (True means violated)."""
    return {
        "T_batt_above_max": bool(trace.peak_T > params.T_batt_max + margin_K),
        "zeta_outside_bounds": bool(trace.zeta.min() < params.zeta_min - 5e-3
                                    or trace.zeta.max() > params.zeta_max + 5e-3),
        "fc_overload": bool(trace.fc_overload),
    }


def run_method(method: str, route: RouteProfile, params: TrainParameters,
               scenario: ScenarioConfig, surrogates: SurrogateSet,
               models: ExactModels | None = None,
               settings: SolverSettings | None = None) -> MethodRun:
    build = {"concurrent": build_concurrent, "sequential": build_sequential}[method]
    prog = build(route, params, scenario, surrogates)
    t0 = time.perf_counter()
    out = solve(prog, settings)
    elapsed = time.perf_counter() - t0
    if not out.optimal:
        raise SolveFailure(method, out)
    result = extract_trajectory(prog, out.x)
    thermostat = Thermostat.for_params(params) if method == "sequential" else None
    trace = simulate_forward(result, route, scenario, params, models=models,
                             thermostat=thermostat)
    return MethodRun(result, trace, out.iterations, elapsed, prog, out)


def compare_methods(route: RouteProfile, params: TrainParameters, scenario: ScenarioConfig,
                    surrogates: SurrogateSet, models: ExactModels | None = None,
                    settings: SolverSettings | None = None,
                    ) -> tuple[ComparisonReport, MethodRun, MethodRun]:
    """Solve both programs, simulate both, and report simulated fuel and temperatures."""
    conc = run_method("concurrent", route, params, scenario, surrogates, models, settings)
    seq = run_method("sequential", route, params, scenario, surrogates, models, settings)
    report = ComparisonReport(
        ambient_c=k_to_c(scenario.T_amb),
        fuel_concurrent=conc.trace.total_fuel, fuel_sequential=seq.trace.total_fuel,
        planned_fuel_concurrent=conc.result.fuel, planned_fuel_sequential=seq.result.fuel,
        peak_T_concurrent=conc.trace.peak_T, peak_T_sequential=seq.trace.peak_T,
        cooling_energy_concurrent=conc.trace.total_cooling_electrical,
        cooling_energy_sequential=seq.trace.total_cooling_electrical,
        violations_concurrent=violations(conc.trace, params),
        violations_sequential=violations(seq.trace, params))
    return report, conc, seq
