import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hydrotrain.benchmark import default_models, default_surrogates
from hydrotrain.params import ScenarioConfig, TrainParameters, c_to_k
from hydrotrain.program import TrajectoryResult, build_concurrent, extract_trajectory
from hydrotrain.route import RawRoutePoint, flat_profile, insert_dwell_intervals, resample
from hydrotrain.solver import solve
from hydrotrain.validation import (DPError, DPGrid, SimulationError, Thermostat, check_tightness,
                                   compare_methods, dp_oracle, relaxation_slacks,
                                   simulate_forward, thermostat_cooling)

P = TrainParameters()
MODELS = default_models()


@pytest.fixture(scope="module")
def sur():
    return default_surrogates(P, 0.1, 33.5)


# -- thermostat --------------------------------------------------------------------

def test_thermostat_idle_when_cool():
    assert thermostat_cooling(c_to_k(30.0), False, P) == (0.0, False)


def test_thermostat_full_rate_when_hot():
    rate, on = thermostat_cooling(c_to_k(39.0), False, P)
    assert on and rate == 15e3
    assert rate / P.cop == pytest.approx(3750.0)


def test_thermostat_hysteresis():
    th = Thermostat.for_params(P)
    assert th(c_to_k(38.5)) == 15e3
    assert th(c_to_k(37.0)) == 15e3          # inside the band: stays on
    assert th(c_to_k(35.9)) == 0.0
    assert th(c_to_k(37.0)) == 0.0           # inside the band: stays off


# -- forward simulation ----------------------------------------------------------------

def cruise(n=20, ds=50.0, v=10.0, Fbatt=0.0, T0=None):
    """Hand-built plan: constant speed on level track, motor cancels resistance."""
    sc = ScenarioConfig(tau=n * ds / v, v_initial=v, v_terminal=v)
    sc = replace(sc, T_batt_0=sc.T_amb if T0 is None else T0)
    F = P.davis_a + P.davis_b * v + P.davis_c * v * v
    one = np.ones(n)
    res = TrajectoryResult(
        method="concurrent", delta_s=ds * one, is_dwell=np.zeros(n, bool),
        z=np.full(n + 1, v * v), v=v * one, zeta=np.full(n + 1, 0.5),
        T_batt=np.full(n + 1, sc.T_batt_0), Fm=F * one, Fbrk=0 * one, Ffc=0 * one,
        Fbatt=Fbatt * one, Fdis=np.maximum(Fbatt, 0) * one, Fchr=np.minimum(Fbatt, 0) * one,
        Qc=0 * one, lv=one / v, lz=0 * one, dzeta=0 * one, dT=0 * one, fuel_epigraph=0 * one,
        fuel=0.0, journey_time=sc.tau, params=P, scenario=sc)
    return res, flat_profile(n, ds, 20.0), sc


def test_cruise_holds_speed_and_charge():
    res, route, sc = cruise()
    tr = simulate_forward(res, route, sc, P, models=MODELS)
    assert np.allclose(tr.v, 10.0, rtol=1e-9)
    assert tr.time[-1] == pytest.approx(100.0, abs=1e-6)
    assert np.allclose(tr.position, 10.0 * tr.time, atol=1e-6)
    assert np.all(tr.zeta == 0.5)
    assert np.allclose(tr.T_batt, sc.T_amb)
    # fuel rate is constant: motor electrical power plus auxiliary load through the curve
    F = res.Fm[0]
    p_fc = MODELS.motor_electrical(F, 10.0) + P.P_aux
    eff = np.interp(p_fc, MODELS.fc_curve.power, MODELS.fc_curve.eff)
    assert tr.total_fuel == pytest.approx(p_fc / eff * 100.0, rel=1e-9)


def test_cruise_battery_discharge_matches_closed_form():
    res, route, sc = cruise(Fbatt=5e3)
    tr = simulate_forward(res, route, sc, P, models=MODELS)
    p = 5e3 * 10.0
    current = (P.U_oc - math.sqrt(P.U_oc ** 2 - 4 * p * P.R)) / (2 * P.R)
    assert tr.zeta[-1] == pytest.approx(0.5 - current * 100.0 / (3600 * P.Q_ah), rel=1e-9)
    assert tr.T_batt[-1] > sc.T_amb


def test_battery_power_beyond_limit_raises():
    res, route, sc = cruise(Fbatt=5e6 / 10.0)
    with pytest.raises(SimulationError, match="U_oc"):
        simulate_forward(res, route, sc, P, models=MODELS)


def test_route_mismatch_rejected():
    res, _, sc = cruise()
    with pytest.raises(ValueError):
        simulate_forward(res, flat_profile(3, 50.0, 20.0), sc, P, models=MODELS)


def two_station_line():
    pts = [RawRoutePoint(0, 0, 20, 10.0), RawRoutePoint(500, 3, 20, 20.0),
           RawRoutePoint(1000, 0, 20, 10.0)]
    route = insert_dwell_intervals(resample(pts, 10.0), 0.1)
    return route, ScenarioConfig(tau=200.0).at_ambient(35.0)


@pytest.fixture(scope="module")
def station_plan(sur):
    route, sc = two_station_line()
    prog = build_concurrent(route, P, sc, sur)
    out = solve(prog)
    assert out.optimal
    return route, sc, extract_trajectory(prog, out.x)


def test_trace_invariants(station_plan):
    route, sc, res = station_plan
    tr = simulate_forward(res, route, models=MODELS)
    cols = tr.columns()
    assert len({v.size for v in cols.values()}) == 1
    assert np.all(np.diff(tr.position) >= 0) and np.all(np.diff(tr.time) > 0)
    assert np.all((tr.zeta >= 0) & (tr.zeta <= 1))
    assert tr.position[-1] == pytest.approx(res.position[-1], rel=1e-9)
    # interval times are booked at the entry speed, so the replay runs slightly early
    assert tr.time[-1] == pytest.approx(sc.tau, rel=0.03)


def test_energy_conservation_per_step(station_plan):
    route, _, res = station_plan
    for th in (None, Thermostat.for_params(P)):
        tr = simulate_forward(res, route, models=MODELS, thermostat=th)
        supply = np.diff(tr.fc_energy + tr.batt_energy)
        use = np.diff(tr.motor_energy + tr.aux_energy + tr.cooling_electrical + tr.dumped_energy)
        scale = np.maximum(np.abs(np.diff(tr.fc_energy)), 1.0)
        assert np.max(np.abs(supply - use) / scale) <= 1e-6


# -- tightness ------------------------------------------------------------------------------

def test_tight_solution_reports_tight(station_plan):
    _, _, res = station_plan
    rep = check_tightness(res)
    for fam in ("v_lv", "z_v", "balance", "soc"):
        assert rep.families[fam].max_slack <= 1e-5
        assert rep.families[fam].min_slack >= -1e-6


def test_loose_energy_flagged(station_plan):
    _, _, res = station_plan
    loose = replace(res, z=np.concatenate([res.v ** 2 + 1.0, res.z[-1:]]))
    rep = check_tightness(loose)
    fam = rep.families["z_v"]
    assert fam.n_violating == res.n_intervals
    assert np.allclose(fam.slack, 1.0 / (res.v ** 2 + 1.0))
    assert not rep.tight


def test_split_checked_only_at_bound(station_plan):
    _, _, res = station_plan
    slacks = relaxation_slacks(res)
    T = np.maximum(res.T_batt[:-1], res.T_batt[1:])
    for fam in ("chr", "dis"):
        _, mask = slacks[fam]
        assert not np.any(mask & (T < P.T_batt_max * (1 - 1e-5)))


# -- DP oracle -------------------------------------------------------------------------------

def test_dp_single_interval_matches_enumeration(sur):
    route = flat_profile(1, 50.0, 20.0)
    sc = ScenarioConfig(tau=5.0, v_initial=10.0, v_terminal=10.0)
    got = dp_oracle(route, P, sc, sur)
    # one stage, fixed end speed and SOC: the only admissible control is
    # constant speed with the battery idle
    F = P.davis_a + P.davis_b * 10.0 + P.davis_c * 100.0
    Ffc = sur.motor(F, 100.0) + P.P_aux / 10.0
    assert got.fuel == pytest.approx(sur.fuel_cell(Ffc, 100.0) * 50.0, rel=1e-12)
    assert got.Fbatt[0] == 0.0 and got.Fbrk[0] == 0.0


def test_dp_refinement_never_worse(sur):
    rng = np.random.default_rng(0)
    pts = [RawRoutePoint(50.0 * i, 0.0, 20.0) for i in range(11)]
    pts = [replace(p, elevation=float(e)) for p, e in
           zip(pts, np.concatenate([[0.0], np.cumsum(rng.uniform(-0.2, 0.2, 10))]))]
    route = resample(pts, 50.0)
    sc = ScenarioConfig(tau=60.0, v_initial=10.0, v_terminal=10.0)
    grid = DPGrid()
    coarse = dp_oracle(route, P, sc, sur, grid)
    fine = dp_oracle(route, P, sc, sur, grid.refined())
    assert fine.fuel <= coarse.fuel
    assert coarse.journey_time == pytest.approx(60.0, rel=1e-12)
    assert coarse.zeta[-1] == coarse.zeta[0]


def test_dp_bounds_convex_optimum(sur):
    route = flat_profile(10, 50.0, 20.0)
    sc = ScenarioConfig(tau=60.0, v_initial=10.0, v_terminal=10.0)
    prog = build_concurrent(route, P, sc, sur)
    out = solve(prog)
    convex = extract_trajectory(prog, out.x).fuel
    assert convex <= dp_oracle(route, P, sc, sur).fuel * (1 + 1e-8)


def test_dp_rejects_unsupported(sur):
    sc = ScenarioConfig(tau=5.0, v_initial=10.0, v_terminal=10.0)
    with pytest.raises(DPError):
        dp_oracle(flat_profile(31, 50.0, 20.0), P, sc, sur)
    with pytest.raises(DPError):
        dp_oracle(flat_profile(1, 50.0, 20.0), P, replace(sc, tau=5.2), sur)
    with pytest.raises(DPError):
        DPGrid(soc_points=4)


# -- comparison ----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_comparison(sur):
    route, sc = two_station_line()
    return compare_methods(route, P, sc, sur, MODELS)


def test_report_invariants(small_comparison):
    report, conc, seq = small_comparison
    assert report.saving == 1.0 - report.fuel_concurrent / report.fuel_sequential
    assert report.fuel_concurrent == conc.trace.total_fuel
    assert report.fuel_sequential == seq.trace.total_fuel
    assert seq.trace.cooling_policy == "thermostat"
    assert conc.trace.cooling_policy == "commanded"
    data = json.loads(json.dumps(report.to_json()))
    assert data["saving"] == pytest.approx(report.saving)
    assert set(data["design_flags"]) >= {"sequential_cooling", "fuel_accounting"}
    assert set(data["violations_concurrent"]) == {"T_batt_above_max", "zeta_outside_bounds",
                                                  "fc_overload"}


def test_sequential_plan_is_a_relaxation(small_comparison):
    report, conc, seq = small_comparison
    assert report.planned_fuel_sequential <= report.planned_fuel_concurrent * (1 + 1e-7)
    assert conc.solve_seconds > 0 and conc.iterations > 0


def test_cold_methods_agree(benchmark_runs):
    report = benchmark_runs(-5.0)[1]
    assert report.planned_fuel_concurrent == pytest.approx(report.planned_fuel_sequential,
                                                           rel=1e-6)
    rep = check_tightness(benchmark_runs(-5.0)[2].result)
    assert not rep.families["chr"].applicable.any()
    assert not rep.families["dis"].applicable.any()


def test_hot_sequential_plan_cheaper(benchmark_runs):
    report = benchmark_runs(35.0)[1]
    assert report.planned_fuel_sequential < report.planned_fuel_concurrent


def test_benchmark_energy_conservation(benchmark_runs):
    tr = benchmark_runs(20.0)[2].trace
    supply = np.diff(tr.fc_energy + tr.batt_energy)
    use = np.diff(tr.motor_energy + tr.aux_energy + tr.cooling_electrical + tr.dumped_energy)
    assert np.max(np.abs(supply - use) / np.maximum(np.abs(np.diff(tr.fc_energy)), 1.0)) <= 1e-6
    assert np.all(np.diff(tr.position) >= 0)
