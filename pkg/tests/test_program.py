import math
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrotrain.benchmark import benchmark_setup, default_surrogates
from hydrotrain.params import ScenarioConfig, TrainParameters, c_to_k
from hydrotrain.program import (INTERVAL_VARS, THERMAL_VARS, BuildError, ScheduleError,
                                build_concurrent, build_sequential, compute_average_delta_t,
                                external_force, extract_trajectory, scaling_range, tighten_split)
from hydrotrain.route import (RawRoutePoint, RouteInterval, RouteProfile, flat_profile,
                              insert_dwell_intervals, resample)
from hydrotrain.solver import solve

P = TrainParameters()


@pytest.fixture(scope="module")
def sur():
    return default_surrogates(P, 0.1, 33.5)


def solved(build, route, sc, sur):
    prog = build(route, P, sc, sur)
    out = solve(prog)
    assert out.optimal, out.message
    return prog, out, extract_trajectory(prog, out.x)


# -- scalar helpers -------------------------------------------------------------

def test_external_force_running():
    assert external_force(20.0, 400.0, 0.0, P) == pytest.approx(1743 + 76.4 * 20 + 6.2 * 400)
    assert external_force(20.0, 400.0, 0.0, P) == pytest.approx(5751.0)


def test_external_force_dwell_and_rest():
    assert external_force(7.0, 49.0, 0.01, P, is_dwell=True) == 0.0
    assert external_force(0.0, 0.0, 0.0, P) == pytest.approx(1743.0)


def test_external_force_grade():
    theta = math.asin(0.01)
    assert external_force(0.0, 0.0, theta, P) == pytest.approx(1743 + P.m * 9.81 * 0.01)


def _route_with_dwell(total_m, ds, n_stops, dwell_each):
    ivs = [RouteInterval(ds, 0.0, 30.0, position=i * ds) for i in range(int(total_m / ds))]
    for k in range(n_stops):
        ivs.append(RouteInterval(dwell_each * 0.1, 0.0, 0.1, 0.1, True, dwell_each))
    return RouteProfile(tuple(ivs), total_length=total_m, sampling=ds)


def test_average_delta_t_benchmark_arithmetic():
    route = _route_with_dwell(63_000.0, 10.0, 16, 30.0)
    assert compute_average_delta_t(route, 5220.0) == pytest.approx(4740.0 / 63000.0, rel=1e-12)


def test_average_delta_t_uniform():
    assert compute_average_delta_t(flat_profile(100, 10.0, 20.0), 100.0) == pytest.approx(0.1)


def test_average_delta_t_rejects_dwell_only_schedule():
    route = _route_with_dwell(1000.0, 10.0, 2, 50.0)
    with pytest.raises(ScheduleError):
        compute_average_delta_t(route, 100.0)


# -- program structure ------------------------------------------------------------

def one_interval():
    return flat_profile(1, 10.0, 20.0), ScenarioConfig(tau=3.0, v_initial=5.0, v_terminal=5.0)


def test_single_interval_program(sur):
    route, sc = one_interval()
    prog, out, r = solved(build_concurrent, route, sc, sur)
    assert prog.n >= 15
    assert r.journey_time == pytest.approx(3.0, rel=1e-6)
    assert abs(r.Fbrk[0]) <= 1e-6 * P.F_m_max
    # no braking: the motor supplies exactly the resistance at constant energy
    assert r.Fm[0] == pytest.approx(external_force(r.v[0], r.z[0], 0.0, P), rel=1e-5)


def test_sequential_has_fewer_columns(sur):
    route, sc = one_interval()
    conc = build_concurrent(route, P, sc, sur)
    seq = build_sequential(route, P, sc, sur)
    assert seq.n < conc.n
    assert not set(THERMAL_VARS) & set(seq.index)


@pytest.mark.parametrize("build,names", [
    (build_concurrent, INTERVAL_VARS),
    (build_sequential, tuple(n for n in INTERVAL_VARS if n not in THERMAL_VARS))])
def test_index_map_audit(build, names, sur):
    N = 7
    route = flat_profile(N, 20.0, 20.0)
    sc = ScenarioConfig(tau=20.0, v_initial=10.0, v_terminal=10.0)
    prog = build(route, P, sc, sur)
    states = 3 if build is build_concurrent else 2
    assert prog.n == N * len(names) + N + states
    cols = np.concatenate(list(prog.index.values()))
    assert np.array_equal(np.sort(cols), np.arange(prog.n))
    for name in names:
        assert prog.index[name].size == (N + 1 if name in ("z", "zeta", "T") else N)
    assert prog.index["t"].size == N


def test_benchmark_scaling_and_build_time():
    setup = benchmark_setup(20.0)
    t0 = time.perf_counter()
    prog = build_concurrent(setup.route, setup.params, setup.scenario, setup.surrogates)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    assert 6300 <= setup.route.n_intervals <= 6400
    assert 9e4 <= prog.n <= 1.2e5
    lo, hi = scaling_range(prog)
    assert lo >= 1e-4 and hi <= 1e4


def test_objective_is_tight_fuel_epigraph(sur):
    route = flat_profile(10, 20.0, 20.0)
    sc = ScenarioConfig(tau=22.0, v_initial=10.0, v_terminal=10.0)
    prog, out, r = solved(build_concurrent, route, sc, sur)
    assert prog.objective(out.x) == pytest.approx(r.fuel_epigraph.sum(), rel=1e-9)
    assert r.fuel == pytest.approx(r.fuel_epigraph.sum(), rel=1e-6)


def test_schedule_error_propagates(sur):
    pts = [RawRoutePoint(0, 0, 20, 60.0), RawRoutePoint(500, 0, 20, 0.0)]
    route = insert_dwell_intervals(resample(pts, 10.0), 0.1)
    with pytest.raises(ScheduleError):
        build_concurrent(route, P, ScenarioConfig(tau=50.0), sur)


def test_hot_start_rejected(sur):
    route, sc = one_interval()
    with pytest.raises(BuildError):
        build_concurrent(route, P, replace(sc, T_batt_0=c_to_k(45.0)), sur)


# -- rotated-cone encoding ----------------------------------------------------------

@pytest.fixture(scope="module")
def small_program(sur):
    route = flat_profile(3, 20.0, 30.0)
    sc = ScenarioConfig(tau=4.0, v_initial=20.0, v_terminal=20.0)
    return build_concurrent(route, P, sc, sur)


def _rsoc_member(s, tol=0.0):
    u, w, rest = s[0], s[1], s[2:]
    return u >= -tol and w >= -tol and 2 * u * w - rest @ rest >= -tol


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 30.0), st.floats(0.05, 20.0), st.integers(0, 2))
def test_v_lv_cone_encodes_reciprocal(small_program, v, ratio, j):
    prog = small_program
    product = ratio
    if abs(product - 1.0) < 1e-6:
        return
    x = np.zeros(prog.n)
    x[prog.index["v"][j]] = v
    x[prog.index["lv"][j]] = product / v
    xs = x / prog.col_scale
    base = prog.meta["families"]["v_lv"][j]
    rows = base + np.arange(3)
    slack = prog.h[rows] - prog.G[rows] @ xs
    assert _rsoc_member(slack) == (v * x[prog.index["lv"][j]] >= 1.0)


# -- solution properties ---------------------------------------------------------------

def test_fuel_decreases_with_more_time(sur):
    # above the speed where auxiliary load balances resistance, slowing down saves fuel
    route = flat_profile(50, 20.0, 30.0)
    fuel = []
    for tau in (46.0, 48.0, 50.0):
        sc = ScenarioConfig(tau=tau, v_initial=20.0, v_terminal=20.0)
        fuel.append(solved(build_concurrent, route, sc, sur)[2].fuel)
    assert fuel[0] >= fuel[1] * (1 - 1e-7) and fuel[1] >= fuel[2] * (1 - 1e-7)
    assert fuel[0] > fuel[2]


def test_unbounded_temperature_matches_sequential(sur):
    route = flat_profile(30, 20.0, 25.0)
    sc = ScenarioConfig(tau=35.0, v_initial=15.0, v_terminal=15.0).at_ambient(35.0)
    sc = replace(sc, v_initial=15.0, v_terminal=15.0)
    loose = replace(P, T_batt_max=c_to_k(500.0))
    conc = build_concurrent(route, loose, sc, sur)
    out = solve(conc)
    assert out.optimal
    rc = extract_trajectory(conc, out.x)
    assert np.max(rc.Qc) <= 1e-6 * P.Q_cool_max
    _, _, rs = solved(build_sequential, route, sc, sur)
    assert rc.fuel == pytest.approx(rs.fuel, rel=1e-6)


@pytest.fixture(scope="module")
def station_run(sur):
    pts = [RawRoutePoint(0, 0, 20, 0.0), RawRoutePoint(500, 2, 20, 20.0),
           RawRoutePoint(1000, 0, 20, 0.0)]
    route = insert_dwell_intervals(resample(pts, 10.0), 0.1)
    sc = ScenarioConfig(tau=320.0)
    return solved(build_concurrent, route, sc, sur)


def test_extraction_echoes_equalities(station_run):
    prog, out, r = station_run
    assert r.journey_time == pytest.approx(320.0, rel=1e-6)
    assert abs(r.zeta[-1] - r.zeta[0]) <= 1e-6
    assert r.zeta[0] == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(r.v[r.is_dwell], 0.1, rtol=0, atol=1e-9)
    assert np.allclose(r.P_fc, r.Ffc * r.v) and r.time[-1] == pytest.approx(r.journey_time)


def test_extraction_rejects_non_optimal(station_run):
    prog, out, _ = station_run
    with pytest.raises(ValueError):
        extract_trajectory(prog, out.x, status="iteration-limit")


def test_tight_split_keeps_objective(station_run):
    prog, out, _ = station_run
    raw = extract_trajectory(prog, out.x, tighten=False)
    tight = tighten_split(raw)
    assert tight.fuel == raw.fuel and np.array_equal(tight.Qc, raw.Qc)
    assert np.all(tight.Fdis * tight.Fchr == 0.0)
    assert np.all(tight.Fdis + tight.Fchr == tight.Fbatt)
    assert np.all(tight.T_batt <= raw.T_batt + 1e-9)
    assert tight.T_batt.max() <= P.T_batt_max + 1e-6
