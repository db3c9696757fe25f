import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import lsq_linear

from hydrotrain.params import TrainParameters
from hydrotrain.surrogates import (FitError, FuelCellEfficiencyCurve, MotorEfficiencyMap,
                                   QuadraticSurrogate, SurrogateSet, certify_convexity,
                                   data_dir, fit_all, fit_battery_soc_surrogate,
                                   fit_fuelcell_surrogate, fit_motor_surrogate, read_fc_curve,
                                   read_motor_map, synthetic_fc_curve, synthetic_motor_map,
                                   write_fc_curve, write_motor_map)

P = TrainParameters()
FORCE = np.linspace(-87e3, 87e3, 31)
SPEED = np.linspace(0.1, 35.0, 25)
BOX = {"F": [-87e3, 87e3], "v": [0.1, 35.0]}


def const_map(eta):
    return MotorEfficiencyMap(FORCE, SPEED, np.full((FORCE.size, SPEED.size), eta))


def test_lossless_motor():
    s = fit_motor_surrogate(const_map(1.0), BOX)
    assert s.p01 == pytest.approx(1.0, rel=1e-9)
    # remaining terms contribute nothing anywhere in the box
    F, z = np.meshgrid(FORCE, SPEED ** 2, indexing="ij")
    assert np.max(np.abs(s(F, z) - F)) < 1e-6
    assert s.p11 == 0.0 and s.fit_rms < 1e-9


def test_constant_efficiency_discharge():
    s = fit_motor_surrogate(const_map(0.9), {"F": [0.0, 87e3], "v": [0.1, 35.0]})
    assert s.p01 == pytest.approx(1 / 0.9, rel=1e-9)
    assert s.fit_rms < 1e-9


def test_motor_fit_matches_independent_lsq():
    emap = synthetic_motor_map(P)
    box = {"F": [P.F_m_min, P.F_m_max], "v": [0.1, 33.5]}
    s = fit_motor_surrogate(emap, box)
    # independent oracle: bounded least squares over the same samples and weights
    FF, VV = np.meshgrid(emap.force, emap.speed, indexing="ij")
    keep = (VV >= 0.1) & (VV <= 33.5)
    F, z = FF[keep], VV[keep] ** 2
    eta = emap.eff[keep]
    y = np.where(F >= 0, F / eta, F * eta)
    w = 1.0 / np.maximum(np.abs(y), 0.05 * np.abs(y).max())
    X = np.column_stack([np.ones_like(F), z, F, z * z, F * F])
    scale = np.abs(X * w[:, None]).max(axis=0)
    sol = lsq_linear(X * w[:, None] / scale, y * w,
                     bounds=([-np.inf] * 3 + [0, 0], [np.inf] * 5), method="bvls", tol=1e-14)
    ref = sol.x / scale
    ours = np.array([s.p00, s.p10, s.p01, s.p20, s.p02])
    assert s.p11 == 0.0
    assert np.allclose(X @ ours, X @ ref, rtol=0, atol=1e-6 * np.abs(y).max())
    assert np.allclose(ours, ref, rtol=1e-5, atol=1e-12)


def test_motor_map_must_cover_box():
    with pytest.raises(FitError):
        fit_motor_surrogate(const_map(0.9), {"F": [-90e3, 87e3], "v": [0.1, 35.0]})


def test_motor_fit_threshold():
    rng = np.random.default_rng(1)
    eff = rng.uniform(0.3, 1.0, (FORCE.size, SPEED.size))
    with pytest.raises(FitError):
        fit_motor_surrogate(MotorEfficiencyMap(FORCE, SPEED, eff), BOX)


def test_fuelcell_constant_efficiency():
    curve = FuelCellEfficiencyCurve(np.linspace(24e3, 400e3, 20), np.full(20, 0.5))
    s = fit_fuelcell_surrogate(curve, (24e3, 400e3), (0.1, 33.5))
    assert s.p01 == pytest.approx(2.0, rel=1e-8)
    assert s.fit_rms < 1e-8


def test_fuelcell_peak_penalises_high_force():
    s = fit_fuelcell_surrogate(synthetic_fc_curve(P), (24e3, 400e3), (0.1, 33.5))
    F, z, h = 2e4, 100.0, 1e3
    second = (s(F + h, z) - 2 * s(F, z) + s(F - h, z)) / h ** 2
    assert s.p02 > 0 and second > 0


def test_fuelcell_coverage_error():
    curve = FuelCellEfficiencyCurve(np.linspace(60e3, 400e3, 10), np.full(10, 0.5))
    with pytest.raises(FitError, match="24000"):
        fit_fuelcell_surrogate(curve, (24e3, 400e3), (0.1, 33.5))


def exact_rate(p, U, R, Q_ah):
    # direct closed form, independent of the package's rationalised evaluation
    return (U - np.sqrt(U ** 2 - 4 * p * R)) / (2 * R) / (3600 * Q_ah)


def test_battery_zero_power():
    b = fit_battery_soc_surrogate(P.U_oc, P.R, P.Q_ah, (-600e3, 600e3))
    assert b.rate(0.0) == 0.0


def test_battery_full_power():
    b = fit_battery_soc_surrogate(P.U_oc, P.R, P.Q_ah, (-600e3, 600e3))
    current = (600 - math.sqrt(600 ** 2 - 4 * 600e3 * 0.0217)) / (2 * 0.0217)
    exact = current / (3600 * P.Q_ah)
    assert b.rate(600e3) == pytest.approx(exact, rel=0.01)
    assert b.alpha >= 0


def test_battery_lossless_limit():
    b = fit_battery_soc_surrogate(P.U_oc, 1e-12, P.Q_ah, (-600e3, 600e3))
    assert b.alpha == pytest.approx(0.0, abs=1e-22)
    assert b.beta == pytest.approx(1 / (P.U_oc * 3600 * P.Q_ah), rel=1e-9)


def test_battery_validity_bound():
    with pytest.raises(FitError):
        fit_battery_soc_surrogate(P.U_oc, P.R, P.Q_ah, (-600e3, P.U_oc ** 2 / (4 * P.R) * 1.01))


def test_battery_sign_consistency():
    b = fit_battery_soc_surrogate(P.U_oc, P.R, P.Q_ah, (-600e3, 600e3))
    p = np.linspace(-600e3, 600e3, 2001)
    p = p[np.abs(p) > 1e3]
    assert np.all(np.sign(b.rate(p)) == np.sign(exact_rate(p, P.U_oc, P.R, P.Q_ah)))


def test_certify_examples():
    diag = QuadraticSurrogate(0, 0, 0, 0, 1.0, 1.0, 0.0)
    assert certify_convexity(diag).passed
    bad = QuadraticSurrogate(0, 0, 0, 0, 1.0, -1.0, 0.0)
    assert not certify_convexity(bad).passed


def test_certify_cross_term_mode():
    s = QuadraticSurrogate(0, 1.0, 0, 0.5, 1.0, 1.0, 0.0, domain_box={"v": [0.1, 30.0]})
    rep = certify_convexity(s)
    # Hessian [[2 + 12 v^2, 0.5], [0.5, 2]] is PD for every v
    assert rep.passed and rep.worst_eigenvalue > 0
    s = QuadraticSurrogate(0, 0.0, 0, 5.0, 1e-6, 1.0, 0.0, domain_box={"v": [0.1, 1.0]})
    assert not certify_convexity(s).passed


@pytest.fixture(scope="module")
def bundled():
    sur = fit_all(read_motor_map(data_dir() / "motor_map.csv"),
                  read_fc_curve(data_dir() / "fc_curve.csv"), P, 0.1, 33.5)
    return sur


def test_bundled_fits(bundled):
    for s in (bundled.motor, bundled.fuel_cell):
        assert s.fit_rms <= 0.03
        assert s.p95_rel_error <= 0.03 * 3
        rep = certify_convexity(s)
        assert rep.passed and rep.worst_eigenvalue >= 0


def test_bundled_maps_regenerate(tmp_path):
    write_motor_map(synthetic_motor_map(P), tmp_path / "m.csv")
    write_fc_curve(synthetic_fc_curve(P), tmp_path / "f.csv")
    assert (tmp_path / "m.csv").read_text() == (data_dir() / "motor_map.csv").read_text()
    assert (tmp_path / "f.csv").read_text() == (data_dir() / "fc_curve.csv").read_text()


def test_json_round_trip_and_reproducible(bundled, tmp_path):
    bundled.save(tmp_path / "a")
    again = fit_all(read_motor_map(data_dir() / "motor_map.csv"),
                    read_fc_curve(data_dir() / "fc_curve.csv"), P, 0.1, 33.5)
    again.save(tmp_path / "b")
    for f in SurrogateSet.FILES.values():
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert SurrogateSet.load(tmp_path / "a") == bundled


def test_map_validation():
    with pytest.raises(ValueError):
        MotorEfficiencyMap(FORCE, SPEED, np.full((FORCE.size, SPEED.size), 1.2))
    with pytest.raises(ValueError):
        FuelCellEfficiencyCurve(np.array([2.0, 1.0]), np.array([0.5, 0.5]))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 1.0))
def test_constant_map_property(eta):
    s = fit_motor_surrogate(const_map(eta), {"F": [0.0, 87e3], "v": [0.1, 35.0]})
    assert s.p01 == pytest.approx(1 / eta, rel=1e-8)
    assert s.p20 >= 0 and s.p02 >= 0 and s.p11 == 0
