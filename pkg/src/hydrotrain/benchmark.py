"""Synthetic benchmark journey and default model setup.

The bundled route is a deterministic synthetic line: 63 km, a station at each
end plus 16 intermediate stops, rolling elevation and piecewise speed limits.
:func:`benchmark_points` regenerates the bundled CSV exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .params import ScenarioConfig, TrainParameters
from .route import (RawRoutePoint, RouteProfile, bundled_route_path, insert_dwell_intervals,
                    load_route, resample)
from .surrogates import (SurrogateSet, data_dir, fit_all, read_fc_curve, read_motor_map)

LENGTH = 63_000.0
N_POINTS = 64
DWELL = 30.0
# station positions (m): origin, 16 intermediate stops, terminus
STATIONS = (0.0, 2_600.0, 5_900.0, 8_300.0, 11_200.0, 15_400.0, 18_100.0, 21_900.0, 25_300.0,
            29_800.0, 33_500.0, 36_400.0, 40_900.0, 45_200.0, 49_800.0, 53_600.0, 58_100.0,
            LENGTH)
SPEED_LIMITS = (20.0, 24.6, 29.0, 33.5)


def benchmark_points(seed: int = 7, relief: float = 26.0) -> list[RawRoutePoint]:
    """Deterministic synthetic route with ``N_POINTS`` points."""
    rng = np.random.default_rng(seed)
    n_extra = N_POINTS - len(STATIONS)
    extra = []
    # spread the non-station points over the inter-station gaps, proportional to gap length
    gaps = np.diff(STATIONS)
    counts = np.floor(gaps / gaps.sum() * n_extra).astype(int)
    for k in np.argsort(-(gaps / gaps.sum() * n_extra - counts))[: n_extra - counts.sum()]:
        counts[k] += 1
    for a, b, k in zip(STATIONS[:-1], STATIONS[1:], counts):
        extra.extend(a + (b - a) * (np.arange(1, k + 1) / (k + 1)))
    pos = np.sort(np.concatenate([STATIONS, extra]))
    # rolling relief: a few long waves plus a gentle overall rise
    x = pos / LENGTH
    elev = (25.0 + 80.0 * x
            + relief * np.sin(2 * np.pi * 3.0 * x + 0.4)
            + 0.6 * relief * np.sin(2 * np.pi * 7.0 * x + 1.9)
            + 0.25 * relief * rng.standard_normal(pos.size))
    elev = np.round(elev, 1)
    limits = rng.choice(SPEED_LIMITS, size=pos.size, p=(0.15, 0.3, 0.35, 0.2))
    station = set(STATIONS)
    return [RawRoutePoint(float(p), float(e), float(v), DWELL if p in station else 0.0)
            for p, e, v in zip(pos, elev, limits)]


@dataclass
class Setup:
    params: TrainParameters
    scenario: ScenarioConfig
    route: RouteProfile
    surrogates: SurrogateSet


def default_surrogates(params: TrainParameters, v_stop: float, v_max: float,
                       directory: Path | None = None) -> SurrogateSet:
    directory = directory or data_dir()
    return fit_all(read_motor_map(directory / "motor_map.csv"),
                   read_fc_curve(directory / "fc_curve.csv"), params, v_stop, v_max)


def benchmark_setup(ambient_c: float = 20.0, delta_s: float | None = None,
                    route_path: Path | None = None) -> Setup:
    params = TrainParameters()
    scenario = ScenarioConfig().at_ambient(ambient_c)
    if delta_s is not None:
        from dataclasses import replace
        scenario = replace(scenario, delta_s=delta_s)
    points = load_route(route_path or bundled_route_path())
    route = insert_dwell_intervals(resample(points, scenario.delta_s), scenario.v_stop)
    v_max = max(iv.v_max for iv in route.intervals)
    sur = default_surrogates(params, scenario.v_stop, v_max)
    return Setup(params, scenario, route, sur)


def default_models(directory: Path | None = None):
    """Exact motor map and fuel-cell curve used by the forward simulation."""
    from .validation.simulate import ExactModels
    directory = directory or data_dir()
    return ExactModels(read_motor_map(directory / "motor_map.csv"),
                       read_fc_curve(directory / "fc_curve.csv"))
