"""Route ingestion: CSV parsing, uniform space-domain resampling and dwell intervals.

Route CSV columns, in this order::

    position_m,elevation_m,speed_limit_mps,dwell_s

A speed limit applies from its point up to the next point.  A positive
``dwell_s`` marks a station stop at that position.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

COLUMNS = ("position_m", "elevation_m", "speed_limit_mps", "dwell_s")


class RouteError(ValueError):
    """Malformed route data."""


@dataclass(frozen=True)
class RawRoutePoint:
    position: float
    elevation: float
    speed_limit: float
    station_dwell: float = 0.0


@dataclass(frozen=True)
class RouteInterval:
    delta_s: float
    grade_angle: float
    v_max: float
    v_min: float = 0.0
    is_dwell: bool = False
    dwell_time: float = 0.0
    position: float = 0.0       # track position of the interval start


@dataclass(frozen=True)
class RouteProfile:
    intervals: tuple[RouteInterval, ...]
    total_length: float
    sampling: float
    # (position, dwell seconds) of every station marker not yet expanded
    stations: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    @property
    def n_intervals(self) -> int:
        return len(self.intervals)

    def array(self, name: str) -> np.ndarray:
        return np.array([getattr(iv, name) for iv in self.intervals])

    @property
    def delta_s(self) -> np.ndarray:
        return self.array("delta_s")

    @property
    def grade(self) -> np.ndarray:
        return self.array("grade_angle")

    @property
    def is_dwell(self) -> np.ndarray:
        return self.array("is_dwell").astype(bool)

    @property
    def total_dwell(self) -> float:
        return float(sum(iv.dwell_time for iv in self.intervals if iv.is_dwell))


def load_route(path: str | Path) -> list[RawRoutePoint]:
    """Parse a route CSV; errors name the offending (1-based) file line."""
    path = Path(path)
    points: list[RawRoutePoint] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise RouteError(f"{path}: empty route file") from None
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise RouteError(f"{path}: missing column(s) {', '.join(missing)}")
        if tuple(header[:4]) != COLUMNS:
            raise RouteError(f"{path}: columns must be {','.join(COLUMNS)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 4:
                raise RouteError(f"{path}:{line}: expected 4 fields, found {len(row)}")
            try:
                pos, elev, lim, dwell = (float(c) for c in row[:4])
            except ValueError as err:
                raise RouteError(f"{path}:{line}: {err}") from None
            if not all(math.isfinite(v) for v in (pos, elev, lim, dwell)):
                raise RouteError(f"{path}:{line}: non-finite value")
            if lim <= 0:
                raise RouteError(f"{path}:{line}: speed limit must be positive")
            if dwell < 0:
                raise RouteError(f"{path}:{line}: dwell time must be non-negative")
            if points and pos <= points[-1].position:
                raise RouteError(f"{path}:{line}: positions must be strictly increasing "
                                 f"({pos:g} after {points[-1].position:g})")
            points.append(RawRoutePoint(pos, elev, lim, dwell))
    if len(points) < 2:
        raise RouteError(f"{path}: a route needs at least two points")
    return points


def write_route(points: list[RawRoutePoint], path: str | Path) -> None:
    lines = [",".join(COLUMNS)]
    lines += [f"{p.position:.12g},{p.elevation:.12g},{p.speed_limit:.12g},{p.station_dwell:.12g}"
              for p in points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    pad = width // 2
    xp = np.pad(x, (pad, width - 1 - pad), mode="edge")
    return np.convolve(xp, np.ones(width) / width, mode="valid")


def resample(points: list[RawRoutePoint], delta_s: float,
             smoothing: int = 0) -> RouteProfile:
    """Resample onto intervals of exactly ``delta_s`` metres.

    Elevation is interpolated linearly (then optionally smoothed with a centred
    moving average of ``smoothing`` samples); each interval takes the most
    restrictive speed limit it overlaps.  A tail shorter than ``delta_s`` is
    dropped.
    """
    if not delta_s > 0:
        raise RouteError("delta_s must be positive")
    pos = np.array([p.position for p in points], dtype=float)
    elev = np.array([p.elevation for p in points], dtype=float)
    lim = np.array([p.speed_limit for p in points], dtype=float)
    length = pos[-1] - pos[0]
    n = int(math.floor(length / delta_s + 1e-9))
    if n < 1:
        raise RouteError(f"delta_s = {delta_s:g} m exceeds the route length {length:g} m")
    nodes = pos[0] + delta_s * np.arange(n + 1)
    e = _moving_average(np.interp(nodes, pos, elev), smoothing)
    if not np.isfinite(e).all():
        raise RouteError("non-finite elevation after interpolation")
    # clamp just inside +-1 so that |grade| < pi/2 even for a vertical step
    edge = np.nextafter(1.0, 0.0)
    grade = np.arcsin(np.clip(np.diff(e) / delta_s, -edge, edge))

    # segment k covers [pos[k], pos[k+1]); an interval overlaps segments lo..hi
    lo = np.searchsorted(pos, nodes[:-1], side="right") - 1
    hi = np.searchsorted(pos, nodes[1:], side="left") - 1
    hi = np.maximum(hi, lo)
    vmax = np.array([lim[a:b + 1].min() for a, b in zip(lo, hi)])

    intervals = tuple(RouteInterval(delta_s=float(delta_s), grade_angle=float(g),
                                    v_max=float(v), position=float(s - pos[0]))
                      for g, v, s in zip(grade, vmax, nodes[:-1]))
    stations = tuple((float(p.position - pos[0]), float(p.station_dwell))
                     for p in points if p.station_dwell > 0)
    return RouteProfile(intervals, total_length=float(n * delta_s), sampling=float(delta_s),
                        stations=stations)


def insert_dwell_intervals(profile: RouteProfile, v_stop: float) -> RouteProfile:
    """Expand station markers into fixed-speed dwell intervals.

    Each stop becomes one interval of length ``dwell_time * v_stop`` with zero
    grade and ``v_min = v_max = v_stop``, placed at the interval boundary closest
    to the station.  Track positions of running intervals are unchanged.
    """
    if not v_stop > 0:
        raise RouteError("v_stop must be positive")
    if not profile.stations:
        return profile
    running = list(profile.intervals)
    n = len(running)
    slots: dict[int, list[RouteInterval]] = {}
    for where, dwell in sorted(profile.stations):
        k = int(min(max(round(where / profile.sampling), 0), n))
        slots.setdefault(k, []).append(
            RouteInterval(delta_s=dwell * v_stop, grade_angle=0.0, v_max=v_stop, v_min=v_stop,
                          is_dwell=True, dwell_time=dwell, position=k * profile.sampling))
    out: list[RouteInterval] = []
    for k in range(n + 1):
        out.extend(slots.get(k, ()))
        if k < n:
            out.append(running[k])
    return replace(profile, intervals=tuple(out), stations=())


def flat_profile(n: int, delta_s: float, v_max: float) -> RouteProfile:
    """Level track without stations, handy for small studies."""
    ivs = tuple(RouteInterval(delta_s=float(delta_s), grade_angle=0.0, v_max=float(v_max),
                              position=i * delta_s) for i in range(n))
    return RouteProfile(ivs, total_length=n * delta_s, sampling=float(delta_s))


def bundled_route_path() -> Path:
    return Path(__file__).parent / "data" / "benchmark_route.csv"
