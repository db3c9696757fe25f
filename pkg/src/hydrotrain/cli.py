"""Command-line entry point.

Subcommands::

    hydrotrain fit       fit and certify surrogates from map files
    hydrotrain solve     build and solve one scenario
    hydrotrain simulate  solve, then replay the commands in the time domain
    hydrotrain compare   concurrent vs sequential over a list of ambients
    hydrotrain report    summarise an output directory (optionally with a DP check)

Exit codes: 0 success, 1 invalid input, 2 surrogate fit failure, 3 convexity
failure, 4 infeasible, 5 numerical failure.

Every command writes into a fresh temporary directory that is renamed onto
``--out`` only when the command succeeds, so failures never leave partial
outputs.  Each output directory holds ``manifest.json`` with input hashes,
configuration snapshots and solver settings.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .params import ScenarioConfig, TrainParameters, k_to_c
from .program import (BuildError, ConvexityError, ScheduleError, build_concurrent,
                      build_sequential, extract_trajectory)
from .route import RouteError, bundled_route_path, insert_dwell_intervals, load_route, resample
from .solver import SolverSettings, solve
from .validation.compare import SolveFailure
from .surrogates import (FitError, SurrogateSet, certify_convexity, data_dir, dumps, fit_all,
                         read_fc_curve, read_motor_map)

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_CONVEXITY, EXIT_INFEASIBLE, EXIT_NUMERICAL = range(6)


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def fmt(x) -> str:
    return f"{float(x):.11e}"


def csv_text(columns: dict[str, np.ndarray]) -> str:
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    length = {d.size for d in data}
    if len(length) != 1:
        raise ValueError("columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*data):
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: list[str]
    inputs: dict[str, dict] = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    solver_settings: dict = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    created_utc: str = ""

    def add_input(self, name: str, path: Path | None):
        if path is not None:
            path = Path(path)
            self.inputs[name] = {"path": str(path), "sha256": sha256(path)}


class Output:
    """Staging directory renamed onto the destination on success."""

    def __init__(self, dest: Path):
        self.dest = Path(dest)
        self.dest.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.dest.name}.", dir=self.dest.parent))

    def write(self, name: str, text: str) -> Path:
        path = self.tmp / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path

    def commit(self, manifest: RunManifest):
        manifest.outputs = {str(p.relative_to(self.tmp)): sha256(p)
                            for p in sorted(self.tmp.rglob("*")) if p.is_file()}
        manifest.created_utc = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self.write("manifest.json", dumps(asdict(manifest)))
        if self.dest.exists():
            old = self.dest.with_name(f".{self.dest.name}.old")
            if old.exists():
                shutil.rmtree(old)
            os.replace(self.dest, old)
            os.replace(self.tmp, self.dest)
            shutil.rmtree(old)
        else:
            os.replace(self.tmp, self.dest)

    def abort(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


# --------------------------------------------------------------------------
# inputs
# --------------------------------------------------------------------------

@dataclass
class Inputs:
    params: TrainParameters
    scenario: ScenarioConfig
    route_path: Path
    surrogates: SurrogateSet
    surrogate_dir: Path | None
    motor_map: Path
    fc_curve: Path
    params_path: Path | None = None
    scenario_path: Path | None = None

    def route(self, scenario: ScenarioConfig | None = None):
        sc = scenario or self.scenario
        return insert_dwell_intervals(resample(load_route(self.route_path), sc.delta_s), sc.v_stop)

    def manifest(self, argv: list[str]) -> RunManifest:
        m = RunManifest(command=list(argv), params=self.params.to_json(),
                        scenario=self.scenario.to_json(),
                        solver_settings=asdict(SolverSettings()))
        m.add_input("route", self.route_path)
        if self.surrogate_dir is not None:
            for f in SurrogateSet.FILES.values():
                m.add_input(f"surrogates/{f}", self.surrogate_dir / f)
        else:
            m.add_input("motor_map", self.motor_map)
            m.add_input("fc_curve", self.fc_curve)
        m.add_input("params", self.params_path)
        m.add_input("scenario", self.scenario_path)
        return m


def _fit(params, scenario, route_path, motor_map, fc_curve) -> SurrogateSet:
    route = insert_dwell_intervals(resample(load_route(route_path), scenario.delta_s),
                                   scenario.v_stop)
    v_max = max(iv.v_max for iv in route.intervals)
    sur = fit_all(read_motor_map(motor_map), read_fc_curve(fc_curve), params,
                  scenario.v_stop, v_max)
    for s in (sur.motor, sur.fuel_cell):
        rep = certify_convexity(s)
        if not rep.passed:
            raise CliFailure(EXIT_CONVEXITY, f"{s.kind} surrogate is not convex: {rep.detail} "
                                             f"(worst eigenvalue {rep.worst_eigenvalue:.3g})")
    return sur


def load_inputs(args) -> Inputs:
    params = TrainParameters.load(args.params) if args.params else TrainParameters()
    scenario = ScenarioConfig.load(args.scenario) if args.scenario else ScenarioConfig()
    if getattr(args, "ambient", None) is not None:
        scenario = scenario.at_ambient(args.ambient)
    route_path = Path(args.route) if args.route else bundled_route_path()
    motor_map = Path(getattr(args, "motor_map", None) or data_dir() / "motor_map.csv")
    fc_curve = Path(getattr(args, "fc_curve", None) or data_dir() / "fc_curve.csv")
    sdir = getattr(args, "surrogates", None)
    if sdir:
        sur = SurrogateSet.load(sdir)
    else:
        sur = _fit(params, scenario, route_path, motor_map, fc_curve)
    return Inputs(params, scenario, route_path, sur, Path(sdir) if sdir else None,
                  motor_map, fc_curve, Path(args.params) if args.params else None,
                  Path(args.scenario) if args.scenario else None)


# --------------------------------------------------------------------------
# solving
# --------------------------------------------------------------------------

def _solve(route, params, scenario, surrogates, method):
    build = {"concurrent": build_concurrent, "sequential": build_sequential}[method]
    prog = build(route, params, scenario, surrogates)
    out = solve(prog, SolverSettings())
    if out.status.startswith("infeasible"):
        raise CliFailure(EXIT_INFEASIBLE,
                         f"{method} program is {out.status} after {out.iterations} iterations "
                         f"({out.message})")
    if not out.optimal:
        raise CliFailure(EXIT_NUMERICAL, f"{method} solve ended {out.status} after "
                                         f"{out.iterations} iterations ({out.message})")
    return prog, out, extract_trajectory(prog, out.x)


def solve_summary(result, outcome, params) -> dict:
    out = {"method": result.method, "status": outcome.status, "iterations": outcome.iterations,
           "fuel_J": result.fuel, "journey_time_s": result.journey_time,
           "zeta_initial": float(result.zeta[0]), "zeta_terminal": float(result.zeta[-1]),
           "n_intervals": result.n_intervals, "residuals": outcome.residuals}
    if result.T_batt is not None:
        out["peak_T_batt_C"] = k_to_c(float(result.T_batt.max()))
        out["T_batt_max_C"] = k_to_c(params.T_batt_max)
        out["cooling_heat_J"] = float(np.sum(result.Qc * result.delta_s))
    return out


def _tightness_json(result) -> dict:
    from .validation import check_tightness
    rep = check_tightness(result)
    return {"tol": rep.tol, "tight": rep.tight, "families": rep.summary()}


def cmd_fit(args) -> Path:
    params = TrainParameters.load(args.params) if args.params else TrainParameters()
    scenario = ScenarioConfig.load(args.scenario) if args.scenario else ScenarioConfig()
    route_path = Path(args.route) if args.route else bundled_route_path()
    motor_map = Path(args.motor_map or data_dir() / "motor_map.csv")
    fc_curve = Path(args.fc_curve or data_dir() / "fc_curve.csv")
    sur = _fit(params, scenario, route_path, motor_map, fc_curve)
    out = Output(args.out)
    try:
        for name, fname in SurrogateSet.FILES.items():
            out.write(fname, dumps(getattr(sur, name).to_json()))
        m = RunManifest(command=args.argv, params=params.to_json(), scenario=scenario.to_json())
        for name, p in (("route", route_path), ("motor_map", motor_map), ("fc_curve", fc_curve),
                        ("params", args.params), ("scenario", args.scenario)):
            m.add_input(name, p)
        out.commit(m)
    except BaseException:
        out.abort()
        raise
    return out.dest


def _run_solve(args, simulate: bool) -> Path:
    inp = load_inputs(args)
    route = inp.route()
    prog, outcome, result = _solve(route, inp.params, inp.scenario, inp.surrogates, args.method)
    out = Output(args.out)
    try:
        summary = solve_summary(result, outcome, inp.params)
        out.write("trajectory.csv", csv_text(result.series()))
        out.write("tightness.json", dumps(_tightness_json(result)))
        if simulate:
            from .benchmark import default_models
            from .validation import Thermostat, simulate_forward
            models = default_models()
            thermo = Thermostat.for_params(inp.params) if args.method == "sequential" else None
            trace = simulate_forward(result, route, inp.scenario, inp.params, models=models,
                                     thermostat=thermo)
            out.write("simulation.csv", csv_text(trace.columns()))
            summary["simulation"] = {
                "fuel_J": trace.total_fuel, "peak_T_batt_C": k_to_c(trace.peak_T),
                "cooling_electrical_J": trace.total_cooling_electrical,
                "terminal": trace.terminal(), "fc_overload": trace.fc_overload,
                "cooling_policy": trace.cooling_policy}
        out.write("summary.json", dumps(summary))
        out.commit(inp.manifest(args.argv))
    except BaseException:
        out.abort()
        raise
    return out.dest


def cmd_solve(args) -> Path:
    return _run_solve(args, simulate=False)


def cmd_simulate(args) -> Path:
    return _run_solve(args, simulate=True)


def _compare_job(job):
    """One ambient; module-level so that it can run in a worker process."""
    from .benchmark import default_models
    from .validation import compare_methods
    params, scenario, route_path, surrogates = job
    route = insert_dwell_intervals(resample(load_route(route_path), scenario.delta_s),
                                   scenario.v_stop)
    report, conc, seq = compare_methods(route, params, scenario, surrogates, default_models())
    temps = {"position_m": conc.trace.position, "time_s": conc.trace.time,
             "T_batt_C": conc.trace.T_batt - 273.15, "v_mps": conc.trace.v}
    temps_seq = {"position_m": seq.trace.position, "time_s": seq.trace.time,
                 "T_batt_C": seq.trace.T_batt - 273.15, "v_mps": seq.trace.v}
    plan = {"position_m": conc.result.position[:-1], "v_concurrent": conc.result.v,
            "v_sequential": seq.result.v, "zeta_concurrent": conc.result.zeta[:-1],
            "zeta_sequential": seq.result.zeta[:-1],
            "T_batt_concurrent_C": conc.result.T_batt[:-1] - 273.15,
            "cooling_concurrent_W": conc.result.cooling_rate}
    return report.to_json(), csv_text(temps), csv_text(temps_seq), csv_text(plan)


def parse_ambients(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliFailure(EXIT_INPUT, f"invalid --ambients list {text!r}") from None
    if not vals:
        raise CliFailure(EXIT_INPUT, "--ambients is empty")
    return vals


def cmd_compare(args) -> Path:
    inp = load_inputs(args)
    ambients = parse_ambients(args.ambients)
    jobs = [(inp.params, inp.scenario.at_ambient(a), inp.route_path, inp.surrogates)
            for a in ambients]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_job, jobs))
    else:
        results = [_compare_job(j) for j in jobs]
    out = Output(args.out)
    try:
        reports = []
        for a, (rep, t_conc, t_seq, plan) in zip(ambients, results):
            tag = f"{a:+g}C"
            out.write(f"{tag}/report.json", dumps(rep))
            out.write(f"{tag}/temperature_concurrent.csv", t_conc)
            out.write(f"{tag}/temperature_sequential.csv", t_seq)
            out.write(f"{tag}/plan.csv", plan)
            reports.append(rep)
        out.write("comparison.json", dumps({"ambients_C": ambients, "reports": reports}))
        out.commit(inp.manifest(args.argv))
    except BaseException:
        out.abort()
        raise
    for rep in reports:
        print(f"ambient {rep['ambient_c']:+6.1f} C  saving {100 * rep['saving']:7.3f} %  "
              f"peak T conc {rep['peak_T_concurrent_C']:6.2f} C  "
              f"seq {rep['peak_T_sequential_C']:6.2f} C")
    return out.dest


def dp_check(seed: int, params: TrainParameters, surrogates: SurrogateSet) -> dict:
    """Convex optimum against the DP oracle on a 20-interval instance with random grades."""
    from .route import flat_profile
    from .validation import dp_oracle
    rng = np.random.default_rng(seed)
    grades = rng.uniform(-0.004, 0.004, 20)
    flat = flat_profile(20, 50.0, 20.0)
    route = replace(flat, intervals=tuple(replace(iv, grade_angle=float(np.arctan(g)))
                                          for iv, g in zip(flat.intervals, grades)))
    sc = replace(ScenarioConfig(), tau=100.0, v_initial=10.0, v_terminal=10.0, delta_s=50.0)
    prog = build_concurrent(route, params, sc, surrogates)
    out = solve(prog)
    if not out.optimal:
        raise CliFailure(EXIT_NUMERICAL, f"DP check convex solve ended {out.status}")
    convex = extract_trajectory(prog, out.x).fuel
    dp = dp_oracle(route, params, sc, surrogates).fuel
    return {"seed": seed, "grades": grades.tolist(), "convex_fuel_J": convex, "dp_fuel_J": dp,
            "gap": dp / convex - 1.0, "convex_below_dp": bool(convex <= dp * (1 + 1e-9))}


def cmd_report(args) -> Path | None:
    src = Path(args.input)
    if not (src / "manifest.json").exists():
        raise CliFailure(EXIT_INPUT, f"{src} is not a hydrotrain output directory")
    lines = [f"# hydrotrain report for {src}", ""]
    doc = {"source": str(src)}
    if (src / "comparison.json").exists():
        comp = json.loads((src / "comparison.json").read_text(encoding="utf-8"))
        doc["comparison"] = comp
        lines += ["| ambient C | fuel conc MJ | fuel seq MJ | saving % | peak T conc C | "
                  "peak T seq C |", "|---|---|---|---|---|---|"]
        for r in comp["reports"]:
            lines.append(f"| {r['ambient_c']:g} | {r['fuel_concurrent'] / 1e6:.3f} | "
                         f"{r['fuel_sequential'] / 1e6:.3f} | {100 * r['saving']:.3f} | "
                         f"{r['peak_T_concurrent_C']:.2f} | {r['peak_T_sequential_C']:.2f} |")
        lines += ["", "Design flags:"]
        lines += [f"- {k}: {v}" for k, v in comp["reports"][0]["design_flags"].items()]
    if (src / "summary.json").exists():
        summ = json.loads((src / "summary.json").read_text(encoding="utf-8"))
        doc["summary"] = summ
        lines += [f"- {k}: {v}" for k, v in summ.items() if not isinstance(v, dict)]
    if args.seed is not None:
        from .benchmark import default_surrogates
        params = TrainParameters()
        sur = default_surrogates(params, ScenarioConfig().v_stop, 33.5)
        doc["dp_check"] = dp_check(args.seed, params, sur)
        d = doc["dp_check"]
        lines += ["", f"DP check (seed {d['seed']}): convex {d['convex_fuel_J']:.6e} J, "
                      f"DP {d['dp_fuel_J']:.6e} J, gap {100 * d['gap']:.4f} %"]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out is None:
        return None
    out = Output(args.out)
    try:
        out.write("report.md", text)
        out.write("report.json", dumps(doc))
        m = RunManifest(command=args.argv)
        m.add_input("manifest", src / "manifest.json")
        out.commit(m)
    except BaseException:
        out.abort()
        raise
    return out.dest


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrotrain", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"hydrotrain {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, surrogates=True):
        sp.add_argument("--route", help="route CSV (default: bundled benchmark)")
        sp.add_argument("--params", help="train parameters JSON (default: built-in)")
        sp.add_argument("--scenario", help="scenario JSON (default: built-in)")
        sp.add_argument("--motor-map", help="motor efficiency map CSV (default: bundled)")
        sp.add_argument("--fc-curve", help="fuel-cell efficiency curve CSV (default: bundled)")
        if surrogates:
            sp.add_argument("--surrogates", help="directory of fitted surrogates "
                                                 "(default: fit from the maps)")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("fit", help="fit and certify surrogates")
    common(sp, surrogates=False)
    sp.set_defaults(func=cmd_fit)
    for name, func in (("solve", cmd_solve), ("simulate", cmd_simulate)):
        sp = sub.add_parser(name, help=f"{name} one scenario")
        common(sp)
        sp.add_argument("--method", choices=("concurrent", "sequential"), default="concurrent")
        sp.add_argument("--ambient", type=float,
                        help="ambient temperature in C (sets T_batt_0 with the pre-heat rule)")
        sp.set_defaults(func=func)
    sp = sub.add_parser("compare", help="concurrent vs sequential over ambients")
    common(sp)
    sp.add_argument("--ambients", default="-5,20,35", help="comma-separated list in C")
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("report", help="summarise an output directory")
    sp.add_argument("input", help="output directory of solve/simulate/compare")
    sp.add_argument("--out", help="write report.md/report.json here")
    sp.add_argument("--seed", type=int, help="run the DP oracle check on a random instance")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        dest = args.func(args)
    except SolveFailure as err:
        code = EXIT_INFEASIBLE if err.outcome.status.startswith("infeasible") else EXIT_NUMERICAL
        print(f"hydrotrain: {err}", file=sys.stderr)
        return code
    except CliFailure as err:
        print(f"hydrotrain: {err}", file=sys.stderr)
        return err.code
    except FitError as err:
        print(f"hydrotrain: surrogate fit failed: {err}", file=sys.stderr)
        return EXIT_FIT
    except ConvexityError as err:
        print(f"hydrotrain: {err}", file=sys.stderr)
        return EXIT_CONVEXITY
    except ScheduleError as err:
        print(f"hydrotrain: infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RouteError, BuildError, FileNotFoundError, json.JSONDecodeError, ValueError) as err:
        print(f"hydrotrain: invalid input: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, FloatingPointError) as err:
        print(f"hydrotrain: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    if dest is not None:
        print(f"wrote {dest}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
