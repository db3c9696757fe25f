"""Seam for cross-checking against an external conic solver.

An external backend receives the program through the plain-text exchange
format (:func:`hydrotrain.conic.write_text`), so differential tests exercise the
same file a third-party tool would read.  The bundled backend maps the program
onto cvxpy (optional dependency); rotated cones are passed in their standard
form ``((u + w)/sqrt2, ((u - w)/sqrt2, s))``.
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..conic import ConicProgram, read_text, write_text


@dataclass
class ExternalResult:
    status: str             # backend's own status string
    objective: float        # physical units, as ConicProgram.objective
    x: np.ndarray | None    # scaled primal vector


Backend = Callable[[ConicProgram], ExternalResult]


def cvxpy_backend(program: ConicProgram, solver: str = "CLARABEL", **options) -> ExternalResult:
    import cvxpy as cp

    x = cp.Variable(program.n)
    cons = []
    if program.n_eq:
        cons.append(program.A @ x == program.b)
    slack = program.h - program.G @ x
    root2 = np.sqrt(2.0)
    for cone in program.cones:
        v = slack[cone.rows]
        if cone.kind == "nonneg":
            cons.append(v >= 0)
        elif cone.kind == "soc":
            cons.append(cp.SOC(v[0], v[1:]))
        else:
            u, w = v[0], v[1]
            cons.append(cp.SOC((u + w) / root2, cp.hstack([(u - w) / root2, v[2:]])))
    prob = cp.Problem(cp.Minimize(program.c @ x), cons)
    prob.solve(solver=solver, **options)
    obj = np.nan if prob.value is None else (prob.value + program.offset) / program.obj_scale
    return ExternalResult(prob.status, float(obj), x.value)


def solve_external(program: ConicProgram, backend: Backend = cvxpy_backend) -> ExternalResult:
    """Round-trip ``program`` through the text format and solve it with ``backend``.

    Scaling metadata is not part of the exchange format, so it is reattached
    after reading.
    """
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "program.txt"
        write_text(program, path)
        exchanged = read_text(path)
    exchanged.col_scale = program.col_scale
    exchanged.obj_scale = program.obj_scale
    return backend(exchanged)
