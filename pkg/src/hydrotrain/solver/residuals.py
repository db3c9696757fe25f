"""KKT residuals recomputed from the program data alone.

Deliberately shares no code with the solver's own bookkeeping: the rows are
taken in the program's native order (rotated cones are checked in rotated form).
"""
from __future__ import annotations

import numpy as np

from ..conic import ConicProgram


def kkt_residuals(program: ConicProgram, outcome) -> dict:
    """Primal/dual/gap residuals and cone margins of ``outcome``'s vectors.

    Conventions: ``A x = b``, ``G x + s = h``, ``A'y + G'z + c = 0`` and
    ``s, z`` in K (all three cone kinds are self-dual).
    """
    x, y, z, s = (np.asarray(v, dtype=float) for v in (outcome.x, outcome.y, outcome.z, outcome.s))
    A, G = program.A, program.G
    b, h, c = program.b, program.h, program.c
    r_eq = A @ x - b
    r_cone = G @ x + s - h
    r_dual = A.T @ y + G.T @ z + c
    pobj = float(c @ x)
    dobj = -float(b @ y + h @ z)
    primal = max(np.linalg.norm(r_eq) / (1.0 + np.linalg.norm(b)),
                 np.linalg.norm(r_cone) / (1.0 + np.linalg.norm(h)))
    dual = np.linalg.norm(r_dual) / (1.0 + np.linalg.norm(c))
    gap = abs(float(s @ z)) / (1.0 + abs(pobj) + abs(dobj))
    margin_s = program.cone_margin(s).min() if program.cones else np.inf
    margin_z = program.cone_margin(z).min() if program.cones else np.inf
    return {"primal": float(primal), "dual": float(dual), "gap": float(gap),
            "pobj": pobj, "dobj": dobj, "duality_gap": pobj - dobj,
            "slack_margin": float(margin_s), "dual_margin": float(margin_z)}
