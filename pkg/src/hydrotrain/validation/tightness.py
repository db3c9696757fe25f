"""Slack of every relaxed constraint family at an optimal trajectory."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..program import TrajectoryResult

FAMILIES = ("v_lv", "z_v", "balance", "soc", "chr", "dis")
# fraction of the largest soc-cone term used as the slack scale for idle intervals
IDLE_FLOOR = 1e-3


@dataclass
class FamilySlack:
    slack: np.ndarray          # relative slack per interval (nan where not applicable)
    applicable: np.ndarray     # bool mask
    max_slack: float
    n_violating: int           # applicable intervals above tolerance
    min_slack: float           # most negative value, should be >= -tolerance


@dataclass
class TightnessReport:
    tol: float
    families: dict[str, FamilySlack] = field(default_factory=dict)

    @property
    def tight(self) -> bool:
        return all(f.n_violating == 0 for f in self.families.values())

    def summary(self) -> dict:
        return {name: {"max_slack": f.max_slack, "n_violating": f.n_violating,
                       "n_applicable": int(f.applicable.sum()), "min_slack": f.min_slack}
                for name, f in self.families.items()}


def _family(slack: np.ndarray, applicable: np.ndarray, tol: float) -> FamilySlack:
    slack = np.where(applicable, slack, np.nan)
    vals = slack[applicable]
    return FamilySlack(slack=slack, applicable=applicable,
                       max_slack=float(vals.max()) if vals.size else 0.0,
                       n_violating=int((vals > tol).sum()),
                       min_slack=float(vals.min()) if vals.size else 0.0)


def relaxation_slacks(result: TrajectoryResult,
                      bound_tol: float = 1e-5) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Relative slack and applicability mask of each relaxed family.

    Each slack is normalised by the magnitude of the terms it balances, so a
    value of ``1e-5`` means the inequality is off by that fraction of its
    largest term.  The charge/discharge split applies only where the battery
    temperature at either end of the interval is within ``bound_tol``
    (relative) of its upper bound.
    """
    r = result
    if r.params is None or r.surrogates is None:
        raise ValueError("trajectory carries no model context")
    qm, bat = r.surrogates.motor, r.surrogates.battery
    P = r.params
    n = r.n_intervals
    z = r.z[:-1]
    tiny = 1e-300
    out = {}
    out["v_lv"] = (r.v * r.lv - 1.0, np.ones(n, bool))
    out["z_v"] = ((z - r.v ** 2) / np.maximum(z, tiny), np.ones(n, bool))

    cool = 0.0 if r.Qc is None else r.Qc / P.cop
    demand = qm(r.Fm, z) + cool + P.P_aux * r.lv
    supply = r.Ffc + r.Fbatt
    scale = np.maximum.reduce([np.abs(supply), np.abs(demand), np.abs(r.Ffc), np.abs(r.Fbatt)])
    out["balance"] = ((supply - demand) / np.maximum(scale, tiny), np.ones(n, bool))

    # soc: lz lv >= alpha Fbatt^2 ds.  Where the battery idles both sides are
    # round-off sized, so the scale is floored at a fraction of the family's
    # largest term over the journey.
    lhs = r.lz * r.lv
    rhs = bat.alpha * r.Fbatt ** 2 * r.delta_s
    scale = np.maximum(np.maximum(lhs, rhs), IDLE_FLOOR * max(lhs.max(initial=0.0), tiny))
    out["soc"] = ((lhs - rhs) / scale, np.ones(n, bool))

    if r.T_batt is not None:
        # an interval is bound-active when either end temperature sits at the bound
        T = np.maximum(r.T_batt[:-1], r.T_batt[1:])
        near = np.abs(T - P.T_batt_max) <= bound_tol * P.T_batt_max
        mag = np.maximum(np.abs(r.Fbatt), tiny)
        out["chr"] = ((r.Fbatt - r.Fchr) / mag, near & (r.Fbatt < 0))
        out["dis"] = ((r.Fdis - r.Fbatt) / mag, near & (r.Fbatt > 0))
    return out


def check_tightness(result: TrajectoryResult, tol: float = 1e-5) -> TightnessReport:
    """Tightness report; the charge/discharge split is only checked where the
    temperature bound is active (elsewhere it is not forced to be tight)."""
    report = TightnessReport(tol=tol)
    for name, (slack, mask) in relaxation_slacks(result, bound_tol=tol).items():
        report.families[name] = _family(slack, mask, tol)
    return report
