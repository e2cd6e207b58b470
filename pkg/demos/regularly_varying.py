"""Regularly varying solution and its two engines.

alpha = 2, p = t^-3 ln^-2 t, r = 1/t, tau(t) = t/2.  The index of p is -3, so
y is regularly varying of index rho = 2 and the quasiderivative tends to a
finite M.  The generalized divergent-case engine reaches the same M through
a change of variable.
"""

import warnings

import numpy as np

from hldde.asymptotics import check_hypotheses, reciprocal_transform, select_engine, verify
from hldde.core import CoefficientExpr, DelayMap, HalfLinearEquation
from hldde.dde import HistorySpec, solve
from hldde.rvkit import estimate_rv_index

warnings.simplefilter("ignore")

eq = HalfLinearEquation(2.0, CoefficientExpr(power=-1.0),
                        CoefficientExpr(power=-3.0, log_powers=(-2.0,)), DelayMap.proportional(0.5), 3.0)
print(f"auto routing picks {select_engine(eq)}")
traj = solve(eq, HistorySpec.power(2.0), 1e6)

grid = np.geomspace(1e3, 1e6, 121)
est = estimate_rv_index(grid, traj.y(grid))
print(f"index of y: {est.index:.4f} (trailing decade), extrapolated {est.limit:.4f}, verdict {est.verdict}")

for engine in ("rv", "gen1"):
    hyp = check_hypotheses(eq, engine)
    fit = verify(eq, traj, engine=engine, report=hyp)
    print(f"{engine:5s} {hyp.formula_id}: class {fit.predicted_class}, M = {fit.limit_constants['M']:.6f}, "
          f"final ratio {fit.final_ratio:.4f}")

rec = reciprocal_transform(eq)
est, target, ok = rec.index_check()
print(f"\nreciprocal equation: residual along the trajectory {rec.residual(traj):.2e}")
print(f"index of the reciprocal p: {est.limit:.4f} against delta~ = {target:g} ({'ok' if ok else 'off'})")
