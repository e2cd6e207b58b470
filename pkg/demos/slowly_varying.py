"""Bounded increasing solution of a slowly varying equation.

alpha = 2, p = 1, r = t^2 ln^2 t, unit delay.  Here int G converges, so the
solution tends to a finite N and N - y(t) behaves like N int_t^inf G = N / ln t.
"""

import warnings

import numpy as np

from hldde.asymptotics import check_hypotheses, verify
from hldde.core import CoefficientExpr, DelayMap, HalfLinearEquation
from hldde.dde import HistorySpec, classify_trajectory, solve

warnings.simplefilter("ignore")

eq = HalfLinearEquation(2.0, CoefficientExpr(power=2.0, log_powers=(2.0,)), CoefficientExpr(),
                        DelayMap.shift(1.0), 4.0)
hyp = check_hypotheses(eq)
print(f"engine {hyp.theorem}, formula {hyp.formula_id}, predicted class {hyp.predicted_class}")
for c in hyp.checks:
    print(f"  {'ok ' if c.passed else 'NO '} {c.name}: {c.observed}")

traj = solve(eq, HistorySpec.power(1.0), 1e4)
print(f"\nsolved on [{eq.a:g}, {traj.t_end:g}] with {len(traj.ts)} nodes; "
      f"observed class {classify_trajectory(traj).label}")

fit = verify(eq, traj, report=hyp)
print(f"extrapolated N = {fit.limit_constants['N']:.6g}")
print("remainder ratio (target 1):")
for i in np.unique(np.linspace(0, len(fit.ts) - 1, 8).astype(int)):
    print(f"  t = {fit.ts[i]:10.1f}   {fit.ratio[i]:.4f}")
print("\nmetrics:")
for m in fit.metrics:
    print(f"  {'PASS' if m.passed else 'FAIL'} {m.name}: {m.observed}")
print("\nThe ratio approaches 1 only at the rate 1/ln t, which is all a finite span can show.")
print(f"at t = 1e4, 1/ln t = {1 / np.log(1e4):.3f}")
