"""A decreasing solution that is not regularly varying.

y = exp(-t^2) solves y'' = (4t^2 - 2) e^{1-2t} y(t - 1).  Its log-derivative
t y'/y = -2t^2 is unbounded, so no regular-variation index exists, and
forward integration loses it to roundoff: any error component grows like
e^{t^2} relative to the solution.
"""

import math
import warnings

import numpy as np

from hldde.core import CoefficientExpr, DelayMap, HalfLinearEquation
from hldde.dde import HistorySpec, classify_trajectory, residual, solve
from hldde.rvkit import nrv_index_from_logderivative

warnings.simplefilter("ignore")

p = CoefficientExpr(scale=math.e, exp_rate=(-2.0, 0.0), poly=(-2.0, 0.0, 4.0))
eq = HalfLinearEquation(2.0, CoefficientExpr(), p, DelayMap.shift(1.0), 1.0)
g = HistorySpec.gaussian()

grid = 1.0 + 1e-3 * np.arange(5001)
print(f"residual of exp(-t^2) on [1, 6]: {residual(eq, g.phi, g.phi_prime, grid):.2e}")

est = nrv_index_from_logderivative(g.phi, g.phi_prime, np.geomspace(1e-2, 10.0, 121))
print(f"t y'/y at t = 10: {est.trace[-1]:.2f}, verdict {est.verdict}")

for t_end in (3.0, 4.0, 5.0, 6.0):
    traj = solve(eq, HistorySpec.gaussian(), t_end, tol=1e-14)
    rel = abs(traj.ys[-1] / math.exp(-t_end ** 2) - 1.0)
    print(f"solve to t = {t_end:g}: relative error {rel:.1e}, class {classify_trajectory(traj).label}")
