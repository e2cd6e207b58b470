"""Method-of-steps integration of ``(r Phi(y'))' = p Phi(y(tau))``.

The equation is integrated as the first-order system

    y' = Phi^{-1}(u / r),    u' = p Phi(y(tau(t))),

where ``u = r Phi(y')`` is the quasiderivative.  Each step is a classical
RK4 step checked against two half steps; accepted steps feed a cubic
Hermite dense output (for ``y`` with ``y'`` and for ``u`` with ``u'``)
from which delayed values are read.  Steps never exceed the largest
``h`` with ``tau(t + h) <= t``, so delayed lookups never extrapolate.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import CoefficientExpr, HalfLinearEquation, phi, phi_inv
from .errors import (
    DomainError,
    InvalidParameterError,
    PreconditionError,
    UnsupportedDelayError,
)

__all__ = [
    "HistorySpec",
    "Trajectory",
    "SolutionClass",
    "LimitEstimate",
    "solve",
    "residual",
    "manufactured_p",
    "classify_trajectory",
    "extrapolate_tail_limit",
    "BURN_IN",
]

BURN_IN = 0.2


@dataclass(frozen=True)
class HistorySpec:
    """Initial function ``phi`` on ``[tau(a), a]`` with derivative ``phi_prime``.

    ``start_quasiderivative`` overrides ``u(a) = r(a) Phi(phi'(a))``.
    """

    phi: Callable
    phi_prime: Callable
    start_quasiderivative: Optional[float] = None
    description: str = "custom"

    @classmethod
    def from_expr(cls, expr, start_quasiderivative=None):
        return cls(expr, expr.deriv, start_quasiderivative, "expr:" + expr.describe())

    @classmethod
    def power(cls, rho, scale=1.0):
        return cls.from_expr(CoefficientExpr(scale=scale, power=rho))

    @classmethod
    def gaussian(cls):
        """``exp(-t**2)``, the decreasing solution of the counterexample."""
        f = lambda t: np.exp(-np.asarray(t, dtype=float) ** 2) if np.ndim(t) else math.exp(-t * t)
        fp = lambda t: -2.0 * np.asarray(t, dtype=float) * f(t) if np.ndim(t) else -2.0 * t * f(t)
        return cls(f, fp, None, "gaussian")


def _hermite(t0, t1, y0, y1, d0, d1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def _hermite_deriv(t0, t1, y0, y1, d0, d1, t):
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    return ((6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * h * d0
            + (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * h * d1) / h


@dataclass(frozen=True)
class Trajectory:
    """Dense numerical solution on ``[a, t_end]``.

    Queries below ``a`` fall back to the history (for ``u`` through
    ``r Phi(phi')``).  ``status`` is ``"ok"`` or the reason for early
    termination (``"nonpositive"``, ``"overflow"``).
    """

    eq: HalfLinearEquation
    history: HistorySpec
    ts: np.ndarray
    ys: np.ndarray
    y_primes: np.ndarray
    quasis: np.ndarray
    quasi_primes: np.ndarray
    status: str = "ok"
    steps: int = 0
    rejected: int = 0

    @classmethod
    def from_function(cls, eq, y, y_prime, grid):
        """Trajectory sampled from a known solution ``y`` (with ``y'``) on
        ``grid``; the quasiderivative and its derivative come from the
        equation itself."""
        ts = np.asarray(grid, dtype=float)
        if ts[0] != eq.a or np.any(np.diff(ts) <= 0):
            raise PreconditionError("grid must start at a and increase")
        ys = np.asarray(y(ts), dtype=float)
        dys = np.asarray(y_prime(ts), dtype=float)
        us = eq.r(ts) * phi(dys, eq.alpha)
        dus = eq.p(ts) * phi(np.asarray(y(eq.tau(ts)), dtype=float), eq.alpha)
        history = HistorySpec(y, y_prime, None, "exact")
        return cls(eq=eq, history=history, ts=ts, ys=ys, y_primes=dys, quasis=us, quasi_primes=dus)

    @property
    def t_end(self):
        return float(self.ts[-1])

    @property
    def ok(self):
        return self.status == "ok"

    def _locate(self, t):
        ts = self.ts
        i = int(np.searchsorted(ts, t, side="right")) - 1
        return min(max(i, 0), len(ts) - 2)

    def _query(self, t, vals, ders, deriv, hist):
        def one(x):
            if x < self.ts[0]:
                return hist(x)
            if x > self.ts[-1] * (1 + 1e-14):
                raise DomainError(f"t={x} beyond the trajectory end {self.ts[-1]}")
            i = self._locate(x)
            args = (self.ts[i], self.ts[i + 1], vals[i], vals[i + 1], ders[i], ders[i + 1], x)
            return _hermite_deriv(*args) if deriv else _hermite(*args)
        if np.ndim(t) == 0:
            return float(one(float(t)))
        t = np.asarray(t, dtype=float)
        return np.array([one(float(x)) for x in t.ravel()]).reshape(t.shape)

    def y(self, t):
        return self._query(t, self.ys, self.y_primes, False, self.history.phi)

    def y_prime(self, t):
        return self._query(t, self.ys, self.y_primes, True, self.history.phi_prime)

    def quasi(self, t):
        eq = self.eq
        hist = lambda x: eq.r(x) * phi(self.history.phi_prime(x), eq.alpha)
        return self._query(t, self.quasis, self.quasi_primes, False, hist)

    def quasi_prime(self, t):
        eq = self.eq
        hist = lambda x: eq.p(x) * phi(self.history.phi(eq.tau(x)), eq.alpha)
        return self._query(t, self.quasis, self.quasi_primes, True, hist)

    def quasi_consistency(self):
        """Max relative gap between ``quasis`` and ``r Phi(y_primes)``."""
        recon = self.eq.r(self.ts) * phi(self.y_primes, self.eq.alpha)
        return float(np.max(np.abs(recon - self.quasis) / np.maximum(np.abs(self.quasis), 1e-300)))

    def resample(self, ts):
        return self.y(ts), self.y_prime(ts), self.quasi(ts)


class _Dense:
    def __init__(self, history, t0):
        self.history = history
        self.t0 = t0
        self.ts, self.ys, self.ds = [], [], []

    def add(self, t, y, d):
        self.ts.append(t)
        self.ys.append(y)
        self.ds.append(d)

    def __call__(self, s):
        if s <= self.t0:
            return float(self.history.phi(s))
        ts = self.ts
        # delay causality: delayed arguments must lie in the computed past
        if s > ts[-1] * (1 + 1e-13) + 1e-300:
            raise AssertionError(f"delayed lookup at {s} beyond the integration front {ts[-1]}")
        i = bisect.bisect_right(ts, s) - 1
        if i >= len(ts) - 1:
            return self.ys[-1]
        return _hermite(ts[i], ts[i + 1], self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1], s)


def solve(eq, history, t_end, tol=1e-10, step=None, h_max=None, atol=0.0, max_steps=2_000_000):
    """Integrate ``eq`` from ``a`` to ``t_end``.

    With ``tol`` set, every step is accepted only when the RK4 full step
    and two half steps agree to ``tol`` (relative, per component).  With
    ``tol=None`` a fixed ``step`` is used (still capped by the delay).
    Returns a :class:`Trajectory`; integration stops early with a status
    flag when ``y`` becomes nonpositive or non-finite.
    """
    if not t_end > eq.a:
        raise PreconditionError("t_end must exceed a")
    if tol is None and step is None:
        raise PreconditionError("fixed-step mode needs a step")
    alpha = eq.alpha
    r, p, tau = eq.r, eq.p, eq.tau
    a = eq.a
    ode = tau.is_identity
    if not ode and tau.kind == "custom":
        for t in np.linspace(a, min(t_end, a + 10.0), 11)[1:]:
            if tau(t) >= t:
                raise UnsupportedDelayError(f"tau(t) >= t at t={t:.6g}")
    y0 = float(history.phi(a))
    if not y0 > 0:
        raise InvalidParameterError("history must be positive at a")
    if history.start_quasiderivative is not None:
        u0 = float(history.start_quasiderivative)
    else:
        u0 = r(a) * phi(float(history.phi_prime(a)), alpha)
    dense = _Dense(history, a)

    def rhs(t, y, u):
        dy = phi_inv(u / r(t), alpha)
        lag = y if ode else dense(tau(t))
        return dy, p(t) * phi(lag, alpha)

    def rk4(t, y, u, h, k1):
        dy1, du1 = k1
        h2 = 0.5 * h
        dy2, du2 = rhs(t + h2, y + h2 * dy1, u + h2 * du1)
        dy3, du3 = rhs(t + h2, y + h2 * dy2, u + h2 * du2)
        dy4, du4 = rhs(t + h, y + h * dy3, u + h * du3)
        return (y + h / 6.0 * (dy1 + 2 * dy2 + 2 * dy3 + dy4),
                u + h / 6.0 * (du1 + 2 * du2 + 2 * du3 + du4))

    t, y, u = a, y0, u0
    k = rhs(t, y, u)
    ts, ys, dys, us, dus = [t], [y], [k[0]], [u], [k[1]]
    dense.add(t, y, k[0])

    def store(tn, yn, kn, un):
        ts.append(tn)
        ys.append(yn)
        dys.append(kn[0])
        us.append(un)
        dus.append(kn[1])
        dense.add(tn, yn, kn[0])

    span = t_end - a
    h = step if step is not None else min(span / 100.0, 0.01 * max(a, 1.0))
    if h_max is not None:
        h = min(h, h_max)
    status = "ok"
    nsteps = rejected = 0
    while t < t_end * (1 - 1e-15) and nsteps < max_steps:
        cap = math.inf if ode else tau.max_step(t)
        if not cap > 1e-14 * max(1.0, abs(t)):
            raise UnsupportedDelayError(f"tau reaches the current time at t={t:.6g}")
        if h_max is not None:
            cap = min(cap, h_max)
        hs = min(h, cap, t_end - t)
        if t_end - t - hs < 1e-12 * t_end:
            hs = t_end - t
        try:
            if tol is None:
                y1, u1 = rk4(t, y, u, hs, k)
                t1 = t + hs if hs != t_end - t else t_end
                k1 = rhs(t1, y1, u1)
                if not (math.isfinite(y1) and math.isfinite(u1)):
                    status = "overflow"
                    break
                store(t1, y1, k1, u1)
                t, y, u, k = t1, y1, u1, k1
                nsteps += 1
                if y <= 0:
                    status = "nonpositive"
                    break
                continue
            yf, uf = rk4(t, y, u, hs, k)
            ym, um = rk4(t, y, u, 0.5 * hs, k)
            km = rhs(t + 0.5 * hs, ym, um)
            y2, u2 = rk4(t + 0.5 * hs, ym, um, 0.5 * hs, km)
        except (OverflowError, ZeroDivisionError):
            status = "overflow"
            break
        if not all(math.isfinite(v) for v in (yf, uf, y2, u2)):
            status = "overflow"
            break
        err = max(abs(y2 - yf) / (abs(y2) + atol + 1e-300), abs(u2 - uf) / (abs(u2) + atol + 1e-300))
        if err <= tol or hs <= 1e-13 * max(1.0, abs(t)):
            t1 = t + hs if hs != t_end - t else t_end
            store(t + 0.5 * hs, ym, km, um)
            k1 = rhs(t1, y2, u2)
            store(t1, y2, k1, u2)
            t, y, u, k = t1, y2, u2, k1
            nsteps += 1
            fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (tol / err) ** 0.2))
            if hs >= h or fac < 1:
                h = hs * fac
            # a step shortened by the delay cap keeps the requested size
            if y <= 0:
                status = "nonpositive"
                break
        else:
            rejected += 1
            h = hs * max(0.2, 0.9 * (tol / err) ** 0.2)
    if nsteps >= max_steps and t < t_end:
        status = "max_steps"
    return Trajectory(
        eq=eq, history=history,
        ts=np.array(ts), ys=np.array(ys), y_primes=np.array(dys),
        quasis=np.array(us), quasi_primes=np.array(dus),
        status=status, steps=nsteps, rejected=rejected,
    )


def residual(eq, y, y_prime, grid):
    """Max absolute residual ``|d/dt[r Phi(y')] - p Phi(y(tau))|`` over the
    interior of ``grid``.  The derivative is a fourth-order central
    difference on uniform grids (two points dropped at each end) and a
    second-order one otherwise."""
    t = np.asarray(grid, dtype=float)
    if len(t) < 5:
        raise PreconditionError("residual needs at least 5 grid points")
    w = eq.r(t) * phi(np.asarray(y_prime(t), dtype=float), eq.alpha)
    rhs = eq.p(t) * phi(np.asarray(y(eq.tau(t)), dtype=float), eq.alpha)
    dt = np.diff(t)
    if np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        h = dt[0]
        dw = (w[:-4] - 8.0 * w[1:-3] + 8.0 * w[3:-1] - w[4:]) / (12.0 * h)
        return float(np.max(np.abs(dw - rhs[2:-2])))
    dw = np.gradient(w, t)
    return float(np.max(np.abs(dw - rhs)[1:-1]))


def manufactured_p(r, tau, rho, alpha):
    """Coefficient ``p`` making ``y = t**rho`` an exact solution for
    ``r = c t**gamma`` and ``tau = lambda t``:
    ``p = c rho^(alpha-1) (gamma + (rho-1)(alpha-1)) lambda^(-rho(alpha-1)) t^(gamma-alpha)``.
    """
    if r.custom is not None or r.log_depth or r.exp_rate is not None or r.poly is not None:
        raise InvalidParameterError("manufactured_p needs a pure power r")
    if tau.kind != "proportional":
        raise InvalidParameterError("manufactured_p needs a proportional delay")
    if not rho > 0:
        raise InvalidParameterError("rho must be positive")
    gamma = r.power
    k = gamma + (rho - 1.0) * (alpha - 1.0)
    if not k > 0:
        raise InvalidParameterError(
            f"gamma + (rho-1)(alpha-1) = {k:g} <= 0: p would not be positive")
    c = r.scale * rho ** (alpha - 1.0) * k * tau.lam ** (-rho * (alpha - 1.0))
    return CoefficientExpr(scale=c, power=gamma - alpha)


# -- classification ---------------------------------------------------------------


@dataclass(frozen=True)
class LimitEstimate:
    """``kind`` is ``"Finite"``, ``"Infinite"`` or ``"Undetermined"``."""

    kind: str
    value: Optional[float] = None
    error: Optional[float] = None
    decay: Optional[float] = None

    def describe(self):
        if self.kind == "Finite":
            return f"Finite({self.value:.6g})"
        return self.kind


@dataclass(frozen=True)
class SolutionClass:
    monotonicity: str  # Increasing | Decreasing | Undetermined
    y_limit: LimitEstimate
    quasi_limit: LimitEstimate
    label: str  # I_BB | I_Binf | I_infB | I_infinf | D | Undetermined

    def as_dict(self):
        return {
            "monotonicity": self.monotonicity,
            "y_limit": self.y_limit.describe(),
            "quasi_limit": self.quasi_limit.describe(),
            "label": self.label,
        }


LABELS = {
    ("Finite", "Finite"): "I_BB",
    ("Finite", "Infinite"): "I_Binf",
    ("Infinite", "Finite"): "I_infB",
    ("Infinite", "Infinite"): "I_infinf",
}


def extrapolate_tail_limit(ts, vs, order=3, basis=None):
    """Limit of a monotone bounded tail by least squares in ``x = 1/ln t``
    (``v = N + c_1 x + ... + c_order x^order``).

    Returns ``(N, spread)`` where ``spread`` compares the fits of orders
    ``order`` and ``order - 1``.
    """
    ts = np.asarray(ts, dtype=float)
    vs = np.asarray(vs, dtype=float)
    x = 1.0 / np.log(ts) if basis is None else basis(ts)
    P = np.polynomial.polynomial
    order = min(order, len(ts) - 2)
    c = P.polyfit(x, vs, order)
    c_low = P.polyfit(x, vs, max(order - 1, 0))
    return float(c[0]), float(abs(c[0] - c_low[0]))


def _limit(ts, vs, windows=10):
    """Monotone Cauchy test on geometric windows of the tail."""
    lt = np.log(ts)
    edges = np.exp(np.linspace(lt[0], lt[-1], windows + 1))
    ev = np.interp(np.log(edges), lt, vs)
    d = np.abs(np.diff(ev))
    scale = max(float(np.max(np.abs(vs))), 1e-300)
    if np.all(d <= 1e-13 * scale):
        return LimitEstimate("Finite", float(vs[-1]), 0.0, math.inf)
    if np.any(d <= 0):
        return LimitEstimate("Undetermined")
    mids = np.sqrt(edges[:-1] * edges[1:])
    if mids[0] <= 1.0:
        return LimitEstimate("Undetermined")
    # increments decaying faster than 1/ln t signal a finite limit
    x = np.log(np.log(mids))
    slope = np.polyfit(x, np.log(d), 1)[0]
    decay = -float(slope)
    if decay > 1.2:
        sel = ts >= ts[-1] ** 0.5 * ts[0] ** 0.5
        value, spread = extrapolate_tail_limit(ts[sel], vs[sel])
        return LimitEstimate("Finite", value, spread, decay)
    if decay < 0.8:
        return LimitEstimate("Infinite", decay=decay)
    return LimitEstimate("Undetermined", decay=decay)


def classify_trajectory(traj, burn_in=BURN_IN, min_decades=2.0, samples=400):
    """Solution class of a computed trajectory.

    The first ``burn_in`` fraction of the logarithmic time span is
    discarded.  Monotonicity comes from the sign of ``y'`` on the rest;
    limits of ``y`` and ``y^[1]`` are decided only when the tail spans at
    least ``min_decades`` decades and stay ``Undetermined`` otherwise.
    """
    ts = traj.ts
    t0, t1 = ts[0], ts[-1]
    if t0 > 0:
        tb = math.exp(math.log(t0) + burn_in * (math.log(t1) - math.log(t0)))
    else:
        tb = t0 + burn_in * (t1 - t0)
    sel = ts >= tb
    dy = traj.y_primes[sel]
    floor = 1e-13 * float(np.max(np.abs(dy))) if len(dy) else 0.0
    sig = dy[np.abs(dy) > floor]
    if len(sig) == 0:
        mono = "Undetermined"
    elif np.all(sig > 0):
        mono = "Increasing"
    elif np.all(sig < 0):
        mono = "Decreasing"
    else:
        mono = "Undetermined"
    undetermined = LimitEstimate("Undetermined")
    if tb > 0 and t1 / tb >= 10 ** min_decades * (1 - 1e-9) and traj.ok:
        grid = np.geomspace(tb, t1, samples)
        y_lim = _limit(grid, traj.y(grid))
        u_lim = _limit(grid, traj.quasi(grid))
    else:
        y_lim = u_lim = undetermined
    if mono == "Decreasing":
        label = "D"
    elif mono == "Increasing":
        label = LABELS.get((y_lim.kind, u_lim.kind), "Undetermined")
    else:
        label = "Undetermined"
    return SolutionClass(mono, y_lim, u_lim, label)
