"""Asymptotic engines for increasing solutions.

Four engines predict the solution class of an increasing solution and the
asymptotic formula it obeys (``formula_id`` in brackets):

* ``sv``   -- ``p`` regularly varying of index ``delta > -1``: solutions are
  normalized slowly varying (``F1`` / ``F2``);
* ``rv``   -- ``delta < -1`` with ``r`` of index ``delta + alpha``: solutions
  are normalized regularly varying of index ``rho = (-1-delta)/(alpha-1)``
  (``F11`` / ``F21``);
* ``gen1`` -- ``int r^{1-beta}`` diverges: after ``s = R_D(t)`` solutions are
  normalized regularly varying of index 1 (``TF11`` / ``TF22``);
* ``gen2`` -- ``int r^{1-beta}`` converges: after ``s = Q(t)`` solutions are
  normalized slowly varying (``TF1C`` / ``TF2C``).

The first id of each pair is the divergent-integral formula (a ratio of
logarithms), the second the convergent one (a remainder ratio).

``check_hypotheses_*`` never looks at a trajectory.  ``verify_*`` compares
a computed trajectory with the predicted formula through ratio traces that
should tend to 1, since the limit statements carry no rates.

Limit hypotheses such as ``f(t) -> 0`` are judged by trends: ``f`` must
decrease over the last two decades of a grid and end below a threshold
(default 0.02).  Exact values are used up to ``t = 1e12``; expressions with
a closed form are continued in log space up to ``ln t = 1e4``, which makes
the slowly decaying ``1/ln t``-type hypotheses decidable.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    CoefficientExpr,
    HalfLinearEquation,
    g_eval,
    h_tau_eval,
    phi,
    phi_inv,
    structured_g,
    structured_h_tau,
)
from .dde import LABELS, classify_trajectory, extrapolate_tail_limit
from .errors import (
    ConsistencyWarning,
    DomainError,
    InconclusiveError,
    MismatchError,
    PreconditionError,
)
from .quad import (
    ChangeOfVariable,
    build_change_of_variable,
    classify_improper,
    integral_equivalent,
    integrate,
    log_eval,
    tail_integral,
    with_log_tail,
)
from .rvkit import estimate_rv_index, pi_class_check

__all__ = [
    "Check",
    "HypothesisReport",
    "TrendReport",
    "AsymptoticFit",
    "NecessityReport",
    "ReciprocalEquation",
    "TransformedEquation",
    "DEFAULT_TOLERANCES",
    "ENGINES",
    "riccati_residual",
    "vanishing_trend",
    "check_hypotheses_sv",
    "check_hypotheses_rv",
    "check_hypotheses_gen1",
    "check_hypotheses_gen2",
    "check_hypotheses",
    "verify_sv",
    "verify_rv",
    "verify_gen1",
    "verify_gen2",
    "verify",
    "select_engine",
    "check_necessity",
    "reciprocal_transform",
    "change_of_variables",
]

TREND_THRESHOLD = 0.02
T_HORIZON = 1e12
LOG_HORIZON = 1e4  # ln t reached by log-space continuations

DEFAULT_TOLERANCES = {
    "ratio": 0.3,  # final ratio within [1 - x, 1 + x]
    "sv_index": 0.05,  # |index| for slowly varying verdicts
    "index_rel": 0.05,  # relative error of a nonzero index
    "pi": 0.25,  # final de Haan deviation
    "limit_stability": 0.01,  # N / M across the last two windows
    "trend": TREND_THRESHOLD,
    "riccati": 1e-3,
}

ENGINES = ("sv", "rv", "gen1", "gen2")


# -- reports --------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    required: str
    observed: object
    passed: bool

    def as_dict(self):
        obs = self.observed
        if isinstance(obs, float):
            obs = float(f"{obs:.6g}")
        return {"name": self.name, "required": self.required, "observed": obs,
                "passed": bool(self.passed)}


@dataclass(frozen=True)
class HypothesisReport:
    """Hypothesis checklist of one engine.  ``applicable`` is the AND of
    all checks; ``details`` keeps derived objects (exponents, the change of
    variable, exact ``q`` functions) for the matching ``verify_*``."""

    theorem: str  # SV | RV | Gen1 | Gen2
    checks: tuple
    predicted_class: str
    predicted_index: float
    formula_id: Optional[str]
    details: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def applicable(self):
        return all(c.passed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {
            "theorem": self.theorem,
            "applicable": self.applicable,
            "predicted_class": self.predicted_class,
            "predicted_index": self.predicted_index,
            "formula_id": self.formula_id,
            "checks": [c.as_dict() for c in self.checks],
        }


@dataclass(frozen=True)
class TrendReport:
    """Trend of ``values`` along ``x = ln t``."""

    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    final: float
    decreasing: bool
    threshold: Optional[float]

    @property
    def passed(self):
        return self.decreasing and (self.threshold is None or self.final < self.threshold)

    def describe(self):
        word = "decreasing" if self.decreasing else "not decreasing"
        return f"{word}, final {self.final:.3g} at log-argument {self.x[-1]:.4g}"


@dataclass(frozen=True)
class AsymptoticFit:
    """Trajectory-vs-formula comparison.

    ``ratio`` samples the formula metric along ``ts`` (target 1);
    ``limit_constants`` holds the extrapolated ``N``, ``M`` and the fitted
    ``A``; ``metrics`` are the individual pass/fail comparisons and
    ``traces`` the auxiliary sampled traces (smallness conditions, de Haan
    deviations) for plotting.
    """

    formula_id: str
    comparison_metric: str
    ts: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)
    final_ratio: float
    limit_constants: dict
    predicted_class: str
    observed: object
    metrics: tuple
    traces: dict = field(default_factory=dict, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def trace(self):
        return self.ts, self.ratio

    @property
    def passed(self):
        return self.observed.label == self.predicted_class and all(m.passed for m in self.metrics)

    def metric(self, name):
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def as_dict(self):
        return {
            "formula_id": self.formula_id,
            "comparison_metric": self.comparison_metric,
            "final_ratio": self.final_ratio,
            "limit_constants": {k: v for k, v in self.limit_constants.items()},
            "predicted_class": self.predicted_class,
            "observed_class": self.observed.label,
            "metrics": [m.as_dict() for m in self.metrics],
            "passed": self.passed,
        }


# -- trend machinery ----------------------------------------------------------------


def vanishing_trend(x, values, threshold=TREND_THRESHOLD, decades=2.0):
    """Decide ``values -> 0`` along increasing ``x = ln t``.

    The trend holds when the values are finite, non-increasing over the
    last ``decades`` decades (or the last third of the grid, whichever is
    longer), below their starting value, and (if ``threshold`` is set) end
    below ``threshold``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(x) < 4 or not np.all(np.isfinite(v)):
        return TrendReport(x, v, float(v[-1]) if len(v) else math.nan, False, threshold)
    lo = min(x[-1] - decades * math.log(10.0), x[len(x) - max(3, len(x) // 3)])
    tail = v[x >= lo]
    scale = max(float(np.max(np.abs(tail))), 1e-300)
    decreasing = bool(v[-1] < v[0] and np.all(np.diff(tail) <= 1e-9 * scale))
    return TrendReport(x, v, float(v[-1]), decreasing, threshold)


def _exact_then_continued(t0, exact, log_continuation=None, per_decade=8):
    """Samples ``(ln t, f)``: ``exact(t)`` on ``[t0, T_HORIZON]`` and, when a
    closed-form ``log_continuation(ln t) = ln f`` exists, beyond that up to
    ``ln t = LOG_HORIZON``."""
    n = max(8, int(per_decade * math.log10(T_HORIZON / t0)) + 1)
    ts = np.geomspace(t0, T_HORIZON, n)
    with np.errstate(all="ignore"):
        vals = np.asarray(exact(ts), dtype=float)
    x = np.log(ts)
    if log_continuation is not None:
        x2 = np.geomspace(x[-1], LOG_HORIZON, 120)[1:]
        with np.errstate(all="ignore"):
            v2 = np.exp(np.asarray(log_continuation(x2), dtype=float))
        x = np.concatenate([x, x2])
        vals = np.concatenate([vals, v2])
    return x, vals


def _structured(e):
    return isinstance(e, CoefficientExpr) and e.custom is None


def _expr_trend(expr, t0, threshold):
    """Trend of a coefficient expression (exact, continued in log space
    when structured)."""
    cont = (lambda z: log_eval(expr, z, 1)) if _structured(expr) else None
    x, v = _exact_then_continued(t0, expr, cont)
    return vanishing_trend(x, v, threshold)


def _cumulative(f, a, ts, tol=1e-10):
    """``int_a^t f`` at each ``t`` of increasing ``ts``."""
    edges = np.concatenate([[a], ts])
    pieces = [float(integrate(f, lo, hi, tol)) if hi > lo else 0.0
              for lo, hi in zip(edges[:-1], edges[1:])]
    return np.cumsum(pieces)


def _tails(f, ts, tol=1e-10):
    """``int_t^inf f`` at each ``t`` of increasing ``ts``: one tail integral
    at the last node plus panel integrals."""
    last = float(tail_integral(f, float(ts[-1]), tol))
    pieces = np.array([float(integrate(f, lo, hi, tol)) for lo, hi in zip(ts[:-1], ts[1:])])
    return last + np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])


def _trend_start(eq):
    return max(10.0 * eq.a, 100.0)


def _classify_integral(f, a, name):
    """Check for the divergence/convergence of ``int_a^inf f``; returns
    ``(verdict or None, observed string)``."""
    try:
        v = classify_improper(f, a)
        return v, v.status
    except InconclusiveError as exc:
        return None, f"Undetermined ({exc})"


def _index_of(e):
    if isinstance(e, CoefficientExpr) and e.is_regularly_varying:
        return e.index
    return None


def _tolerances(tolerances):
    tol = dict(DEFAULT_TOLERANCES)
    if tolerances:
        unknown = set(tolerances) - set(tol)
        if unknown:
            raise PreconditionError(f"unknown tolerance names {sorted(unknown)}")
        tol.update(tolerances)
    return tol


def _delay_shortcut(eq):
    """Sufficient structural condition for the transformed delays: a
    built-in delay (``tau'`` constant, so slowly varying and bounded, and
    ``t / tau(t)`` bounded) together with ``r`` regularly varying of index
    ``delta + alpha``."""
    if eq.tau.kind == "custom":
        return False, "custom delay"
    ip, ir = _index_of(eq.p), _index_of(eq.r)
    if ip is None or ir is None:
        return False, "p or r not regularly varying"
    if abs(ir - (ip + eq.alpha)) > 1e-12:
        return False, f"r has index {ir:g}, not delta + alpha = {ip + eq.alpha:g}"
    return True, "built-in delay, r in RV(delta + alpha)"


# -- SV engine ------------------------------------------------------------------------


def _scaled_int_p_trend(eq, threshold):
    """``t^{alpha-1} / r(t) * int_a^t p`` with a Karamata continuation."""
    alpha, a = eq.alpha, eq.a

    def exact(ts):
        return ts ** (alpha - 1.0) / eq.r(ts) * _cumulative(eq.p, a, ts)

    cont = None
    if _structured(eq.p) and _structured(eq.r):
        try:
            e = CoefficientExpr(power=alpha - 1.0) * integral_equivalent(eq.p) / eq.r
            cont = lambda z: log_eval(e, z, 1)
        except PreconditionError:
            cont = None
    x, v = _exact_then_continued(_trend_start(eq), exact, cont)
    return vanishing_trend(x, v, threshold)


def check_hypotheses_sv(eq, threshold=TREND_THRESHOLD):
    """Hypotheses of the slowly varying theorem: ``int p`` divergent,
    ``t^{alpha-1}/r int_a^t p -> 0``, ``p`` in RV(delta) with ``delta > -1``;
    the class follows from the convergence of ``int G``."""
    alpha, a = eq.alpha, eq.a
    checks = []
    details = {}
    v, obs = _classify_integral(eq.p, a, "p")
    checks.append(Check("int_p_divergent", "Divergent", obs, v is not None and not v.convergent))
    delta = _index_of(eq.p)
    details["delta"] = delta
    checks.append(Check("p_regularly_varying", "p in RV(delta)",
                        "not RV" if delta is None else f"RV({delta:g})", delta is not None))
    checks.append(Check("delta_gt_minus_one", "delta > -1",
                        math.nan if delta is None else delta, delta is not None and delta > -1))
    trend = _scaled_int_p_trend(eq, threshold)
    details["scaled_int_p"] = trend
    checks.append(Check("scaled_int_p_vanishes", f"decreasing, final < {threshold:g}",
                        trend.describe(), trend.passed))
    gamma = _index_of(eq.r)
    details["gamma"] = gamma
    if gamma is not None and delta is not None:
        checks.append(Check("gamma_ge_alpha_plus_delta", "gamma >= alpha + delta",
                            gamma, gamma >= alpha + delta - 1e-12))
    G = structured_g(eq)
    if G is None:
        G = lambda t: g_eval(eq, t)
    details["G"] = G
    vg, obs = _classify_integral(G, a, "G")
    checks.append(Check("int_G_decided", "Convergent or Divergent", obs, vg is not None))
    if vg is None:
        cls, formula = "Undetermined", None
    elif vg.convergent:
        cls, formula = LABELS[("Finite", "Infinite")], "F2"
    else:
        cls, formula = LABELS[("Infinite", "Infinite")], "F1"
    details["int_G"] = vg
    return HypothesisReport("SV", tuple(checks), cls, 0.0, formula, details)


# -- RV engine ------------------------------------------------------------------------


def _delay_ratio_trend(eq, threshold):
    """``(L_p/L_r)^{beta-1} tau' -> 0`` with ``L_p/L_r = t^alpha p / r``."""
    alpha, beta = eq.alpha, eq.beta
    if eq.tau.kind != "custom" and _structured(eq.p) and _structured(eq.r):
        c = float(eq.tau.derivative(1.0))
        e = (CoefficientExpr(power=alpha) * eq.p / eq.r) ** (beta - 1.0) * c
        return _expr_trend(e, _trend_start(eq), threshold)
    f = lambda t: (t ** alpha * eq.p(t) / eq.r(t)) ** (beta - 1.0) * eq.tau.derivative(t)
    x, v = _exact_then_continued(_trend_start(eq), f)
    return vanishing_trend(x, v, threshold)


def check_hypotheses_rv(eq, threshold=TREND_THRESHOLD):
    """Hypotheses of the regularly varying theorem: ``p`` in RV(delta),
    ``r`` in RV(delta + alpha), ``delta < -1`` and the two delay
    conditions; the class follows from the convergence of ``int H_tau``."""
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    checks = []
    details = {}
    delta, gamma = _index_of(eq.p), _index_of(eq.r)
    details["delta"] = delta
    ok = delta is not None and gamma is not None and abs(gamma - delta - alpha) < 1e-12
    obs = "not RV" if delta is None or gamma is None else f"delta={delta:g}, gamma={gamma:g}"
    checks.append(Check("p_r_regularly_varying", "p in RV(delta), r in RV(delta + alpha)", obs, ok))
    checks.append(Check("delta_lt_minus_one", "delta < -1",
                        math.nan if delta is None else delta, delta is not None and delta < -1))
    # first delay condition: (r^{1-beta} o tau) tau' in RV(delta(1-beta) - beta)
    if delta is not None and gamma is not None and eq.tau.kind != "custom":
        observed = gamma * (1.0 - beta)  # tau' constant, tau(t) ~ c t
        target = delta * (1.0 - beta) - beta
        checks.append(Check("delayed_r_index", f"index {target:g} (tau' in SV, bounded)",
                            observed, abs(observed - target) < 1e-9))
    elif delta is not None:
        grid = np.geomspace(_trend_start(eq), 1e9, 200)
        vals = eq.r(eq.tau(grid)) ** (1.0 - beta) * eq.tau.derivative(grid)
        est = estimate_rv_index(grid, vals)
        target = delta * (1.0 - beta) - beta
        ok = abs(est.limit - target) <= 0.05 * max(1.0, abs(target))
        checks.append(Check("delayed_r_index", f"index {target:g}", est.limit, ok))
    else:
        checks.append(Check("delayed_r_index", "index delta(1-beta) - beta", "n/a", False))
    trend = _delay_ratio_trend(eq, threshold)
    details["delay_ratio_trend"] = trend
    checks.append(Check("delay_ratio_vanishes", f"decreasing, final < {threshold:g}",
                        trend.describe(), trend.passed))
    rho = (-1.0 - delta) / (alpha - 1.0) if delta is not None else math.nan
    details["rho"] = rho
    H = structured_h_tau(eq)
    details["H"] = with_log_tail(lambda t: h_tau_eval(eq, t), H)
    if H is None:
        H = details["H"]
    vh, obs = _classify_integral(H, a, "H_tau")
    checks.append(Check("int_H_decided", "Convergent or Divergent", obs, vh is not None))
    if vh is None:
        cls, formula = "Undetermined", None
    elif vh.convergent:
        cls, formula = LABELS[("Infinite", "Finite")], "F21"
    else:
        cls, formula = LABELS[("Infinite", "Infinite")], "F11"
    details["int_H"] = vh
    return HypothesisReport("RV", tuple(checks), cls, rho, formula, details)


# -- generalized engines --------------------------------------------------------------


def _log_composed(cov, expr, ls):
    """``ln expr(phi^{-1}(s))`` for ``ln s = ls``."""
    ls = np.asarray(ls, dtype=float)
    if cov.closed_form and _structured(expr):
        z, level = cov.log_inverse_point(ls)
        return log_eval(expr, z, level)
    t = cov.inverse(np.exp(ls))
    return expr.log_value(t) if _structured(expr) else np.log(expr(t))


def _transformed_samples(cov, expr, s_hi=T_HORIZON, decades=8, per_decade=20):
    """``(s, ln expr(phi^{-1}(s)))`` on a geometric ``s`` grid.  Tabulated
    maps are sampled parametrically in ``t`` to avoid inversions."""
    if cov.closed_form:
        s_lo = s_hi / 10 ** decades
        if not cov.divergent:
            s_lo = max(s_lo, 1e3 * float(cov.forward(cov.a)))
        s = np.geomspace(s_lo, s_hi, int(per_decade * math.log10(s_hi / s_lo)) + 1)
        return s, _log_composed(cov, expr, np.log(s))
    t_hi = T_HORIZON
    s_top = float(cov.forward(t_hi))
    if s_top > s_hi:
        t_hi = float(cov.inverse(s_hi))
    t_lo = max(10.0 * cov.a, t_hi / 10 ** decades)
    ts = np.geomspace(t_lo, t_hi, int(per_decade * math.log10(t_hi / t_lo)) + 1)
    s = np.asarray(cov.forward(ts), dtype=float)
    lv = expr.log_value(ts) if _structured(expr) else np.log(expr(ts))
    return s, lv


def _tabulated_continuation(cov, equivalent, target, ls_last):
    """``(ln s, L)`` beyond the tabulated range: ``ln s`` comes from the
    Karamata form of ``R`` (``s = R_D`` or ``s = 1/R_C``) and ``L`` from the
    structured ``equivalent`` of the coefficient, both in ``z = ln t``.  The
    O(1/ln t) error of the Karamata form does not affect a trend to 0."""
    if not (_structured(cov.density) and _structured(equivalent)):
        return None
    try:
        E = integral_equivalent(cov.density)
    except PreconditionError:
        return None
    t_last = float(cov.inverse(math.exp(ls_last)))
    z = np.geomspace(math.log(t_last), LOG_HORIZON, 121)[1:]
    with np.errstate(all="ignore"):
        ls = log_eval(E, z, 1)
        if not cov.divergent:
            ls = -ls
        v = np.exp(log_eval(equivalent, z, 1) - target * ls)
    keep = ls > ls_last
    return ls[keep], v[keep]


def _coefficient_index_checks(cov, expr, target, name, threshold, equivalent=None):
    """Index of the transformed coefficient and the trend ``L -> 0`` of its
    slowly varying part ``s^{-target} f(s)``.  ``equivalent`` is a
    structured ``~ expr`` for continuing the trend of a tabulated map."""
    checks = []
    s, lv = _transformed_samples(cov, expr)
    est = None
    try:
        est = estimate_rv_index(s, log_values=lv)
        ok = abs(est.limit - target) <= 0.05 * max(1.0, abs(target))
        checks.append(Check(f"{name}_index", f"RV({target:g}) within 5%", est.limit, ok))
    except (PreconditionError, DomainError) as exc:
        checks.append(Check(f"{name}_index", f"RV({target:g}) within 5%", f"failed: {exc}", False))
    ls = np.log(s)
    lL = lv - target * ls
    x, v = ls, np.exp(lL)
    if cov.closed_form and _structured(expr):
        x2 = np.geomspace(ls[-1], LOG_HORIZON, 120)[1:]
        v2 = np.exp(_log_composed(cov, expr, x2) - target * x2)
        x, v = np.concatenate([x, x2]), np.concatenate([v, v2])
    elif not cov.closed_form:
        cont = _tabulated_continuation(cov, expr if equivalent is None else equivalent, target, ls[-1])
        if cont is not None:
            x, v = np.concatenate([x, cont[0]]), np.concatenate([v, cont[1]])
    trend = vanishing_trend(x, v, threshold)
    checks.append(Check(f"L_{name}_vanishes", f"decreasing, final < {threshold:g}",
                        trend.describe(), trend.passed))
    return checks, est, trend


def _delay_checks(eq, cov, name):
    """Transformed delay ``tau_i = phi o tau o phi^{-1}``: ``s / tau_i(s)``
    bounded and ``tau_i'`` slowly varying and bounded."""
    ok, why = _delay_shortcut(eq)
    if ok:
        return [Check(f"{name}_delay", "s/tau_i bounded, tau_i' in SV, bounded",
                      f"shortcut: {why}", True)], None
    # numerical check on a geometric s grid (parametric in t for tables)
    t_lo = max(10.0 * eq.a, eq.tau.inverse(eq.a) * 2.0)
    if cov.closed_form:
        s_lo = float(cov.forward(t_lo))
        s = np.geomspace(s_lo, max(T_HORIZON, 1e6 * s_lo), 300)
        with np.errstate(all="ignore"):
            ts = np.asarray(cov.inverse(s), dtype=float)
    else:
        ts = np.geomspace(t_lo, T_HORIZON, 300)
        s = np.asarray(cov.forward(ts), dtype=float)
    with np.errstate(all="ignore"):
        tau_s = np.asarray(cov.forward(eq.tau(ts)), dtype=float)
        dtau = eq.tau.derivative(ts) * np.asarray(cov.forward_prime(eq.tau(ts)), dtype=float) \
            / np.asarray(cov.forward_prime(ts), dtype=float)
    good = np.isfinite(ts) & np.isfinite(s) & np.isfinite(tau_s) & (tau_s > 0) & np.isfinite(dtau) & (dtau > 0)
    s, tau_s, dtau = s[good], tau_s[good], dtau[good]
    if len(s) < 20 or s[-1] / s[0] < 1e3:
        return [Check(f"{name}_delay", "s/tau_i bounded, tau_i' in SV, bounded",
                      "insufficient s range", False)], None
    ratio = s / tau_s
    tail = s >= s[-1] / 100.0

    def not_growing(v):
        return bool(np.max(v[tail]) <= 1.05 * v[tail][0] + 1e-12)

    sel = s >= s[-1] / 1e4
    try:
        est = estimate_rv_index(s[sel], dtau[sel])
        sv = abs(est.limit) <= 0.05
        idx = est.limit
    except (PreconditionError, DomainError):
        sv, idx = False, math.nan
    ok = not_growing(ratio) and not_growing(dtau) and sv
    obs = f"s/tau_i={ratio[-1]:.4g}, tau_i'={dtau[-1]:.4g}, index(tau_i')={idx:.3g}"
    return [Check(f"{name}_delay", "s/tau_i bounded, tau_i' in SV, bounded", obs, ok)], \
        {"s": s, "ratio": ratio, "tau_prime": dtau}


def _q_d(eq, cov):
    """Exact ``q_D(t) = (tau_D'(R_D(t)) R_D(t))^{alpha-1} p(t)`` with
    ``tau_D'(R_D(t)) = tau'(t) d(tau(t)) / d(t)``, ``d = r^{1-beta}``."""
    d = cov.density

    def q(t):
        tt = eq.tau(t)
        return (eq.tau.derivative(t) * d(tt) / d(t) * cov.R(t)) ** (eq.alpha - 1.0) * eq.p(t)
    return q


def _q_c(eq, cov):
    """Exact ``q_C(t) = (R_C(t) p(t) r(t)^{beta-2})^{beta-1}``."""
    beta = eq.beta
    return lambda t: (cov.R(t) * eq.p(t) * eq.r(t) ** (beta - 2.0)) ** (beta - 1.0)


def _q_equivalent(eq, cov, kind):
    """Structured ``E ~ q`` (via Karamata equivalents of ``R``), or None."""
    if not (_structured(eq.p) and _structured(eq.r)) or eq.tau.kind == "custom":
        return None
    d = cov.density
    Req = integral_equivalent(d)
    if kind == "D":
        d_tau = d.compose(eq.tau)
        if d_tau is None:
            return None
        c = float(eq.tau.derivative(1.0))
        return (d_tau / d * Req * c) ** (eq.alpha - 1.0) * eq.p
    return (Req * eq.p * eq.r ** (eq.beta - 2.0)) ** (eq.beta - 1.0)


def _mode_check(cov, want):
    ok = cov.mode == want
    return Check("r_integral_mode", f"int r^(1-beta) {'divergent' if want == 'Divergent' else 'convergent'}",
                 cov.mode, ok)


def check_hypotheses_gen1(eq, threshold=TREND_THRESHOLD, cov=None):
    """Hypotheses of the generalized divergent-case theorem: ``int r^{1-beta}``
    diverges, ``p_D = (p r^{beta-1}) o R_D^{-1}`` in RV(-alpha) with
    ``L_{p_D} -> 0``, and the transformed delay condition for ``tau_D``;
    the class follows from the convergence of ``int q_D``."""
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    cov = cov or build_change_of_variable(eq.r, beta, a)
    details = {"cov": cov}
    checks = [_mode_check(cov, "Divergent")]
    if not cov.divergent:
        checks.append(Check("route", "gen1", "use gen2", False))
        return HypothesisReport("Gen1", tuple(checks), "Undetermined", 1.0, None, details)
    pr = eq.p * eq.r ** (beta - 1.0)
    sub, est, trend = _coefficient_index_checks(cov, pr, -alpha, "p_D", threshold)
    checks += sub
    details["p_index"], details["L_trend"] = est, trend
    sub, delay = _delay_checks(eq, cov, "tau_D")
    checks += sub
    details["delay"] = delay
    q = _q_d(eq, cov)
    details["q"] = q
    qe = _q_equivalent(eq, cov, "D")
    details["q_equivalent"] = qe
    details["q"] = with_log_tail(q, qe)
    if qe is None:
        vq, obs = None, "Undetermined (no structured equivalent of q_D)"
    else:
        vq, obs = _classify_integral(qe, a, "q_D")
    checks.append(Check("int_q_D_decided", "Convergent or Divergent", obs, vq is not None))
    details["int_q"] = vq
    if vq is None:
        cls, formula = "Undetermined", None
    elif vq.convergent:
        cls, formula = LABELS[("Infinite", "Finite")], "TF22"
    else:
        cls, formula = LABELS[("Infinite", "Infinite")], "TF11"
    return HypothesisReport("Gen1", tuple(checks), cls, 1.0, formula, details)


def check_hypotheses_gen2(eq, threshold=TREND_THRESHOLD, cov=None):
    """Hypotheses of the generalized convergent-case theorem: ``int r^{1-beta}``
    converges, ``p_C = (R_C^2 p r^{beta-1}) o Q^{-1}`` in RV(alpha-2) with
    ``L_{p_C} -> 0``, and the transformed delay condition for ``tau_C``;
    the class follows from the convergence of ``int q_C``."""
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    cov = cov or build_change_of_variable(eq.r, beta, a)
    details = {"cov": cov}
    checks = [_mode_check(cov, "Convergent")]
    if cov.divergent:
        checks.append(Check("route", "gen2", "use gen1", False))
        return HypothesisReport("Gen2", tuple(checks), "Undetermined", 0.0, None, details)
    pr = eq.p * eq.r ** (beta - 1.0)
    pc_equivalent = None
    if _structured(cov.density) and _structured(pr):
        pc_equivalent = integral_equivalent(cov.density) ** 2.0 * pr
    if cov.closed_form:
        # R_C is exactly its Karamata form for closed-form densities
        pc = pc_equivalent
    else:
        R = cov.R
        pc = CoefficientExpr.from_function(lambda t: R(t) ** 2 * pr(t), lambda t: math.nan)
    sub, est, trend = _coefficient_index_checks(cov, pc, alpha - 2.0, "p_C", threshold,
                                                equivalent=pc_equivalent)
    checks += sub
    details["p_index"], details["L_trend"] = est, trend
    sub, delay = _delay_checks(eq, cov, "tau_C")
    checks += sub
    details["delay"] = delay
    q = _q_c(eq, cov)
    details["q"] = q
    qe = _q_equivalent(eq, cov, "C")
    details["q_equivalent"] = qe
    details["q"] = with_log_tail(q, qe)
    if qe is None:
        vq, obs = None, "Undetermined (no structured equivalent of q_C)"
    else:
        vq, obs = _classify_integral(qe, a, "q_C")
    checks.append(Check("int_q_C_decided", "Convergent or Divergent", obs, vq is not None))
    details["int_q"] = vq
    if vq is None:
        cls, formula = "Undetermined", None
    elif vq.convergent:
        cls, formula = LABELS[("Finite", "Infinite")], "TF2C"
    else:
        cls, formula = LABELS[("Infinite", "Infinite")], "TF1C"
    return HypothesisReport("Gen2", tuple(checks), cls, 0.0, formula, details)


# -- routing --------------------------------------------------------------------------


def select_engine(eq):
    """``sv`` for ``delta > -1``, ``rv`` for ``delta < -1``; the critical
    ``delta = -1`` and non-regularly-varying ``p`` go to ``gen1`` or
    ``gen2`` according to the convergence of ``int r^{1-beta}``."""
    delta = _index_of(eq.p)
    if delta is not None and delta > -1:
        return "sv"
    if delta is not None and delta < -1:
        return "rv"
    v = classify_improper(eq.r ** (1.0 - eq.beta), eq.a)
    return "gen2" if v.convergent else "gen1"


_CHECKERS = {
    "sv": check_hypotheses_sv,
    "rv": check_hypotheses_rv,
    "gen1": check_hypotheses_gen1,
    "gen2": check_hypotheses_gen2,
}


def check_hypotheses(eq, engine="auto", threshold=TREND_THRESHOLD):
    if engine == "auto":
        engine = select_engine(eq)
    if engine not in _CHECKERS:
        raise PreconditionError(f"unknown engine {engine!r}")
    return _CHECKERS[engine](eq, threshold=threshold)


# -- verification helpers -------------------------------------------------------------


def _tail_grid(traj, n=240, burn_in=0.2):
    t0, t1 = float(traj.ts[0]), traj.t_end
    tb = math.exp(math.log(t0) + burn_in * (math.log(t1) - math.log(t0)))
    return np.geomspace(tb, t1, n)


def _limit_fit(x, v, basis):
    """Extrapolated limit of a monotone bounded tail ``v`` sampled on
    increasing ``x``: least squares ``v = L + c_1 b + c_2 b^2 + c_3 b^3`` in
    the engine's remainder integral ``b`` (which tends to 0), over the
    upper half of the log range; ``stability`` compares with the same
    window shifted one decade down."""
    lx = np.log(x)
    mid = 0.5 * (lx[0] + lx[-1])
    upper = lx >= mid
    ident = lambda u: u
    value, spread = extrapolate_tail_limit(basis[upper], v[upper], basis=ident)
    shift = math.log(10.0)
    prev = (lx >= mid - shift) & (lx <= lx[-1] - shift)
    if np.count_nonzero(prev) >= 6:
        previous, _ = extrapolate_tail_limit(basis[prev], v[prev], basis=ident)
        stability = abs(value - previous) / max(abs(value), 1e-300)
    else:
        previous, stability = math.nan, math.inf
    return {"value": value, "spread": spread, "previous": previous, "stability": stability}


def _ratio_checks(ts, ratio, tol):
    final = float(ratio[-1])
    lo, hi = 1.0 - tol["ratio"], 1.0 + tol["ratio"]
    checks = [Check("final_ratio", f"in [{lo:g}, {hi:g}]", final, bool(lo <= final <= hi))]
    sel = ts >= ts[-1] / 10.0 * (1 - 1e-12)
    dev = np.abs(ratio[sel] - 1.0)
    mono = bool(np.all(np.isfinite(dev)) and np.all(np.diff(dev) <= 1e-9 * max(float(np.max(dev)), 1e-300)))
    checks.append(Check("ratio_trend", "|ratio - 1| non-increasing over the last decade",
                        "monotone" if mono else "not monotone", mono))
    return checks


def _index_window(traj):
    t1 = traj.t_end
    lo = max(t1 / 1e3, float(traj.ts[0]) * (1 + 1e-9))
    return np.geomspace(lo, t1, 121)


def _index_check(name, t, vals, target, tol, log_values=None):
    try:
        est = estimate_rv_index(t, vals, log_values=log_values)
    except (PreconditionError, DomainError) as exc:
        return Check(name, f"index {target:g}", f"failed: {exc}", False), None
    if target == 0.0:
        ok = est.verdict == "SV" and abs(est.index) <= tol["sv_index"]
        return Check(name, f"SV, |index| <= {tol['sv_index']:g}", est.index, ok), est
    ok = est.verdict != "NotRV" and abs(est.index - target) <= tol["index_rel"] * abs(target)
    return Check(name, f"index {target:g} within {100 * tol['index_rel']:g}%", est.index, ok), est


def _smallness_check(name, ts, values):
    trend = vanishing_trend(np.log(ts), values, threshold=None)
    return Check(name, "decreasing", trend.describe(), trend.passed), trend


def _stability_check(fit, tol, symbol):
    return Check(f"{symbol}_stability", f"relative change < {tol['limit_stability']:g}",
                 fit["stability"], bool(fit["stability"] < tol["limit_stability"]))


def _require(report, theorem, eq):
    if report is None:
        report = _CHECKERS[theorem.lower()](eq)
    if report.theorem != theorem:
        raise PreconditionError(f"expected a {theorem} report, got {report.theorem}")
    if not report.applicable:
        failed = [c.name for c in report.checks if not c.passed]
        raise PreconditionError(f"{theorem} hypotheses fail: {', '.join(failed)}")
    return report


def _observe(traj, report):
    observed = classify_trajectory(traj)
    if observed.label != report.predicted_class:
        raise MismatchError(report.predicted_class, observed.label)
    return observed


def _constants(label, N=None, M=None, A=None):
    out = {}
    if label in (LABELS[("Finite", "Finite")], LABELS[("Finite", "Infinite")]):
        out["N"] = N
    if label in (LABELS[("Finite", "Finite")], LABELS[("Infinite", "Finite")]):
        out["M"] = M
        if A is not None:
            out["A"] = A
    return out


# -- verification ---------------------------------------------------------------------


def verify_sv(eq, traj, report=None, tolerances=None):
    """Compare ``traj`` with the slowly varying formulae.

    ``F1``: ``ln y / int_a^t G/Phi^{-1}(delta+1)``; ``F2``: remainder ratio
    ``(N - y) Phi^{-1}(delta+1) / (N int_t^inf G)`` with extrapolated ``N``.
    Also: SV verdict on ``y``; the smallness trace
    ``L_p^{beta-1} / (L_r^{beta-1} (N - y))`` for ``F2``; and, when
    ``gamma = alpha + delta``, the de Haan check ``y in Pi(t y')``.
    """
    tol = _tolerances(tolerances)
    report = _require(report, "SV", eq)
    observed = _observe(traj, report)
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    delta, gamma = report.details["delta"], report.details["gamma"]
    G = report.details["G"]
    c = phi_inv(delta + 1.0, alpha)
    ts = _tail_grid(traj)
    y = traj.y(ts)
    metrics, traces, extras = [], {}, {}
    N = None
    if report.formula_id == "F1":
        ratio = np.log(y) / (_cumulative(G, a, ts) / c)
        metric = "ln y(t) / [int_a^t G / Phi^-1(delta+1)]"
    else:
        tails = _tails(G, ts)
        fit = _limit_fit(ts, y, tails)
        N = fit["value"]
        extras["N_fit"] = fit
        ratio = (N - y) * c / (N * tails)
        metric = "(N - y(t)) Phi^-1(delta+1) / (N int_t^inf G)"
        metrics.append(_stability_check(fit, tol, "N"))
        if gamma is not None:
            Lp = eq.p.slowly_varying_part()
            Lr = eq.r.slowly_varying_part()
            small = Lp(ts) ** (beta - 1.0) / (Lr(ts) ** (beta - 1.0) * (N - y))
            chk, trend = _smallness_check("sv_smallness_trace", ts, small)
            metrics.append(chk)
            traces["sv_smallness"] = (ts, small)
    metrics = _ratio_checks(ts, ratio, tol) + metrics
    ti = _index_window(traj)
    chk, est = _index_check("y_index", ti, traj.y(ti), 0.0, tol)
    metrics.append(chk)
    extras["index"] = est
    if gamma is not None and abs(gamma - alpha - delta) < 1e-12:
        lam = (0.5, 2.0, 4.0)
        grid = np.geomspace(ts[0] / min(lam), traj.t_end / max(lam), 120)
        pi = pi_class_check(traj.y, lambda t: t * traj.y_prime(t), grid, lam, tol["pi"])
        metrics.append(Check("pi_class", f"deviation decreasing, final < {tol['pi']:g}",
                             pi.max_deviation, pi.holds))
        traces["pi_deviation"] = (pi.ts, pi.deviations)
        extras["pi"] = pi
    return AsymptoticFit(
        formula_id=report.formula_id, comparison_metric=metric, ts=ts, ratio=ratio,
        final_ratio=float(ratio[-1]), limit_constants=_constants(report.predicted_class, N=N),
        predicted_class=report.predicted_class, observed=observed, metrics=tuple(metrics),
        traces=traces, extras=extras,
    )


def _fit_A(eq, traj, ts, M, rho, report_H):
    """Least-squares ``A`` in ``y = A + int_a^t M^{beta-1} r^{1-beta}(s)
    exp(-int_s^inf (beta-1)/rho^{alpha-1} H_tau) ds`` with the ``o(1)``
    dropped, fitted over the upper half of the tail."""
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    grid = np.geomspace(a, traj.t_end, 2000)
    inner = _tails(report_H, grid)
    f = M ** (beta - 1.0) * eq.r(grid) ** (1.0 - beta) * np.exp(-(beta - 1.0) / rho ** (alpha - 1.0) * inner)
    I = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid))])
    sel = grid >= math.sqrt(ts[0] * ts[-1])
    return float(np.mean(traj.y(grid[sel]) - I[sel]))


def verify_rv(eq, traj, report=None, tolerances=None):
    """Compare ``traj`` with the regularly varying formulae.

    ``F11``: ``[ln y - ln(t r^{1-beta})] / [((beta-1)/Phi(rho)) int_a^t H_tau]``;
    ``F21``: remainder ratio ``(M - y^[1]) rho^{alpha-1} / (M int_t^inf H_tau)``
    (``y^[1] = M exp(-int_t^inf (1+o(1)) H_tau / rho^{alpha-1})``) and the
    smallness trace of the quasiderivative gap.  Also the index of ``y``
    against ``rho`` and the de Haan check ``y^[1] in Pi(t p Phi(y o tau))``.
    """
    tol = _tolerances(tolerances)
    report = _require(report, "RV", eq)
    observed = _observe(traj, report)
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    delta, rho = report.details["delta"], report.details["rho"]
    H = report.details["H"]
    ts = _tail_grid(traj)
    metrics, traces, extras = [], {}, {}
    M = A = None
    if report.formula_id == "F11":
        y = traj.y(ts)
        num = np.log(y) - np.log(ts * eq.r(ts) ** (1.0 - beta))
        ratio = num / ((beta - 1.0) / phi(rho, alpha) * _cumulative(H, a, ts))
        metric = "[ln y - ln(t r^(1-beta))] / [((beta-1)/Phi(rho)) int_a^t H_tau]"
    else:
        u = traj.quasi(ts)
        tails = _tails(H, ts)
        fit = _limit_fit(ts, u, tails)
        M = fit["value"]
        extras["M_fit"] = fit
        ratio = (M - u) * rho ** (alpha - 1.0) / (M * tails)
        metric = "(M - y^[1](t)) rho^(alpha-1) / (M int_t^inf H_tau)"
        metrics.append(_stability_check(fit, tol, "M"))
        tau, dtau = eq.tau(ts), eq.tau.derivative(ts)
        Lp = ts ** (-delta) * eq.p(ts)
        Lr = ts ** (-(delta + alpha)) * eq.r(ts)
        small = ts ** (delta + alpha) * dtau ** (alpha - 1.0) * Lp / (tau ** (delta + alpha) * Lr * (M - u))
        chk, _ = _smallness_check("rv_smallness_trace", ts, small)
        metrics.append(chk)
        traces["rv_smallness"] = (ts, small)
        A = _fit_A(eq, traj, ts, M, rho, H)
    metrics = _ratio_checks(ts, ratio, tol) + metrics
    ti = _index_window(traj)
    chk, est = _index_check("y_index", ti, traj.y(ti), rho, tol)
    metrics.append(chk)
    extras["index"] = est
    lam = (0.5, 2.0, 4.0)
    grid = np.geomspace(ts[0] / min(lam), traj.t_end / max(lam), 120)
    w = lambda t: t * eq.p(t) * phi(traj.y(eq.tau(t)), alpha)
    pi = pi_class_check(traj.quasi, w, grid, lam, tol["pi"])
    metrics.append(Check("pi_class", f"deviation decreasing, final < {tol['pi']:g}",
                         pi.max_deviation, pi.holds))
    traces["pi_deviation"] = (pi.ts, pi.deviations)
    extras["pi"] = pi
    return AsymptoticFit(
        formula_id=report.formula_id, comparison_metric=metric, ts=ts, ratio=ratio,
        final_ratio=float(ratio[-1]), limit_constants=_constants(report.predicted_class, M=M, A=A),
        predicted_class=report.predicted_class, observed=observed, metrics=tuple(metrics),
        traces=traces, extras=extras,
    )


def _s_window(cov, traj, decades=3.0, n=121):
    """Geometric ``s`` grid ending at ``phi(t_end)`` and the matching ``t``."""
    s1 = float(cov.forward(traj.t_end))
    s_start = float(cov.forward(float(traj.ts[0])))
    s0 = max(s1 / 10 ** decades, s_start * (1 + 1e-9) if s_start > 0 else s1 / 10 ** decades)
    s = np.geomspace(s0, s1, n)
    t = np.asarray(cov.inverse(s), dtype=float)
    t[-1] = min(t[-1], traj.t_end)
    return s, t


def _s_tail(cov, traj, n=160, burn_in=0.2):
    ts = _tail_grid(traj, n, burn_in)
    s0, s1 = float(cov.forward(ts[0])), float(cov.forward(ts[-1]))
    s = np.geomspace(s0, s1, n)
    t = np.asarray(cov.inverse(s), dtype=float)
    t = np.clip(t, ts[0], traj.t_end)
    return s, t


def verify_gen1(eq, traj, report=None, tolerances=None):
    """Compare ``traj`` with the generalized divergent-case formulae.

    Index of ``y o R_D^{-1}`` against 1 on an ``R_D``-geometric grid;
    ``TF11``: ``[ln y - ln R_D] / [(beta-1) int_a^t q_D]``; ``TF22``:
    ``M`` extrapolated in ``s = R_D(t)``, remainder ratio
    ``(M - y^[1]) / (M int_t^inf q_D)`` and the smallness trace
    ``tau_D'(R_D)^{alpha-1} R_D^alpha p r^{beta-1} / (M - y^[1])``.
    """
    tol = _tolerances(tolerances)
    report = _require(report, "Gen1", eq)
    observed = _observe(traj, report)
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    cov = report.details["cov"]
    q = report.details["q"]
    ts = _tail_grid(traj)
    metrics, traces, extras = [], {}, {}
    M = None
    if report.formula_id == "TF11":
        y = traj.y(ts)
        ratio = (np.log(y) - np.log(cov.R(ts))) / ((beta - 1.0) * _cumulative(q, a, ts))
        metric = "[ln y - ln R_D] / [(beta-1) int_a^t q_D]"
    else:
        s, t = _s_tail(cov, traj)
        fit = _limit_fit(s, traj.quasi(t), _tails(q, t))
        M = fit["value"]
        extras["M_fit"] = fit
        u = traj.quasi(ts)
        ratio = (M - u) / (M * _tails(q, ts))
        metric = "(M - y^[1](t)) / (M int_t^inf q_D)"
        metrics.append(_stability_check(fit, tol, "M"))
        d = cov.density
        dtau = eq.tau.derivative(ts) * d(eq.tau(ts)) / d(ts)
        R = cov.R(ts)
        small = dtau ** (alpha - 1.0) * R ** alpha * eq.p(ts) * eq.r(ts) ** (beta - 1.0) / (M - u)
        chk, _ = _smallness_check("gen1_smallness_trace", ts, small)
        metrics.append(chk)
        traces["gen1_smallness"] = (ts, small)
    metrics = _ratio_checks(ts, ratio, tol) + metrics
    s, t = _s_window(cov, traj)
    chk, est = _index_check("x_index", s, traj.y(t), 1.0, tol)
    metrics.append(chk)
    extras["index"] = est
    return AsymptoticFit(
        formula_id=report.formula_id, comparison_metric=metric, ts=ts, ratio=ratio,
        final_ratio=float(ratio[-1]), limit_constants=_constants(report.predicted_class, M=M),
        predicted_class=report.predicted_class, observed=observed, metrics=tuple(metrics),
        traces=traces, extras=extras,
    )


def verify_gen2(eq, traj, report=None, tolerances=None):
    """Compare ``traj`` with the generalized convergent-case formulae.

    SV verdict of ``y o Q^{-1}``; ``TF1C``: ``ln y / [(beta-1)^{beta-1}
    int_a^t q_C]``; ``TF2C``: ``N`` extrapolated in ``s = Q(t)``, remainder
    ratio ``(N - y) / (N (beta-1)^{beta-1} int_t^inf q_C)`` and the smallness
    trace ``R_C^alpha p r^{beta-1} / Phi(N - y)``.
    """
    tol = _tolerances(tolerances)
    report = _require(report, "Gen2", eq)
    observed = _observe(traj, report)
    alpha, beta, a = eq.alpha, eq.beta, eq.a
    cov = report.details["cov"]
    q = report.details["q"]
    k = (beta - 1.0) ** (beta - 1.0)
    ts = _tail_grid(traj)
    metrics, traces, extras = [], {}, {}
    N = None
    if report.formula_id == "TF1C":
        ratio = np.log(traj.y(ts)) / (k * _cumulative(q, a, ts))
        metric = "ln y / [(beta-1)^(beta-1) int_a^t q_C]"
    else:
        s, t = _s_tail(cov, traj)
        fit = _limit_fit(s, traj.y(t), _tails(q, t))
        N = fit["value"]
        extras["N_fit"] = fit
        y = traj.y(ts)
        ratio = (N - y) / (N * k * _tails(q, ts))
        metric = "(N - y(t)) / (N (beta-1)^(beta-1) int_t^inf q_C)"
        metrics.append(_stability_check(fit, tol, "N"))
        small = cov.R(ts) ** alpha * eq.p(ts) * eq.r(ts) ** (beta - 1.0) / phi(N - y, alpha)
        chk, _ = _smallness_check("gen2_smallness_trace", ts, small)
        metrics.append(chk)
        traces["gen2_smallness"] = (ts, small)
    metrics = _ratio_checks(ts, ratio, tol) + metrics
    s, t = _s_window(cov, traj)
    chk, est = _index_check("x_index", s, traj.y(t), 0.0, tol)
    metrics.append(chk)
    extras["index"] = est
    return AsymptoticFit(
        formula_id=report.formula_id, comparison_metric=metric, ts=ts, ratio=ratio,
        final_ratio=float(ratio[-1]), limit_constants=_constants(report.predicted_class, N=N),
        predicted_class=report.predicted_class, observed=observed, metrics=tuple(metrics),
        traces=traces, extras=extras,
    )


_VERIFIERS = {"sv": verify_sv, "rv": verify_rv, "gen1": verify_gen1, "gen2": verify_gen2}


def verify(eq, traj, engine="auto", report=None, tolerances=None):
    if engine == "auto":
        engine = select_engine(eq) if report is None else report.theorem.lower()
    if engine not in _VERIFIERS:
        raise PreconditionError(f"unknown engine {engine!r}")
    return _VERIFIERS[engine](eq, traj, report=report, tolerances=tolerances)


# -- necessity --------------------------------------------------------------------------


@dataclass(frozen=True)
class NecessityReport:
    """``applicable`` is False when the preconditions (an increasing,
    slowly varying trajectory, ``r`` in RV(gamma) with ``gamma > alpha-1``,
    ``tau(t)`` comparable to ``t``) fail.  ``alarm`` flags a trajectory
    that is increasing and slowly varying although the necessary limit does
    not vanish."""

    applicable: bool
    passed: bool
    alarm: bool
    checks: tuple
    reason: str = ""
    riccati_residual: float = math.nan

    def as_dict(self):
        return {"applicable": self.applicable, "passed": self.passed, "alarm": self.alarm,
                "reason": self.reason, "riccati_residual": self.riccati_residual,
                "checks": [c.as_dict() for c in self.checks]}


def riccati_residual(eq, traj, n=4000):
    """Relative residual of ``w' - p Phi(y(tau))/Phi(y) + (alpha-1) r^{1-beta} |w|^beta = 0``
    for ``w = r Phi(y'/y)`` along the trajectory tail, with ``w'`` from
    second-order differences on a fine geometric grid."""
    alpha, beta = eq.alpha, eq.beta
    ts = _tail_grid(traj, n)
    y, yp = traj.y(ts), traj.y_prime(ts)
    w = eq.r(ts) * phi(yp / y, alpha)
    dw = np.gradient(w, ts)
    t2 = eq.p(ts) * phi(traj.y(eq.tau(ts)), alpha) / phi(y, alpha)
    t3 = (alpha - 1.0) * eq.r(ts) ** (1.0 - beta) * np.abs(w) ** beta
    res = np.abs(dw - t2 + t3) / np.maximum.reduce([np.abs(dw), np.abs(t2), np.abs(t3)])
    return float(np.max(res[1:-1]))


def check_necessity(eq, traj, threshold=TREND_THRESHOLD, tolerances=None):
    """Necessary condition for increasing slowly varying solutions: the
    limit ``t^{alpha-1}/r int_a^t p -> 0`` (and, for structured ``p``,
    ``t^{alpha+delta-gamma} L_p/L_r -> 0``).  A trajectory that is
    increasing and slowly varying while the trend does not vanish raises a
    :class:`~hldde.errors.ConsistencyWarning`."""
    tol = _tolerances(tolerances)
    alpha = eq.alpha
    observed = classify_trajectory(traj)
    ti = _index_window(traj)
    reasons = []
    if observed.monotonicity != "Increasing":
        reasons.append(f"trajectory is {observed.monotonicity}")
    try:
        est = estimate_rv_index(ti, traj.y(ti))
        if est.verdict != "SV":
            reasons.append(f"trajectory index verdict {est.label}")
    except (PreconditionError, DomainError) as exc:
        reasons.append(f"index estimate failed: {exc}")
    gamma = _index_of(eq.r)
    if gamma is None or not gamma > alpha - 1:
        reasons.append("r is not in RV(gamma) with gamma > alpha - 1")
    if eq.tau.kind == "custom":
        grid = np.geomspace(_trend_start(eq), 1e9, 50)
        if not np.all(grid / eq.tau(grid) < 1e3):
            reasons.append("t / tau(t) is not bounded")
    if reasons:
        return NecessityReport(False, False, False, (), "; ".join(reasons))
    checks = []
    trend = _scaled_int_p_trend(eq, threshold)
    checks.append(Check("scaled_int_p_vanishes", f"decreasing, final < {threshold:g}",
                        trend.describe(), trend.passed))
    delta = _index_of(eq.p)
    if delta is not None:
        e = CoefficientExpr(power=alpha) * eq.p / eq.r  # t^{alpha+delta-gamma} L_p / L_r
        tr = _expr_trend(e, _trend_start(eq), threshold)
        checks.append(Check("scaled_lp_lr_vanishes", f"decreasing, final < {threshold:g}",
                            tr.describe(), tr.passed))
    ric = riccati_residual(eq, traj)
    checks.append(Check("riccati_residual", f"< {tol['riccati']:g}", ric, ric < tol["riccati"]))
    passed = all(c.passed for c in checks)
    alarm = not all(c.passed for c in checks if c.name != "riccati_residual")
    if alarm:
        warnings.warn(
            "increasing slowly varying trajectory found although the necessary limit does not vanish",
            ConsistencyWarning, stacklevel=2,
        )
    return NecessityReport(True, passed, alarm, tuple(checks), "", ric)


# -- reciprocal equation ------------------------------------------------------------------


def _reciprocal_p(eq):
    """``p~(t) = tau'(t) r^{1-beta}(tau(t))``, structured when exact."""
    beta = eq.beta
    r = eq.r
    exact = _structured(r) and r.log_depth == 0 and r.poly is None and r.exp_rate is None
    if exact and eq.tau.kind == "proportional":
        return r.compose(eq.tau) ** (1.0 - beta) * eq.tau.lam
    if exact and eq.tau.is_identity:
        return r ** (1.0 - beta)
    tau = eq.tau

    def f(t):
        return tau.derivative(t) * r(tau(t)) ** (1.0 - beta)

    def fp(t):
        tt = tau(t)
        d = tau.derivative(t)
        if tau.kind == "custom":
            h = 1e-6 * np.maximum(np.abs(t), 1.0)
            dd = (tau.derivative(t + h) - tau.derivative(t - h)) / (2 * h)
        else:
            dd = 0.0
        base = r(tt) ** (1.0 - beta)
        return dd * base + d * d * (1.0 - beta) * base * r.log_derivative(tt)

    return CoefficientExpr.from_function(f, fp)


@dataclass(frozen=True)
class ReciprocalEquation:
    """The equation of degree ``beta`` solved by ``u = r Phi(y')``:
    ``(p^{1-beta} Phi_beta(u'))' = tau' r^{1-beta}(tau) Phi_beta(u(tau))``.
    Its own quasiderivative is ``y o tau``."""

    original: HalfLinearEquation
    equation: HalfLinearEquation

    @property
    def delta_tilde(self):
        delta = _index_of(self.original.p)
        if delta is None:
            return None
        beta = self.original.beta
        return delta * (1.0 - beta) - beta

    def residual(self, traj, order=5):
        """Relative residual of the integrated reciprocal equation along
        ``traj`` (a trajectory of the original equation): at every node
        ``t_i`` compare ``x(t_i) - x(t_0)`` with ``int p~ Phi_beta(u(tau))``
        where ``x = r~ Phi_beta(u')``; the integral uses Gauss-Legendre
        rules on the node intervals."""
        eq, rec = self.original, self.equation
        if traj.eq is not eq:
            if traj.eq != eq:
                raise PreconditionError("trajectory belongs to a different equation")
        beta = eq.beta
        t0 = eq.tau.inverse(eq.a) if not eq.tau.is_identity else eq.a
        sel = traj.ts >= t0
        ts = traj.ts[sel]
        if len(ts) < 3:
            raise PreconditionError("trajectory too short for the reciprocal residual")
        x = rec.r(ts) * phi(traj.quasi_primes[sel], beta)
        nodes, weights = np.polynomial.legendre.leggauss(order)
        lo, hi = ts[:-1], ts[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        flat = pts.ravel()
        f = rec.p(flat) * phi(traj.quasi(eq.tau(flat)), beta)
        pieces = half * (f.reshape(pts.shape) @ weights)
        integral = np.concatenate([[0.0], np.cumsum(pieces)])
        err = np.abs(x - x[0] - integral)
        return float(np.max(err) / np.max(np.abs(x)))

    def index_check(self, grid=None):
        """rvkit index of ``p~`` against ``delta~ = delta(1-beta) - beta``;
        returns ``(estimate, target, passed)`` with a 5% tolerance
        (absolute 0.05 when the target is 0)."""
        target = self.delta_tilde
        if target is None:
            raise PreconditionError("index bookkeeping needs a regularly varying p")
        grid = np.geomspace(max(1e2, 10 * self.original.a), 1e8, 241) if grid is None else grid
        est = estimate_rv_index(grid, self.equation.p(grid))
        value = est.limit
        return est, target, bool(abs(value - target) <= 0.05 * max(1.0, abs(target)))

    def r_index(self):
        """Index of ``r~ = p^{1-beta}`` (structured), expected ``delta~ + beta``."""
        return _index_of(self.equation.r)

    def ll_comparison(self, grid=None):
        """``(L_p~ / L_r~) / ((L_p/L_r)^{beta-1} tau')`` along ``grid``;
        bounded away from 0 and infinity when the comparison holds."""
        eq = self.original
        alpha, beta = eq.alpha, eq.beta
        grid = np.geomspace(max(1e2, 10 * eq.a), 1e8, 81) if grid is None else grid
        t = grid
        lhs = t ** beta * self.equation.p(t) / self.equation.r(t)
        rhs = (t ** alpha * eq.p(t) / eq.r(t)) ** (beta - 1.0) * eq.tau.derivative(t)
        return t, lhs / rhs


def reciprocal_transform(eq):
    """Reciprocal equation of ``eq`` (degree ``beta``, same delay)."""
    beta = eq.beta
    grid = eq.a * np.logspace(0, 6, 61)
    with np.errstate(all="ignore"):
        pv = eq.p.log_value(grid) if _structured(eq.p) else eq.p(grid)
    if not np.all(np.isfinite(pv)) or (not _structured(eq.p) and np.any(pv <= 0)):
        raise DomainError("p must be strictly positive on the grid")
    rec = HalfLinearEquation(alpha=beta, r=eq.p ** (1.0 - beta), p=_reciprocal_p(eq), tau=eq.tau, a=eq.a)
    return ReciprocalEquation(eq, rec)


# -- change of variables --------------------------------------------------------------


@dataclass(frozen=True)
class TransformedEquation:
    """``eq`` in the variable ``s = phi(t)`` with ``phi = R_D`` (divergent
    mode) or ``phi = Q`` (convergent mode):
    ``r^ = (r o phi^{-1}) Phi(phi' o phi^{-1})``,
    ``p^ = (p o phi^{-1}) / (phi' o phi^{-1})``, ``tau^ = phi o tau o phi^{-1}``."""

    original: HalfLinearEquation
    cov: ChangeOfVariable

    def _t(self, s):
        return np.asarray(self.cov.inverse(s), dtype=float)

    def r_hat(self, s):
        t = self._t(s)
        return self.original.r(t) * phi(self.cov.forward_prime(t), self.original.alpha)

    def p_hat(self, s):
        t = self._t(s)
        return self.original.p(t) / self.cov.forward_prime(t)

    def tau_hat(self, s):
        return self.cov.forward(self.original.tau(self._t(s)))

    def tau_hat_prime(self, s):
        t = self._t(s)
        tau = self.original.tau
        return tau.derivative(t) * self.cov.forward_prime(tau(t)) / self.cov.forward_prime(t)

    def expected_r_hat(self, s):
        s = np.asarray(s, dtype=float)
        if self.cov.divergent:
            return np.ones_like(s)
        return s ** (2.0 * self.original.alpha - 2.0)

    def r_hat_deviation(self, s):
        """Divergent mode: ``max |r^ - 1|``; convergent mode:
        ``max |r^(s) / s^{2alpha-2} - 1|``."""
        s = np.asarray(s, dtype=float)
        rh = self.r_hat(s)
        if self.cov.divergent:
            return float(np.max(np.abs(rh - 1.0)))
        return float(np.max(np.abs(rh / self.expected_r_hat(s) - 1.0)))

    def quasi_deviation(self, traj, s, rel_step=1e-4):
        """Max relative gap between ``x^[1](s) = r^(s) Phi(x'(s))`` with
        ``x = y o phi^{-1}`` differentiated numerically in ``s`` (five-point
        stencil) and ``y^[1](phi^{-1}(s))``."""
        alpha = self.original.alpha
        s = np.asarray(s, dtype=float)
        s = s[(s * (1 + 2 * rel_step) <= self.cov.forward(traj.ts[-1]))
              & (s * (1 - 2 * rel_step) >= self.cov.forward(traj.ts[0]))]
        if s.size == 0:
            raise PreconditionError("no s points with a stencil inside the trajectory")
        h = rel_step * s
        x = lambda v: traj.y(self._t(v))
        dx = (x(s - 2 * h) - 8 * x(s - h) + 8 * x(s + h) - x(s + 2 * h)) / (12 * h)
        lhs = self.r_hat(s) * phi(dx, alpha)
        rhs = traj.quasi(self._t(s))
        return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


def change_of_variables(eq, cov=None, mode=None):
    """Transform ``eq`` by its change of variable; ``mode`` (``"Divergent"``
    or ``"Convergent"``) asserts the expected mode of ``int r^{1-beta}``."""
    if cov is None:
        cov = build_change_of_variable(eq.r, eq.beta, eq.a)
    elif _structured(eq.r) and cov.density != eq.r ** (1.0 - eq.beta):
        raise PreconditionError("change of variable was not built from this equation's r")
    if mode is not None and mode != cov.mode:
        raise PreconditionError(f"mode mismatch: int r^(1-beta) is {cov.mode}, {mode} requested")
    return TransformedEquation(eq, cov)
