"""Acceptance suite: the eleven primary criteria at their stated tolerances.

Each criterion gathers named sub-checks, prints one ``PASS``/``FAIL`` line
and asserts.  Oracles are hand-derived closed forms or fits written here,
independent of the library routines under test.  Run directly
(``python tests/test_acceptance.py``) for the summary without pytest.
"""

import functools
import math
import sys
import warnings

import numpy as np
import pytest
from scipy import integrate

from hldde.asymptotics import (
    check_hypotheses, change_of_variables, reciprocal_transform, verify,
)
from hldde.core import CoefficientExpr, DelayMap, HalfLinearEquation
from hldde.dde import HistorySpec, classify_trajectory, manufactured_p, residual, solve
from hldde.quad import classify_improper
from hldde.rvkit import (
    KARAMATA_CASES, default_grid, estimate_rv_index, karamata_check, karamata_suite,
    nrv_index_from_logderivative, pi_class_check,
)

SOLVER_TOL = 1e-10


def sv_equation():
    # alpha = 2, p = 1, r = t^2 ln^2 t, unit shift
    return HalfLinearEquation(2.0, CoefficientExpr(power=2.0, log_powers=(2.0,)), CoefficientExpr(),
                              DelayMap.shift(1.0), 4.0)


def rv_equation():
    # alpha = 2, p = t^-3 ln^-2 t, r = 1/t, tau = t/2
    return HalfLinearEquation(2.0, CoefficientExpr(power=-1.0),
                              CoefficientExpr(power=-3.0, log_powers=(-2.0,)),
                              DelayMap.proportional(0.5), 3.0)


def manufactured_equation(alpha=2.0, lam=0.5):
    r, tau = CoefficientExpr(), DelayMap.proportional(lam)
    return HalfLinearEquation(alpha, r, manufactured_p(r, tau, 2.0, alpha), tau, 1.0)


def counterexample_equation():
    p = CoefficientExpr(scale=math.e, exp_rate=(-2.0, 0.0), poly=(-2.0, 0.0, 4.0))
    return HalfLinearEquation(2.0, CoefficientExpr(), p, DelayMap.shift(1.0), 1.0)


@functools.lru_cache(maxsize=None)
def sv_trajectory():
    eq = sv_equation()
    return eq, solve(eq, HistorySpec.power(1.0), 1e4, tol=SOLVER_TOL)


@functools.lru_cache(maxsize=None)
def rv_trajectory():
    eq = rv_equation()
    return eq, solve(eq, HistorySpec.power(2.0), 1e6, tol=SOLVER_TOL)


def slope(t, values):
    """Least-squares slope of ln values against ln t."""
    return float(np.polyfit(np.log(t), np.log(values), 1)[0])


def limit_in_inverse_log(t, values, terms=3):
    """Constant term of a fit in powers of 1/ln t."""
    basis = np.column_stack([np.log(t) ** -k for k in range(terms)])
    return float(np.linalg.lstsq(basis, values, rcond=None)[0][0])


def non_increasing(v):
    return bool(np.all(np.diff(v) <= 0))


# -- criteria -------------------------------------------------------------------------


def criterion_1():
    """Manufactured y = t^2 on the alpha x lambda grid with fixed steps h and h/2."""
    checks = []
    for alpha in (1.5, 2.0, 3.0):
        for lam in (0.3, 0.5, 0.9):
            eq = manufactured_equation(alpha, lam)
            errs = [abs(float(solve(eq, HistorySpec.power(2.0), 100.0, tol=None, step=h).y(100.0))
                        / 1e4 - 1.0) for h in (0.02, 0.01)]
            tag = f"alpha={alpha:g},lambda={lam:g}"
            checks.append((f"error[{tag}]", errs[1], errs[1] <= 1e-5))
            if max(errs) < 1e-12:
                # at alpha = 2, y'' = 2 is integrated exactly and both errors are
                # accumulated roundoff, so no order can be observed
                checks.append((f"order[{tag}]", "exact to roundoff", True))
            else:
                gain = errs[0] / errs[1]
                checks.append((f"order[{tag}]", gain, gain >= 8.0))
    return checks


def criterion_2():
    eq = counterexample_equation()
    y = lambda t: np.exp(-np.asarray(t, dtype=float) ** 2)
    yp = lambda t: -2.0 * np.asarray(t, dtype=float) * y(t)
    grid = 1.0 + 1e-3 * np.arange(5001)
    res = residual(eq, y, yp, grid)
    # identity check of the closed form: y'' = (4t^2 - 2) e^{-t^2} = p(t) e^{-(t-1)^2}
    t = np.linspace(1.0, 6.0, 501)
    identity = float(np.max(np.abs((4 * t ** 2 - 2) * np.exp(-t ** 2) - eq.p(t) * y(t - 1.0))))
    # forward integration beyond t = 4 is swamped by roundoff growing like e^{t^2}
    traj = solve(eq, HistorySpec.gaussian(), 4.0, tol=1e-14)
    label = classify_trajectory(traj).label
    est = nrv_index_from_logderivative(y, yp, np.geomspace(1e-2, 10.0, 121))
    omega = float(est.trace[-1])
    return [
        ("residual[1,6]", res, res < 1e-6),
        ("closed_form_identity", identity, identity < 1e-12),
        ("class", label, label == "D"),
        ("verdict", est.verdict, est.verdict == "NotRV"),
        ("t*y'/y at 10", omega, abs(omega + 200.0) <= 0.01 * 200.0),
    ]


def criterion_3():
    eq, traj = sv_trajectory()
    label = classify_trajectory(traj).label
    t = np.geomspace(1e3, 1e4, 50)
    index = slope(t, traj.y(t))
    fit_t = np.geomspace(1e2, 1e4, 200)
    N = limit_in_inverse_log(fit_t, traj.y(fit_t))
    # G = 1/(t ln^2 t) so int_t^inf G = 1/ln t, and Phi^-1(delta + 1) = 1
    tt = np.geomspace(1e3, 1e4, 11)
    ratio = (N - traj.y(tt)) * np.log(tt) / N
    # smallness trace L_p^{beta-1} / (L_r^{beta-1} (N - y)) with L_p = 1, L_r = ln^2 t
    ts = np.geomspace(1e2, 1e4, 21)
    small = 1.0 / (np.log(ts) ** 2 * (N - traj.y(ts)))
    return [
        ("class", label, label == "I_Binf"),
        ("index[1e3,1e4]", index, abs(index) <= 0.05),
        ("ratio_at_1e4", float(ratio[-1]), 0.7 <= ratio[-1] <= 1.3),
        ("ratio_toward_1", "monotone", non_increasing(np.abs(ratio - 1.0))),
        ("smallness_trace", float(small[-1]), non_increasing(small)),
    ]


def criterion_4():
    eq, traj = rv_trajectory()
    hyp = check_hypotheses(eq, "rv")
    t = np.geomspace(1e3, 1e4, 50)
    index = slope(t, traj.y(t))
    # de Haan check on the quasiderivative with auxiliary t p(t) y(t/2)
    w = lambda s: s * eq.p(s) * traj.y(0.5 * s)
    pi = pi_class_check(traj.quasi, w, np.geomspace(1e2, 2.5e5, 120))
    label = classify_trajectory(traj).label
    windows = [np.geomspace(1e4, 1e5, 100), np.geomspace(1e5, 1e6, 100)]
    M = [limit_in_inverse_log(s, traj.quasi(s)) for s in windows]
    gap = abs(M[1] - M[0]) / abs(M[1])
    return [
        ("applicable", hyp.applicable, hyp.applicable),
        ("rho", hyp.predicted_index, hyp.predicted_index == 2.0),
        ("index_at_1e4", index, abs(index - 2.0) <= 0.05 * 2.0),
        ("pi_class", pi.max_deviation, pi.holds and pi.decreasing),
        ("class", label, label == "I_infB"),
        ("M_stability", gap, gap <= 0.01),
    ]


def _karamata_closed_form(mode, theta, ts):
    # L = 1 with lower limit 1
    if mode == "i":
        return np.ones_like(ts)
    return 1.0 - ts ** -(theta + 1.0)


def criterion_5():
    results = karamata_suite(1e6)
    checks = [("cases", len(results), len(results) == 12 == len(KARAMATA_CASES))]
    for (mode, theta, logs), tr in results:
        tag = f"{mode},theta={theta:g},logs={list(logs)}"
        checks.append((f"deviation[{tag}]", tr.final_deviation, tr.final_deviation < 0.08))
        checks.append((f"monotone[{tag}]", tr.monotone_last_decade(), tr.monotone_last_decade()))
    for mode, theta in (("i", -2.0), ("ii", 2.0)):
        tr = karamata_check(CoefficientExpr(), theta, mode, grid=default_grid(1e3, 1e6), a=1.0)
        gap = float(np.max(np.abs(tr.ratio - _karamata_closed_form(mode, theta, tr.ts))))
        checks.append((f"exact[{mode},theta={theta:g}]", gap, gap < 1e-8))
    return checks


def _bertrand_by_hand(power, log_power):
    return "Convergent" if power < -1 or (power == -1 and log_power < -1) else "Divergent"


BERTRAND_TABLE = [
    (-2, -2, "Convergent"), (-2, -1, "Convergent"), (-2, 0, "Convergent"), (-2, 2, "Convergent"),
    (-1, -2, "Convergent"), (-1, -1, "Divergent"), (-1, 0, "Divergent"), (-1, 2, "Divergent"),
    (0, -2, "Divergent"), (0, -1, "Divergent"), (0, 0, "Divergent"), (0, 2, "Divergent"),
]


def criterion_6():
    checks = []
    for power, log_power, want in BERTRAND_TABLE:
        assert want == _bertrand_by_hand(power, log_power)
        f = CoefficientExpr(power=float(power), log_powers=(float(log_power),))
        for method in ("auto", "heuristic"):
            got = classify_improper(f, 16.0, method=method).status
            checks.append((f"{method}[t^{power} ln^{log_power}]", got, got == want))
    # named integrals: G = 1/(t ln^2 t) and H_tau = 1/(4 t ln^2 t), both convergent
    t = np.geomspace(10.0, 1e6, 30)
    for name, eq, key, hand in (("G", sv_equation(), "G", 1.0 / (t * np.log(t) ** 2)),
                                ("H_tau", rv_equation(), "H", 0.25 / (t * np.log(t) ** 2))):
        hyp = check_hypotheses(eq)
        f = hyp.details[key]
        dev = float(np.max(np.abs(f(t) / hand - 1.0)))
        checks.append((f"{name}_closed_form", dev, dev < 1e-12))
        got = classify_improper(f, eq.a).status
        checks.append((f"int_{name}", got, got == "Convergent"))
    return checks


def criterion_7():
    checks = []
    # scenario 1: r = 1, p = 8 t^-2 gives p~ = 1/2 (delta~ = 0);
    # scenario 4: r = 1/t, tau = t/2 gives p~ = t/4 (delta~ = 1)
    eq1 = manufactured_equation()
    cases = [("manufactured", eq1, solve(eq1, HistorySpec.power(2.0), 1e3, tol=SOLVER_TOL),
              lambda t: 0.5 * np.ones_like(t), -2.0, 0.0),
             ("rv_scenario", *rv_trajectory(), lambda t: t / 4.0, -3.0, 1.0)]
    for label, eq, traj, p_hand, delta, delta_tilde in cases:
        rec = reciprocal_transform(eq)
        res = rec.residual(traj)
        checks.append((f"residual[{label}]", res, res < 10 * SOLVER_TOL))
        grid = np.geomspace(1e2, 1e8, 241)
        dev = float(np.max(np.abs(rec.equation.p(grid) / p_hand(grid) - 1.0)))
        checks.append((f"p_tilde_closed_form[{label}]", dev, dev < 1e-12))
        est = estimate_rv_index(grid, rec.equation.p(grid))
        checks.append((f"delta_tilde[{label}]", est.limit,
                       abs(est.limit - delta_tilde) <= 0.05 * max(1.0, abs(delta_tilde))))
        bookkeeping = delta * (1.0 - eq.beta) - eq.beta
        checks.append((f"bookkeeping[{label}]", bookkeeping, bookkeeping == delta_tilde))
    return checks


def criterion_8():
    checks = []
    # divergent: r = 1/t, alpha = 2: R_D' = t, so r^ = (1/t) t = 1
    eq = rv_equation()
    tcv = change_of_variables(eq, mode="Divergent")
    s = np.geomspace(tcv.cov.forward(6.0), tcv.cov.forward(1e6), 40)
    dev = float(np.max(np.abs(tcv.r_hat(s) - 1.0)))
    checks.append(("r_hat_is_one", dev, dev < 1e-8))
    traj = solve(eq, HistorySpec.power(2.0), 1e4, tol=SOLVER_TOL)
    q = tcv.quasi_deviation(traj, tcv.cov.forward(np.geomspace(6.0, 1e4, 30)))
    checks.append(("quasi_equality[divergent]", q, q < 1e-6))
    # convergent: r = t^2, alpha = 2, a = 1: Q(t) = t, r^(s) = s^2
    eq = HalfLinearEquation(2.0, CoefficientExpr(power=2.0), CoefficientExpr(),
                            DelayMap.proportional(0.5), 1.0)
    tcv = change_of_variables(eq, mode="Convergent")
    s = np.geomspace(2.0, 1e6, 40)
    dev = float(np.max(np.abs(tcv.r_hat(s) / s ** 2 - 1.0)))
    checks.append(("r_hat_is_s^2", dev, dev < 1e-6))
    traj = solve(eq, HistorySpec.power(1.0), 1e3, tol=SOLVER_TOL)
    q = tcv.quasi_deviation(traj, tcv.cov.forward(np.geomspace(2.0, 1e3, 30)))
    checks.append(("quasi_equality[convergent]", q, q < 1e-6))
    return checks


def criterion_9():
    checks = []
    for label, (eq, traj), engines, key in (("sv_vs_gen2", sv_trajectory(), ("sv", "gen2"), "N"),
                                            ("rv_vs_gen1", rv_trajectory(), ("rv", "gen1"), "M")):
        fits = [verify(eq, traj, engine=e) for e in engines]
        labels = [f.predicted_class for f in fits] + [fits[0].observed.label]
        checks.append((f"classes[{label}]", "/".join(labels), len(set(labels)) == 1))
        v = [f.limit_constants[key] for f in fits]
        gap = abs(v[0] - v[1]) / abs(v[0])
        checks.append((f"{key}_gap[{label}]", gap, gap < 0.01))
    return checks


def _q_d_in_lnln(omega):
    """int q_D dt in u = ln ln t from u(16) to 1, 2, 4, ... 64 for the
    critical case, where q_D = ln(t/16) / (t ln^2 t (ln ln t)^omega)."""
    u0 = math.log(math.log(16.0))

    def integrand(u):
        lt = math.exp(u)  # ln t
        return (lt - math.log(16.0)) / (lt * u ** omega)

    edges = [u0] + [float(2 ** k) for k in range(0, 7)]
    parts = [integrate.quad(integrand, lo, hi)[0] for lo, hi in zip(edges[:-1], edges[1:])]
    return np.cumsum(parts)


def criterion_10():
    checks = []
    for omega, want in ((0.5, "Divergent"), (2.0, "Convergent")):
        p = CoefficientExpr(power=-1.0, log_powers=(-2.0, -omega))
        eq = HalfLinearEquation(2.0, CoefficientExpr(power=1.0), p, DelayMap.proportional(0.5), 16.0)
        hyp = check_hypotheses(eq)
        checks.append((f"route[omega={omega:g}]", hyp.theorem, hyp.theorem == "Gen1"))
        checks.append((f"applicable[omega={omega:g}]", hyp.applicable, hyp.applicable))
        got = hyp.details["int_q"].status
        checks.append((f"int_q_D[omega={omega:g}]", got, got == want))
        t = np.geomspace(20.0, 1e8, 30)
        hand = np.log(t / 16.0) * p(t)
        dev = float(np.max(np.abs(hyp.details["q"](t) / hand - 1.0)))
        checks.append((f"q_D_closed_form[omega={omega:g}]", dev, dev < 1e-10))
        # partial integrals in ln ln t: unbounded growth (~ u^{1/2}) or a bounded tail
        partial = _q_d_in_lnln(omega)
        growth = partial[-1] - partial[-2]
        independent = "Divergent" if growth > 1.0 else "Convergent"
        checks.append((f"independent[omega={omega:g}]", growth, independent == want))
    return checks


def criterion_11():
    # r = e^{-t}, alpha = 2: R_D(t) = e^t - e, so p_D(s) = 1 / ((s + e)^2 ln(s + e))
    eq = HalfLinearEquation(2.0, CoefficientExpr(exp_rate=(-1.0, 0.0)),
                            CoefficientExpr(exp_rate=(-1.0, -1.0)), DelayMap.shift(1.0), 1.0)
    hyp = check_hypotheses(eq)
    tcv = change_of_variables(eq, cov=hyp.details["cov"])
    s = np.geomspace(1e3, 1e12, 91)
    p_d = tcv.p_hat(s)
    hand = 1.0 / ((s + math.e) ** 2 * np.log(s + math.e))
    dev = float(np.max(np.abs(p_d / hand - 1.0)))
    est = estimate_rv_index(s, p_d)
    L = s ** 2 * p_d
    return [
        ("route", hyp.theorem, hyp.theorem == "Gen1"),
        ("p_D_closed_form", dev, dev < 1e-8),
        ("p_D_index", est.index, abs(est.index + 2.0) <= 0.05 * 2.0),
        ("L_p_D_trend", float(L[-1]), non_increasing(L)),
    ]


CRITERIA = {
    1: ("manufactured-solution convergence", criterion_1),
    2: ("counterexample reproduction", criterion_2),
    3: ("slowly varying scenario", criterion_3),
    4: ("regularly varying scenario", criterion_4),
    5: ("Karamata suite", criterion_5),
    6: ("improper-integral classification", criterion_6),
    7: ("reciprocal-transform consistency", criterion_7),
    8: ("change-of-variables consistency", criterion_8),
    9: ("cross-engine agreement", criterion_9),
    10: ("critical-case routing", criterion_10),
    11: ("non-RV coefficient example", criterion_11),
}


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def evaluate(number):
    title, fn = CRITERIA[number]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        checks = fn()
    failing = [f"{name}={_fmt(v)}" for name, v, ok in checks if not ok]
    ok = not failing
    detail = f"{len(checks)} checks" if ok else "failing: " + ", ".join(failing)
    return ok, f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title} ({detail})"


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    ok, line = evaluate(number)
    with capsys.disabled():
        print(f"\n{line}")
    assert ok, line


if __name__ == "__main__":
    results = [evaluate(n) for n in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
