import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hldde.core import (
    CoefficientExpr, DelayMap, HalfLinearEquation, conjugate, g_eval, h_tau_eval,
    iterated_log, phi, phi_inv, structured_g, structured_h_tau,
)
from hldde.errors import DomainError, InvalidParameterError, UnsupportedDelayError

alphas = st.floats(min_value=1.05, max_value=8.0)
reals = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
# magnitudes whose Phi stays in the normal float range for every alpha drawn
moderate = st.one_of(st.just(0.0), st.floats(min_value=1e-30, max_value=1e6),
                     st.floats(min_value=-1e6, max_value=-1e-30))


def test_phi_examples():
    assert phi(2.0, 2.0) == 2.0
    assert phi(-3.0, 3.0) == -9.0
    assert phi(0.0, 2.5) == 0.0


def test_phi_inv_examples():
    assert phi_inv(4.0, 2.0) == 4.0
    assert phi_inv(-9.0, 3.0) == pytest.approx(-3.0, rel=1e-14)
    assert phi_inv(8.0, 4.0) == pytest.approx(2.0, rel=1e-14)


def test_conjugate_examples():
    assert conjugate(2.0) == 2.0
    assert conjugate(3.0) == 1.5
    assert conjugate(1.5) == pytest.approx(3.0, rel=1e-15)


@pytest.mark.parametrize("fn", [lambda a: phi(1.0, a), lambda a: phi_inv(1.0, a), conjugate])
@pytest.mark.parametrize("alpha", [1.0, 0.5, -2.0])
def test_alpha_at_most_one_rejected(fn, alpha):
    with pytest.raises(InvalidParameterError):
        fn(alpha)


def test_phi_vectorized():
    u = np.array([-2.0, 0.0, 3.0])
    assert np.array_equal(phi(u, 3.0), np.array([-4.0, 0.0, 9.0]))


@given(moderate, alphas)
def test_phi_inverse_roundtrip(u, alpha):
    back = phi_inv(phi(u, alpha), alpha)
    assert back == pytest.approx(u, rel=1e-12, abs=0.0)


@given(reals, alphas)
def test_phi_odd(u, alpha):
    assert phi(-u, alpha) == -phi(u, alpha)


@given(st.floats(min_value=-1e3, max_value=1e3), st.floats(min_value=-1e3, max_value=1e3), alphas)
def test_phi_increasing(u, v, alpha):
    if u < v:
        assert phi(u, alpha) <= phi(v, alpha)


@given(alphas)
def test_conjugate_involution(alpha):
    beta = conjugate(alpha)
    assert conjugate(beta) == pytest.approx(alpha, rel=1e-12)
    assert 1 / alpha + 1 / beta == pytest.approx(1.0, abs=1e-12)


def test_iterated_log():
    assert iterated_log(math.e ** math.e, 2) == pytest.approx(1.0)
    assert iterated_log(10.0, 0) == 10.0


def test_coefficient_eval_and_index():
    c = CoefficientExpr(scale=2.0, power=1.5, log_powers=(2.0, -1.0))
    t = 100.0
    want = 2.0 * t ** 1.5 * math.log(t) ** 2 / math.log(math.log(t))
    assert c(t) == pytest.approx(want, rel=1e-14)
    assert c.index == 1.5
    assert c.is_regularly_varying


def test_coefficient_vector_eval_keeps_shape():
    t = np.array([[2.0, 3.0], [4.0, 5.0]])
    assert CoefficientExpr(scale=3.0)(t).shape == (2, 2)
    assert np.all(CoefficientExpr(scale=3.0)(t) == 3.0)


def test_coefficient_rejects_nonpositive_scale():
    with pytest.raises(InvalidParameterError):
        CoefficientExpr(scale=0.0)
    with pytest.raises(InvalidParameterError):
        CoefficientExpr(scale=-1.0)


def test_coefficient_domain_error():
    with pytest.raises(DomainError):
        CoefficientExpr(power=1.0)(-1.0)


def test_exp_rate_zero_folds_into_power():
    c = CoefficientExpr(power=1.0, exp_rate=(0.0, 2.0))
    assert c.exp_rate is None and c.power == 3.0


COEFFS = [
    CoefficientExpr(scale=2.0, power=-3.0, log_powers=(-2.0,)),
    CoefficientExpr(power=2.0, log_powers=(2.0, 1.0)),
    CoefficientExpr(power=0.5, exp_rate=(-0.5, -1.0)),
    CoefficientExpr(scale=3.0, power=-1.0, poly=(1.0, 0.5, 2.0)),
]


@pytest.mark.parametrize("c", COEFFS)
def test_derivative_matches_finite_difference(c):
    for t in np.geomspace(20.0, 60.0, 9):
        h = 1e-5 * t
        fd = (c(t + h) - c(t - h)) / (2 * h)
        assert c.deriv(t) == pytest.approx(fd, rel=1e-6)


@given(st.floats(min_value=-4.0, max_value=4.0), st.floats(min_value=-0.1, max_value=0.1),
       st.floats(min_value=-0.1, max_value=0.1), st.sampled_from([0.5, 2.0, 5.0]))
def test_regular_variation_ratio_trend(power, e1, e2, lam):
    # the deviation is about (e1 + e2 / lnln t) ln(lam) / ln t, so it is held
    # under that envelope (which vanishes as t grows) and under 2% at t = 1e6
    c = CoefficientExpr(power=power, log_powers=(e1, e2))
    ts = np.array([1e3, 1e4, 1e5, 1e6])
    dev = np.abs(c(lam * ts) / c(ts) / lam ** c.power - 1.0)
    L = np.log(ts)
    envelope = (abs(e1) + abs(e2) / np.log(L)) * abs(math.log(lam)) / L
    assert np.all(dev <= 1.25 * envelope + 1e-13)
    assert dev[-1] < 0.02


def test_slowly_varying_part():
    c = CoefficientExpr(scale=2.0, power=-3.0, log_powers=(-2.0,))
    L = c.slowly_varying_part()
    assert L(50.0) == pytest.approx(2.0 / math.log(50.0) ** 2, rel=1e-14)


def test_algebra():
    a = CoefficientExpr(scale=2.0, power=1.0, log_powers=(1.0,))
    b = CoefficientExpr(scale=4.0, power=-3.0, log_powers=(0.0, 2.0))
    t = 300.0
    assert (a * b)(t) == pytest.approx(a(t) * b(t), rel=1e-14)
    assert (a ** 1.5)(t) == pytest.approx(a(t) ** 1.5, rel=1e-14)
    assert (a / b)(t) == pytest.approx(a(t) / b(t), rel=1e-14)


def test_compose_with_delay():
    c = CoefficientExpr(scale=2.0, power=-1.5)
    tau = DelayMap.proportional(0.5)
    assert c.compose(tau)(40.0) == pytest.approx(c(20.0), rel=1e-14)
    e = CoefficientExpr(exp_rate=(-1.0, 2.0))
    assert e.compose(DelayMap.shift(1.0))(30.0) == pytest.approx(e(29.0) * (30.0 / 29.0) ** 2, rel=1e-12)
    # iterated logs are composed asymptotically
    c = CoefficientExpr(power=-1.0, log_powers=(2.0,))
    ts = np.array([1e2, 1e4, 1e8])
    gap = np.abs(c.compose(tau)(ts) / c(tau(ts)) - 1.0)
    assert np.all(np.diff(gap) < 0) and gap[-1] < 0.1


def test_delay_maps():
    s = DelayMap.shift(1.0)
    p = DelayMap.proportional(0.25)
    assert s(5.0) == 4.0 and s.derivative(5.0) == 1.0
    assert p(8.0) == 2.0 and p.derivative(8.0) == 0.25
    assert p.inverse(2.0) == 8.0
    assert DelayMap.proportional(1.0).is_identity and DelayMap.shift(0.0).is_identity
    with pytest.raises(InvalidParameterError):
        DelayMap.proportional(1.5)
    with pytest.raises(InvalidParameterError):
        DelayMap.shift(-1.0)


@given(st.floats(min_value=0.01, max_value=1.0), st.floats(min_value=1.0, max_value=1e6))
def test_delay_invariants(lam, t):
    tau = DelayMap.proportional(lam)
    assert tau(t) <= t
    assert tau.derivative(t) > 0
    assert t / tau(t) == pytest.approx(1 / lam)


def test_custom_delay_must_lag():
    bad = DelayMap.custom(lambda t: t + 1.0, lambda t: 1.0)
    with pytest.raises(UnsupportedDelayError):
        HalfLinearEquation(2.0, CoefficientExpr(), CoefficientExpr(), bad, 1.0)


def test_equation_validation():
    with pytest.raises(InvalidParameterError):
        HalfLinearEquation(2.0, CoefficientExpr(), CoefficientExpr(), DelayMap.shift(1.0), 0.0)
    # ln ln t needs t >= e^e
    with pytest.raises(InvalidParameterError):
        HalfLinearEquation(2.0, CoefficientExpr(), CoefficientExpr(log_powers=(0.0, 1.0)),
                           DelayMap.shift(1.0), 3.0)
    eq = HalfLinearEquation(3.0, CoefficientExpr(), CoefficientExpr(), DelayMap.shift(1.0), 2.0)
    assert eq.beta == 1.5


def test_g_eval_pure_powers():
    eq2 = HalfLinearEquation(2.0, CoefficientExpr(power=-1.0), CoefficientExpr(power=-3.0),
                             DelayMap.shift(1.0), 1.0)
    assert g_eval(eq2, 10.0) == pytest.approx(0.1, rel=1e-14)


def test_g_eval_at_e():
    eq = HalfLinearEquation(2.0, CoefficientExpr(power=2.0, log_powers=(2.0,)), CoefficientExpr(),
                            DelayMap.shift(1.0), math.e)
    assert g_eval(eq, math.e) == pytest.approx(1 / math.e, rel=1e-14)


def test_g_eval_is_one_when_p_equals_r_over_t():
    r = CoefficientExpr(scale=3.0, power=1.5, log_powers=(1.0,))
    eq = HalfLinearEquation(2.5, r, r * CoefficientExpr(power=-1.0), DelayMap.shift(1.0), 3.0)
    assert g_eval(eq, 17.0) == pytest.approx(1.0, rel=1e-14)


@given(st.floats(min_value=1.2, max_value=5.0), st.floats(min_value=-4.0, max_value=2.0),
       st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0),
       st.floats(min_value=20.0, max_value=1e8))
@settings(max_examples=60)
def test_g_eval_matches_slowly_varying_form(alpha, delta, ep, er, t):
    p = CoefficientExpr(power=delta, log_powers=(ep,))
    r = CoefficientExpr(power=delta + alpha, log_powers=(er,))
    eq = HalfLinearEquation(alpha, r, p, DelayMap.shift(1.0), 3.0)
    Lp, Lr = p.slowly_varying_part(), r.slowly_varying_part()
    g_form = (Lp(t) / Lr(t)) ** (eq.beta - 1.0) / t
    assert g_eval(eq, t) == pytest.approx(g_form, rel=1e-10)
    assert structured_g(eq)(t) == pytest.approx(g_eval(eq, t), rel=1e-10)


def test_h_tau_examples():
    eq = HalfLinearEquation(2.0, CoefficientExpr(power=-1.0), CoefficientExpr(power=-3.0),
                            DelayMap.shift(1.0), 2.0)
    assert h_tau_eval(eq, 10.0) == pytest.approx(0.09, rel=1e-14)
    p = CoefficientExpr(power=-2.0, log_powers=(1.0,))
    eq = HalfLinearEquation(2.0, CoefficientExpr(), p, DelayMap.proportional(1.0), 3.0)
    assert h_tau_eval(eq, 50.0) == pytest.approx(50.0 * p(50.0), rel=1e-14)


def test_h_tau_proportional_asymptotics():
    p = CoefficientExpr(power=-3.0, log_powers=(-2.0,))
    r = CoefficientExpr(power=-1.0)
    eq = HalfLinearEquation(2.0, r, p, DelayMap.proportional(0.5), 3.0)
    ts = np.array([1e2, 1e4, 1e6, 1e8])
    ratio = h_tau_eval(eq, ts) / (0.25 * ts * p(ts) / r(ts))
    assert ratio[-1] == pytest.approx(1.0, abs=1e-12)
    assert structured_h_tau(eq)(1e4) == pytest.approx(h_tau_eval(eq, 1e4), rel=1e-12)


def test_to_dict_roundtrip_fields():
    eq = HalfLinearEquation(2.0, CoefficientExpr(power=-1.0), CoefficientExpr(power=-3.0, log_powers=(-2.0,)),
                            DelayMap.proportional(0.5), 3.0)
    d = eq.to_dict()
    assert d["tau"] == {"kind": "proportional", "lambda": 0.5}
    assert d["p"]["log_powers"] == [-2.0]
