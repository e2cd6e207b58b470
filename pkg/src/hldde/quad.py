"""Quadrature, improper-integral classification and the R_D / R_C / Q
change-of-variable machinery.

Integrals over long ranges are split into geometric panels; tails
``int_t^inf f`` are computed in the variable ``z = ln s`` (or ``ln ln s``
for integrands built from iterated logarithms) and mapped onto ``[0, 1)``,
which keeps Bertrand-type integrands like ``1/(s ln^2 s)`` well resolved.
"""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .core import CoefficientExpr
from .errors import AccuracyWarning, DomainError, InconclusiveError, PreconditionError

__all__ = [
    "QuadResult",
    "ImproperVerdict",
    "ChangeOfVariable",
    "integrate",
    "tail_integral",
    "classify_improper",
    "bertrand_rule",
    "build_change_of_variable",
    "log_eval",
    "integral_equivalent",
    "LogForm",
    "with_log_tail",
]

MAX_DEPTH = 40
MAX_PANELS = 4000

# Gauss-Kronrod 7/15 nodes and weights on [-1, 1]
_XK = np.array([
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
    0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
])


class QuadResult(float):
    """A float carrying the error estimate and convergence status."""

    def __new__(cls, value, error=0.0, converged=True, evaluations=0):
        obj = super().__new__(cls, value)
        obj.error = float(error)
        obj.converged = bool(converged)
        obj.evaluations = int(evaluations)
        return obj


def _gk15(f, a, b):
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    x = c + h * _XK
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    if not np.all(np.isfinite(y)):
        raise DomainError(f"non-finite integrand sample on [{a:.6g}, {b:.6g}]")
    k = h * float(_WK @ y)
    g = h * float(_WG @ y[1::2])
    return k, abs(k - g)


def _adaptive(f, a, b, tol, abs_tol):
    val, err = _gk15(f, a, b)
    heap = [(-err, a, b, val, err, 0)]
    total, total_err = val, err
    evals = 15
    frozen_err = 0.0
    while heap:
        if total_err <= max(tol * abs(total), abs_tol):
            break
        negerr, lo, hi, v, e, depth = heapq.heappop(heap)
        if depth >= MAX_DEPTH or len(heap) >= MAX_PANELS:
            frozen_err += e
            if len(heap) >= MAX_PANELS:
                total_err = max(total_err, frozen_err)
                break
            continue
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        evals += 30
        total += v1 + v2 - v
        total_err += e1 + e2 - e
        heapq.heappush(heap, (-e1, lo, mid, v1, e1, depth + 1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2, depth + 1))
    converged = total_err <= max(tol * abs(total), abs_tol)
    return total, total_err, converged, evals


def integrate(f, a, b, tol=1e-10, abs_tol=0.0):
    """Adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over ``[a, b]``.

    ``b`` may be ``inf``, in which case :func:`tail_integral` is used.
    Long ranges with ``b / a > 10`` are split into geometric panels.  A
    :class:`~hldde.errors.AccuracyWarning` is emitted (and
    ``result.converged`` is False) when the tolerance is not met at the
    maximum subdivision depth.
    """
    if math.isinf(b):
        return tail_integral(f, a, tol)
    if not a < b:
        raise PreconditionError(f"integrate needs a < b, got [{a}, {b}]")
    if a > 0 and b / a > 10.0:
        n = int(math.ceil(math.log(b / a) / math.log(4.0)))
        edges = np.geomspace(a, b, n + 1)
        edges[0], edges[-1] = a, b
    else:
        edges = np.array([a, b])
    total = err = 0.0
    evals = 0
    ok = True
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e, c, n_ev = _adaptive(f, lo, hi, tol, abs_tol / len(edges))
        total += v
        err += e
        evals += n_ev
        ok = ok and c
    if not ok:
        warnings.warn(
            f"quadrature on [{a:.6g}, {b:.6g}] did not reach tol={tol:g} (est. error {err:.3g})",
            AccuracyWarning,
            stacklevel=2,
        )
    return QuadResult(total, err, ok, evals)


# -- log-space evaluation ----------------------------------------------------------


class LogForm:
    """Positive function with a log-space evaluator.

    ``log_at(z, level, jacobian)`` returns ``ln f(s)`` (times ``ds/dz`` when
    ``jacobian``) for ``z = ln_level s``; tail integrals use it where ``s``
    (or ``f(s)``) is not representable, so slowly decaying integrands keep
    their mass beyond ``1e308``.
    """

    def __init__(self, fn, log_at, level=1):
        self.fn = fn
        self.log_at = log_at
        self.level = level

    def __call__(self, t):
        return self.fn(t)


def with_log_tail(fn, equivalent):
    """:class:`LogForm` evaluating ``fn`` exactly wherever its value is
    representable and the structured ``equivalent`` (``~ fn``) beyond."""
    if equivalent is None:
        return fn
    level = _levels_for(equivalent)

    def log_at(z, lev, jacobian=False):
        # the equivalent folds the Jacobian into its exponents, which avoids
        # cancelling ln s against -ln s once s overflows
        z = np.asarray(z, dtype=float)
        out = np.asarray(log_eval(equivalent, z, lev, jacobian), dtype=float).copy()
        chain = z
        for _ in range(lev):
            with np.errstate(over="ignore"):
                chain = np.exp(chain)
        s = np.atleast_1d(chain)
        ok = np.isfinite(s)
        if np.any(ok):
            with np.errstate(all="ignore"):
                v = np.asarray(fn(s[ok]), dtype=float)
                lv = np.log(v)
                if jacobian:
                    lv = lv + _log_jacobian(np.atleast_1d(z)[ok], lev)
            good = np.isfinite(lv)
            flat = np.atleast_1d(out)
            idx = np.flatnonzero(ok)[good]
            flat[idx] = lv[good]
            out = flat.reshape(np.shape(out))
        return out

    return LogForm(fn, log_at, level)


def _levels_for(f):
    """Substitution level ``z = ln_level s`` at which the tail of ``f``
    decays exponentially in ``z``: 1 unless the power is -1, then one more
    level per leading log exponent equal to -1."""
    if isinstance(f, CoefficientExpr) and f.custom is None:
        if f.exp_rate is not None or f.poly is not None or abs(f.power + 1.0) > 1e-12:
            return 1
        level = 2
        for e in f.log_powers[: f.log_depth]:
            if abs(e + 1.0) > 1e-12:
                break
            level += 1
        return level
    if isinstance(f, LogForm):
        return f.level
    return 1


def log_eval(f, z, level, jacobian=False):
    """``ln f(s)`` where ``z = ln_level(s)`` (vectorized over ``z``).

    With ``jacobian=True`` returns ``ln(f(s) ds/dz)``.  Pure power/log parts
    of a :class:`CoefficientExpr` are evaluated without ever forming ``s``
    and the Jacobian is folded into the exponents, so arguments far beyond
    the float range are fine and no cancellation occurs.
    """
    z = np.asarray(z, dtype=float)
    if isinstance(f, LogForm):
        vals = np.asarray(f.log_at(z, level, jacobian), dtype=float)
        return np.where(np.isnan(vals), -np.inf, vals)
    chain = {level: z}  # chain[k] = ln_k s
    for k in range(level - 1, 0, -1):
        with np.errstate(over="ignore"):
            chain[k] = np.exp(chain[k + 1])
    if isinstance(f, CoefficientExpr) and f.custom is None:
        # ds/dz = s * ln s * ... * ln_{level-1} s
        power = f.power + (1.0 if jacobian and level >= 1 else 0.0)
        depth = max(f.log_depth, level - 1 if jacobian else 0)
        logs = list(f.log_powers[:f.log_depth]) + [0.0] * (depth - f.log_depth)
        if jacobian:
            for k in range(1, level):
                logs[k - 1] += 1.0
        for k in range(level + 1, depth + 2):
            with np.errstate(invalid="ignore", divide="ignore"):
                chain[k] = np.log(chain[k - 1])
        ls = chain[1] if level >= 1 else np.log(z)
        out = math.log(f.scale) + (power * ls if power else 0.0)
        for k, e in enumerate(logs, start=1):
            if e:
                # ln(ln_k s) = ln_{k+1} s
                out = out + e * chain[k + 1]
        if f.exp_rate is not None:
            g, w = f.exp_rate
            with np.errstate(over="ignore", invalid="ignore"):
                if g:
                    out = out + g * np.exp(ls)
                if w:
                    out = out + w * ls
        if f.poly is not None:
            d = len(f.poly) - 1
            with np.errstate(over="ignore", invalid="ignore"):
                s = np.exp(ls)
                direct = np.log(np.polynomial.polynomial.polyval(s, f.poly))
            asym = math.log(f.poly[-1]) + d * ls
            out = out + np.where(np.isfinite(direct), direct, asym)
        out = out + np.zeros_like(z)
        return np.where(np.isnan(out), -np.inf, out)
    with np.errstate(over="ignore"):
        s = np.exp(chain[1]) if level >= 1 else z
    finite = np.isfinite(s)
    vals = np.full(np.shape(s), -np.inf)
    if np.any(finite):
        fv = np.asarray(f(s[finite]), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals[finite] = np.log(fv)
    if jacobian:
        vals = vals + _log_jacobian(z, level)
    return vals


def _log_jacobian(z, level):
    """``ln(ds/dz)`` for ``z = ln_level s``: ``sum_{k=1..level} ln_k s``."""
    chain = [np.asarray(z, dtype=float)]
    for _ in range(level - 1):
        with np.errstate(over="ignore"):
            chain.append(np.exp(chain[-1]))
    out = 0.0
    for c in chain:
        out = out + c
    return out


_T_FAR = 1e300  # largest argument the tabulated inverse will search to


def _to_level(t, level):
    z = t
    for _ in range(level):
        z = math.log(z)
    return z


def tail_integral(f, t, tol=1e-10, level=None):
    """``int_t^inf f(s) ds`` by substitution ``z = ln_level s`` followed by
    ``z = z0 + v / (1 - v)``; the integrand is assembled in log space."""
    if level is None:
        level = _levels_for(f)
    if t <= 0:
        raise PreconditionError("tail_integral needs t > 0")
    # ln_{level-1} t must exceed 1 so that z0 is positive
    while level > 1 and not _to_level(t, level - 2) > math.e:
        level -= 1
    z0 = _to_level(t, level)

    def g(v):
        v = np.asarray(v, dtype=float)
        x = v / (1.0 - v)
        z = z0 + x
        lg = log_eval(f, z, level, jacobian=True)
        with np.errstate(under="ignore", over="ignore"):
            out = np.exp(lg) / (1.0 - v) ** 2
        return np.where(np.isnan(out), 0.0, out)

    val, err, ok, evals = _adaptive(g, 0.0, 1.0, tol, 0.0)
    if not np.isfinite(val):
        raise PreconditionError("tail integral diverges")
    if not ok:
        warnings.warn(
            f"tail integral from t={t:.6g} did not reach tol={tol:g} (est. error {err:.3g})",
            AccuracyWarning,
            stacklevel=2,
        )
    return QuadResult(val, err, ok, evals)


# -- improper integral classification ------------------------------------------------


@dataclass(frozen=True)
class ImproperVerdict:
    status: str  # "Convergent" | "Divergent"
    value: float  # tail value int_a^inf f when convergent, inf otherwise
    method: str  # "ExactIndexRule" | "NumericalHeuristic"
    detail: str = ""

    @property
    def convergent(self):
        return self.status == "Convergent"


def bertrand_rule(power, log_powers, eps=1e-12):
    """Convergence of ``int^inf t**power prod (ln_k t)**e_k dt``.

    Returns True when convergent.  ``power = -1`` falls through to the
    leading log exponent, iterated; an integrand ``1/(t ln t ... ln_k t)``
    diverges.
    """
    if power < -1 - eps:
        return True
    if power > -1 + eps:
        return False
    for e in log_powers:
        if e < -1 - eps:
            return True
        if e > -1 + eps:
            return False
    return False


def _window_sums(f, level, z_start, z_stop, base=2.0):
    c = max(z_start, 0.25)
    edges = [c]
    while edges[-1] * base <= z_stop:
        edges.append(edges[-1] * base)
    sums = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        def g(z):
            lg = log_eval(f, z, level, jacobian=True)
            with np.errstate(under="ignore", over="ignore"):
                return np.exp(lg)
        try:
            v, _, _, _ = _adaptive(g, lo, hi, 1e-8, 0.0)
        except DomainError:
            break
        if not np.isfinite(v) or v <= 0:
            if v == math.inf:
                sums.append(math.inf)
            break
        sums.append(v)
    return sums


def _heuristic(f, a, band=0.05, tail=6, drift=0.95):
    """Dyadic-window test applied to ``f`` in the variables ``s``, ``ln s``,
    ``ln ln s`` and ``ln ln ln s`` in turn; a level whose window ratios sit inside the
    ``1 +- band`` band, or whose distance to 1 keeps shrinking, defers to
    the next level."""
    structured = isinstance(f, CoefficientExpr) and f.custom is None
    notes = []
    for level in (0, 1, 2, 3):
        if level == 0:
            z_start = a
            z_stop = a * 2.0 ** 300 if structured else a * 1e100
            sums = _window_sums_level0(f, a, z_stop)
        else:
            floor = (0.0, 1.0, math.e)[level - 1]
            z_start = _to_level(a, level) if a > floor else 0.0
            if structured:
                z_stop = (2.0 ** 40, 2.0 ** 12, 2.0 ** 10)[level - 1]
            else:
                z_stop = _to_level(1e100, level)
            sums = _window_sums(f, level, z_start, z_stop)
        if len(sums) and sums[-1] == math.inf:
            return "Divergent", f"level {level}: integrand overflows"
        if len(sums) < 3:
            notes.append(f"level {level}: only {len(sums)} windows")
            continue
        ratios = np.array(sums[1:]) / np.array(sums[:-1])
        last = ratios[-min(tail, len(ratios)):]
        notes.append(f"level {level}: ratios {np.array2string(last, precision=4)}")
        gap = last - 1.0
        # a gap to 1 that keeps shrinking signals a logarithmic factor,
        # which the next level resolves
        drifting = abs(gap[-1]) < drift * abs(gap[0])
        if np.all(gap < -band) and not drifting:
            return "Convergent", "; ".join(notes)
        if np.all(gap > band) and not drifting:
            return "Divergent", "; ".join(notes)
        if np.any(gap < -band) and np.any(gap > band):
            raise InconclusiveError("window ratios straddle the band: " + "; ".join(notes))
    raise InconclusiveError("no level reached a decision: " + "; ".join(notes))


def _window_sums_level0(f, a, stop):
    lo = a if a > 0 else 1.0
    sums = []
    fv = f if callable(f) else None
    while lo * 2.0 <= stop:
        hi = lo * 2.0
        try:
            with np.errstate(over="ignore", under="ignore"):
                v, _, _, _ = _adaptive(fv, lo, hi, 1e-8, 0.0)
        except (DomainError, OverflowError):
            sums.append(math.inf)
            break
        if not np.isfinite(v):
            sums.append(math.inf)
            break
        if v <= 0:
            break
        sums.append(v)
        lo = hi
    return sums


def classify_improper(f, a, method="auto", tol=1e-10):
    """Decide convergence of ``int_a^inf f``.

    Pure power/log :class:`CoefficientExpr` integrands are decided exactly
    by :func:`bertrand_rule`; everything else (or ``method="heuristic"``)
    goes through the dyadic-window heuristic, which raises
    :class:`~hldde.errors.InconclusiveError` instead of guessing.
    """
    exact = isinstance(f, CoefficientExpr) and f.is_regularly_varying
    if method == "exact" and not exact:
        raise PreconditionError("exact index rule needs a pure power/log expression")
    if exact and method in ("auto", "exact"):
        conv = bertrand_rule(f.power, f.log_powers)
        if conv:
            return ImproperVerdict("Convergent", float(tail_integral(f, a, tol)), "ExactIndexRule")
        return ImproperVerdict("Divergent", math.inf, "ExactIndexRule")
    status, detail = _heuristic(f, a)
    if status == "Convergent":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyWarning)
            value = float(tail_integral(f, a, tol))
        return ImproperVerdict(status, value, "NumericalHeuristic", detail)
    return ImproperVerdict(status, math.inf, "NumericalHeuristic", detail)


# -- change of variables ------------------------------------------------------------


@dataclass(frozen=True)
class ChangeOfVariable:
    """``s = forward(t)`` with ``forward = R_D`` (divergent mode) or
    ``forward = Q = 1/R_C`` (convergent mode); ``density = r**(1-beta)``.

    ``R`` is ``R_D`` or ``R_C`` respectively; ``inverse_log(s)`` returns
    ``ln forward^{-1}(s)`` and stays finite where the inverse itself would
    overflow (e.g. ``R_D = ln t``); :meth:`log_inverse_point` goes one step
    further and takes ``ln s``.
    """

    mode: str  # "Divergent" | "Convergent"
    a: float
    density: CoefficientExpr
    forward: Callable = field(compare=False)
    inverse: Callable = field(compare=False)
    inverse_log: Callable = field(compare=False)
    R: Callable = field(compare=False)
    forward_prime: Callable = field(compare=False)
    closed_form: bool = False
    inverse_log_of_log: Optional[Callable] = field(default=None, compare=False)

    def log_inverse_point(self, ls):
        """``(z, level)`` with ``z = ln_level(forward^{-1}(s))`` for ``ln s = ls``.

        Closed forms stay exact for ``ls`` far beyond the float range of ``s``
        (e.g. ``ls = 1e4``); tabulated maps need ``s`` representable.
        """
        z, level = self.inverse_log_of_log(np.asarray(ls, dtype=float))
        return np.asarray(z, dtype=float), level

    @property
    def divergent(self):
        return self.mode == "Divergent"


def _vectorize(fn):
    def wrapped(x):
        if np.ndim(x) == 0:
            return fn(float(x))
        x = np.asarray(x, dtype=float)
        return np.array([fn(float(v)) for v in x.ravel()]).reshape(x.shape)
    return wrapped


def _closed_form(density, a, divergent):
    """Closed-form antiderivatives for ``c t**th`` and ``c exp(g t)``."""
    if not isinstance(density, CoefficientExpr) or density.custom is not None or density.poly:
        return None
    c = density.scale
    if density.log_depth == 0 and density.exp_rate is None:
        th = density.power
        if abs(th + 1) < 1e-14:
            if not divergent:
                return None
            la = math.log(a)
            R = lambda t: c * (np.log(t) - la)
            inv_log = lambda s: la + np.asarray(s, dtype=float) / c if np.ndim(s) else la + s / c
            # ln ln t = ln(ln a + s / c) with ln s = ls
            loglog = lambda ls: (ls - math.log(c) + np.log1p(c * la * np.exp(-ls)), 2)
            return R, inv_log, loglog
        k = th + 1
        if divergent and k > 0:
            ak = a ** k
            R = lambda t: c * (np.asarray(t, dtype=float) ** k - ak) / k if np.ndim(t) else c * (t ** k - ak) / k
            inv_log = lambda s: np.log(k * np.asarray(s, dtype=float) / c + ak) / k
            loglog = lambda ls: ((math.log(k / c) + ls + np.log1p(ak * c / k * np.exp(-ls))) / k, 1)
            return R, inv_log, loglog
        if not divergent and k < 0:
            R = lambda t: c * np.asarray(t, dtype=float) ** k / (-k) if np.ndim(t) else c * t ** k / (-k)
            # Q(t) = -k / (c t^k)  =>  ln t = ln(-k / (c s)) / k
            inv_log = lambda s: np.log(-k / (c * np.asarray(s, dtype=float))) / k
            loglog = lambda ls: ((math.log(-k / c) - ls) / k, 1)
            return R, inv_log, loglog
        return None
    if density.log_depth == 0 and density.power == 0 and density.exp_rate is not None \
            and density.exp_rate[1] == 0:
        g = density.exp_rate[0]
        if divergent and g > 0:
            ega = math.exp(g * a)
            R = lambda t: c * (np.exp(g * np.asarray(t, dtype=float)) - ega) / g
            inv_log = lambda s: np.log(np.log(g * np.asarray(s, dtype=float) / c + ega) / g)
            loglog = lambda ls: (np.log(np.logaddexp(ls + math.log(g / c), g * a)) - math.log(g), 1)
            return R, inv_log, loglog
        if not divergent and g < 0:
            R = lambda t: c * np.exp(g * np.asarray(t, dtype=float)) / (-g)
            inv_log = lambda s: np.log(np.log(-g / (c * np.asarray(s, dtype=float))) / g)
            loglog = lambda ls: (np.log(ls - math.log(-g / c)) - math.log(-g), 1)
            return R, inv_log, loglog
    return None


class _Table:
    """Cumulative quadrature of ``density`` on geometric nodes."""

    def __init__(self, density, a, t_max, divergent, tol):
        start = a if a > 0 else 1e-6
        n = max(8, int(math.ceil(math.log(t_max / start) / math.log(1.25))))
        nodes = np.geomspace(start, t_max, n + 1)
        if a <= 0:
            nodes = np.concatenate([[a], nodes])
        self.nodes = nodes
        self.density = density
        self.tol = tol
        panels = np.array([
            float(integrate(density, lo, hi, tol)) for lo, hi in zip(nodes[:-1], nodes[1:])
        ])
        if divergent:
            self.cum = np.concatenate([[0.0], np.cumsum(panels)])
        else:
            tail = float(tail_integral(density, t_max, tol))
            self.cum = tail + np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])
        self.divergent = divergent

    def value(self, t):
        nodes = self.nodes
        if t < nodes[0]:
            raise DomainError(f"t={t} below the table start {nodes[0]}")
        if t >= nodes[-1]:
            if self.divergent:
                return self.cum[-1] + (float(integrate(self.density, nodes[-1], t, self.tol)) if t > nodes[-1] else 0.0)
            return float(tail_integral(self.density, t, self.tol))
        i = int(np.searchsorted(nodes, t, side="right")) - 1
        if t == nodes[i]:
            return self.cum[i]
        part = float(integrate(self.density, nodes[i], t, self.tol))
        return self.cum[i] + part if self.divergent else self.cum[i] - part

    def invert(self, target):
        """``t`` with value(t) = target (value increasing if divergent, else decreasing)."""
        cum, nodes = self.cum, self.nodes
        sign = 1.0 if self.divergent else -1.0
        keyed = sign * cum
        key = sign * target
        i = int(np.searchsorted(keyed, key, side="right")) - 1
        if i < 0:
            raise DomainError("target below the range of the change of variable")
        if i >= len(nodes) - 1:
            if sign * (self.value(_T_FAR) - target) < 0:
                raise DomainError("target beyond the range of the change of variable")
            lo = nodes[-1]
            hi = 10.0 * lo
            while sign * (self.value(hi) - target) < 0:
                lo, hi = hi, 10.0 * hi
        else:
            lo, hi = nodes[i], nodes[i + 1]
            if keyed[i] == key:
                return float(lo)
        return brentq(lambda t: self.value(t) - target, lo, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=200)


def build_change_of_variable(r, beta, a, t_max=1e12, tol=1e-12):
    """Build ``R_D`` (if ``int_a^inf r**(1-beta)`` diverges) or ``Q = 1/R_C``.

    Pure power and pure exponential densities use closed-form
    antiderivatives; others use a cumulative table on geometric nodes with
    a bracketed monotone root-find for the inverse.
    """
    density = r ** (1.0 - beta)
    verdict = classify_improper(density, a if a > 0 else 1.0)
    divergent = not verdict.convergent
    mode = "Divergent" if divergent else "Convergent"
    cf = _closed_form(density, a, divergent)
    if cf is not None:
        Rfun, inv_log, loglog = cf
        closed = True
        if divergent:
            forward = Rfun
            inverse = lambda s: np.exp(inv_log(s))
        else:
            forward = lambda t: 1.0 / Rfun(t)
            inverse = lambda s: np.exp(inv_log(s))
        R = Rfun
    else:
        closed = False
        if not divergent and not (a > 0):
            raise PreconditionError("convergent mode needs a > 0")
        table = _Table(density, a, t_max, divergent, tol)
        R = _vectorize(table.value)
        if divergent:
            forward = R
            inverse = _vectorize(table.invert)
        else:
            forward = _vectorize(lambda t: 1.0 / table.value(t))
            inverse = _vectorize(lambda s: table.invert(1.0 / s))
        inv_log = lambda s: np.log(inverse(s))
        loglog = lambda ls: (np.log(inverse(np.exp(ls))), 1)
    if divergent:
        fprime = lambda t: density(t)
    else:
        fprime = lambda t: density(t) / R(t) ** 2
    return ChangeOfVariable(
        mode=mode, a=a, density=density, forward=forward, inverse=inverse,
        inverse_log=inv_log, R=R, forward_prime=fprime, closed_form=closed,
        inverse_log_of_log=loglog,
    )


# -- structured asymptotic equivalents ----------------------------------------------


def _log_integral(power, logs):
    """Equivalent of ``int t**power prod (ln_k t)**e_k`` (from a fixed point
    when divergent, over the tail when convergent) as ``(c, power, logs)``.

    ``power != -1`` is Karamata's theorem; ``power = -1`` substitutes
    ``x = ln t`` and recurses on the leading log exponent.
    """
    if abs(power + 1.0) > 1e-12:
        return 1.0 / abs(power + 1.0), power + 1.0, tuple(logs)
    if not logs:
        return 1.0, 0.0, (1.0,)
    c, p, rest = _log_integral(logs[0], logs[1:])
    return c, 0.0, (p,) + tuple(rest)


def integral_equivalent(f):
    """Structured ``E`` with ``E(t) ~ int_a^t f`` if that integral diverges,
    and ``E(t) ~ int_t^inf f`` if it converges.

    Supports pure power/log expressions, a leading polynomial factor and
    exponential factors ``exp(gamma t) t**omega`` with ``gamma != 0`` (whose
    integrals behave like ``f / |gamma|``).
    """
    if not isinstance(f, CoefficientExpr) or f.custom is not None:
        raise PreconditionError("integral_equivalent needs a structured expression")
    if f.poly is not None:
        deg = len(f.poly) - 1
        f = CoefficientExpr(scale=f.scale * f.poly[-1], power=f.power + deg,
                            log_powers=f.log_powers, exp_rate=f.exp_rate)
    if f.exp_rate is not None:
        return f / abs(f.exp_rate[0])
    c, p, logs = _log_integral(f.power, f.log_powers[: f.log_depth])
    return CoefficientExpr(scale=f.scale * c, power=p, log_powers=logs)
