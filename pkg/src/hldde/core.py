"""Equation data: the Phi algebra, structured coefficients and delay maps.

The equation handled throughout the package is

    (r(t) Phi(y'(t)))' = p(t) Phi(y(tau(t))),   t >= a,

with ``Phi(u) = |u|**(alpha - 1) * sign(u)`` and ``alpha > 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InvalidParameterError, UnsupportedDelayError

__all__ = [
    "Exponents",
    "CoefficientExpr",
    "DelayMap",
    "HalfLinearEquation",
    "phi",
    "phi_inv",
    "conjugate",
    "g_eval",
    "h_tau_eval",
    "iterated_log",
    "log_domain_start",
]


def _check_alpha(alpha):
    if not alpha > 1:
        raise InvalidParameterError(f"alpha must exceed 1, got {alpha!r}")


def conjugate(alpha):
    """Conjugate exponent ``alpha / (alpha - 1)``."""
    _check_alpha(alpha)
    return alpha / (alpha - 1.0)


def phi(u, alpha):
    """``|u|**(alpha-1) * sign(u)``; works on scalars and arrays."""
    _check_alpha(alpha)
    if np.ndim(u) == 0:
        u = float(u)
        return math.copysign(abs(u) ** (alpha - 1.0), u) if u != 0.0 else 0.0
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.abs(u) ** (alpha - 1.0)


def phi_inv(v, alpha):
    """Inverse of :func:`phi`, i.e. ``|v|**(beta-1) * sign(v)``."""
    beta = conjugate(alpha)
    if np.ndim(v) == 0:
        v = float(v)
        return math.copysign(abs(v) ** (beta - 1.0), v) if v != 0.0 else 0.0
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** (beta - 1.0)


@dataclass(frozen=True)
class Exponents:
    """Half-linearity degree ``alpha`` and its conjugate ``beta``."""

    alpha: float
    beta: float = field(init=False)

    def __post_init__(self):
        _check_alpha(self.alpha)
        object.__setattr__(self, "beta", conjugate(self.alpha))


def iterated_log(t, k):
    """``ln_k t``: the natural logarithm applied ``k`` times."""
    out = t
    for _ in range(k):
        out = np.log(out) if np.ndim(out) else math.log(out)
    return out


def log_domain_start(depth):
    """Smallest ``t`` with ``ln_depth t >= 1`` (so every iterated log up to
    ``depth`` is positive): 0 for depth 0, ``e`` for depth 1, ``e**e`` ..."""
    t = 0.0
    for _ in range(depth):
        t = math.e if t == 0.0 else math.exp(t)
    return t


def _as_tuple(seq):
    return tuple(float(x) for x in seq) if seq is not None else None


@dataclass(frozen=True)
class CoefficientExpr:
    """Positive coefficient ``scale * t**power * prod_k (ln_k t)**e_k``,
    optionally multiplied by ``exp(gamma t) t**omega`` (``exp_rate``),
    a polynomial factor ``poly`` (ascending coefficients) and an opaque
    ``custom`` function carrying its own derivative ``custom_prime``.

    Without ``exp_rate``, ``poly`` and ``custom`` the expression is
    regularly varying of index ``power``.
    """

    scale: float = 1.0
    power: float = 0.0
    log_powers: tuple = ()
    exp_rate: Optional[tuple] = None
    poly: Optional[tuple] = None
    custom: Optional[Callable] = field(default=None, compare=False)
    custom_prime: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParameterError(f"scale must be positive, got {self.scale!r}")
        object.__setattr__(self, "power", float(self.power))
        object.__setattr__(self, "log_powers", _as_tuple(self.log_powers))
        if self.exp_rate is not None:
            if len(self.exp_rate) != 2:
                raise InvalidParameterError("exp_rate must be a pair (gamma, omega)")
            object.__setattr__(self, "exp_rate", _as_tuple(self.exp_rate))
            if self.exp_rate[0] == 0.0:
                # exp(0 t) t^omega is a plain power
                object.__setattr__(self, "power", self.power + self.exp_rate[1])
                object.__setattr__(self, "exp_rate", None)
        if self.poly is not None:
            poly = _as_tuple(self.poly)
            while len(poly) > 1 and poly[-1] == 0.0:
                poly = poly[:-1]
            if not poly or poly[-1] <= 0:
                raise InvalidParameterError("poly needs a positive leading coefficient")
            object.__setattr__(self, "poly", poly)
        if (self.custom is None) != (self.custom_prime is None):
            raise InvalidParameterError("custom and custom_prime must be given together")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, c):
        return cls(scale=c)

    @classmethod
    def from_function(cls, f, f_prime):
        """Opaque positive coefficient given by ``f`` and its derivative."""
        return cls(custom=f, custom_prime=f_prime)

    # -- structure ------------------------------------------------------------

    @property
    def log_depth(self):
        """Number of iterated logarithms actually used (trailing zeros ignored)."""
        depth = len(self.log_powers)
        while depth and self.log_powers[depth - 1] == 0.0:
            depth -= 1
        return depth

    @property
    def is_structured(self):
        return self.custom is None

    @property
    def is_regularly_varying(self):
        """True when the RV index is known in closed form."""
        return self.custom is None and self.exp_rate is None and self.poly is None

    @property
    def index(self):
        if not self.is_regularly_varying:
            raise DomainError("index is only known for pure power/log expressions")
        return self.power

    def domain_start(self):
        return log_domain_start(self.log_depth)

    def slowly_varying_part(self):
        """``L(t) = f(t) / t**power`` as a new expression."""
        if not self.is_regularly_varying:
            raise DomainError("slowly varying part needs a regularly varying expression")
        return replace(self, power=0.0)

    # -- evaluation -------------------------------------------------------------

    def _logs(self, t):
        logs = []
        cur = t
        for _ in range(self.log_depth):
            cur = np.log(cur) if isinstance(cur, np.ndarray) else math.log(cur)
            logs.append(cur)
        return logs

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        if scalar:
            t = float(t)
            if t <= 0:
                raise DomainError(f"coefficient evaluated at t={t} <= 0")
        else:
            t = np.asarray(t, dtype=float)
            if np.any(t <= 0):
                raise DomainError("coefficient evaluated at t <= 0")
        val = self.scale * (t ** self.power if self.power else 1.0)
        for lk, e in zip(self._logs(t), self.log_powers):
            if e == 0.0:
                continue
            if np.any(lk <= 0):
                raise DomainError("iterated logarithm is nonpositive; t below domain start")
            val = val * lk ** e
        if self.exp_rate is not None:
            g, w = self.exp_rate
            ex = (math.exp(g * t) if scalar else np.exp(g * t))
            val = val * ex * (t ** w if w else 1.0)
        if self.poly is not None:
            val = val * np.polynomial.polynomial.polyval(t, self.poly)
        if self.custom is not None:
            val = val * self.custom(t)
        return float(val) if scalar else np.broadcast_to(val, t.shape).astype(float)

    def log_value(self, t):
        """``ln f(t)`` computed without forming ``f`` (structured part only
        for custom expressions)."""
        t = np.asarray(t, dtype=float)
        out = math.log(self.scale) + self.power * np.log(t)
        cur = t
        for e in self.log_powers[: self.log_depth]:
            cur = np.log(cur)
            if e:
                out = out + e * np.log(cur)
        if self.exp_rate is not None:
            g, w = self.exp_rate
            out = out + g * t + w * np.log(t)
        if self.poly is not None:
            out = out + np.log(np.polynomial.polynomial.polyval(t, self.poly))
        if self.custom is not None:
            out = out + np.log(self.custom(t))
        return out

    def log_derivative(self, t):
        """``f'(t) / f(t)``."""
        scalar = np.ndim(t) == 0
        t = float(t) if scalar else np.asarray(t, dtype=float)
        out = self.power / t
        logs = self._logs(t)
        prod = t
        for lk, e in zip(logs, self.log_powers):
            prod = prod * lk
            if e:
                out = out + e / prod
        if self.exp_rate is not None:
            g, w = self.exp_rate
            out = out + g + w / t
        if self.poly is not None:
            P = np.polynomial.polynomial
            out = out + P.polyval(t, P.polyder(self.poly)) / P.polyval(t, self.poly)
        if self.custom is not None:
            out = out + self.custom_prime(t) / self.custom(t)
        return float(out) if scalar else out

    def deriv(self, t):
        return self(t) * self.log_derivative(t)

    # -- algebra ----------------------------------------------------------------

    def _opaque(self):
        return self.custom is not None

    def __mul__(self, other):
        if not isinstance(other, CoefficientExpr):
            return replace(self, scale=self.scale * float(other))
        if self._opaque() or other._opaque() or (self.poly and other.poly):
            f, g = self, other
            return CoefficientExpr.from_function(
                lambda t: f(t) * g(t),
                lambda t: f.deriv(t) * g(t) + f(t) * g.deriv(t),
            )
        n = max(len(self.log_powers), len(other.log_powers))
        la = self.log_powers + (0.0,) * (n - len(self.log_powers))
        lb = other.log_powers + (0.0,) * (n - len(other.log_powers))
        if self.exp_rate is None and other.exp_rate is None:
            er = None
        else:
            ga, wa = self.exp_rate or (0.0, 0.0)
            gb, wb = other.exp_rate or (0.0, 0.0)
            er = (ga + gb, wa + wb)
        return CoefficientExpr(
            scale=self.scale * other.scale,
            power=self.power + other.power,
            log_powers=tuple(x + y for x, y in zip(la, lb)),
            exp_rate=er,
            poly=self.poly or other.poly,
        )

    __rmul__ = __mul__

    def __pow__(self, c):
        c = float(c)
        if self._opaque() or (self.poly is not None and c != 1.0):
            f = self
            return CoefficientExpr.from_function(
                lambda t: f(t) ** c,
                lambda t: c * f(t) ** c * f.log_derivative(t),
            )
        er = None if self.exp_rate is None else (c * self.exp_rate[0], c * self.exp_rate[1])
        return CoefficientExpr(
            scale=self.scale ** c,
            power=c * self.power,
            log_powers=tuple(c * e for e in self.log_powers),
            exp_rate=er,
            poly=self.poly,
        )

    def __truediv__(self, other):
        if not isinstance(other, CoefficientExpr):
            return replace(self, scale=self.scale / float(other))
        return self * other ** -1.0

    def compose(self, delay):
        """Expression ``E`` with ``E(t) ~ self(delay(t))`` as ``t -> inf``.

        Power and exponential factors are composed exactly for the built-in
        delays; iterated logarithms use ``ln_k(tau(t)) ~ ln_k(t)``.  Returns
        ``None`` when no structured equivalent exists.
        """
        if self._opaque() or delay.kind == "custom":
            return None
        if delay.kind == "proportional":
            lam = delay.lam
            scale = self.scale * lam ** self.power
            er = self.exp_rate
            if er is not None:
                scale *= lam ** er[1]
                er = (er[0] * lam, er[1])
            poly = None
            if self.poly is not None:
                poly = tuple(c * lam ** k for k, c in enumerate(self.poly))
            return replace(self, scale=scale, exp_rate=er, poly=poly)
        sigma = delay.sigma
        scale = self.scale
        if self.exp_rate is not None:
            scale *= math.exp(-self.exp_rate[0] * sigma)
        poly = None
        if self.poly is not None:
            # p(t - sigma) via binomial expansion
            shifted = np.polynomial.Polynomial(self.poly)(np.polynomial.Polynomial([-sigma, 1.0]))
            poly = tuple(shifted.coef)
        return replace(self, scale=scale, poly=poly)

    def describe(self):
        if self.custom is not None:
            return "custom"
        parts = [f"{self.scale:g}"]
        if self.power:
            parts.append(f"t^{self.power:g}")
        for k, e in enumerate(self.log_powers, start=1):
            if e:
                parts.append(("ln" if k == 1 else f"ln_{k}") + f"(t)^{e:g}")
        if self.exp_rate is not None:
            parts.append(f"exp({self.exp_rate[0]:g}t)t^{self.exp_rate[1]:g}")
        if self.poly is not None:
            parts.append("poly" + str(list(self.poly)))
        return "*".join(parts)

    def to_dict(self):
        if self.custom is not None:
            raise DomainError("custom coefficients cannot be serialized")
        d = {"scale": self.scale, "power": self.power, "log_powers": list(self.log_powers)}
        if self.exp_rate is not None:
            d["exp_rate"] = list(self.exp_rate)
        if self.poly is not None:
            d["poly"] = list(self.poly)
        return d


def as_coefficient(x):
    if isinstance(x, CoefficientExpr):
        return x
    if callable(x):
        raise InvalidParameterError("pass callables through CoefficientExpr.from_function")
    return CoefficientExpr.constant(float(x))


@dataclass(frozen=True)
class DelayMap:
    """Delay ``tau`` with ``tau(t) <= t`` and ``tau' > 0``.

    Use the constructors :meth:`shift`, :meth:`proportional`, :meth:`custom`.
    """

    kind: str
    sigma: float = 0.0
    lam: float = 1.0
    tau: Optional[Callable] = field(default=None, compare=False)
    tau_prime: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "shift":
            if not self.sigma >= 0:
                raise InvalidParameterError("shift needs sigma >= 0")
        elif self.kind == "proportional":
            if not 0 < self.lam <= 1:
                raise InvalidParameterError("proportional delay needs lambda in (0, 1]")
        elif self.kind == "custom":
            if self.tau is None or self.tau_prime is None:
                raise InvalidParameterError("custom delay needs tau and tau_prime")
        else:
            raise InvalidParameterError(f"unknown delay kind {self.kind!r}")

    @classmethod
    def shift(cls, sigma):
        return cls("shift", sigma=float(sigma))

    @classmethod
    def proportional(cls, lam):
        return cls("proportional", lam=float(lam))

    @classmethod
    def custom(cls, tau, tau_prime):
        return cls("custom", tau=tau, tau_prime=tau_prime)

    @property
    def is_identity(self):
        return (self.kind == "shift" and self.sigma == 0.0) or (
            self.kind == "proportional" and self.lam == 1.0
        )

    def __call__(self, t):
        if self.kind == "shift":
            return t - self.sigma
        if self.kind == "proportional":
            return self.lam * t
        return self.tau(t)

    def derivative(self, t):
        if self.kind == "shift":
            return 1.0 if np.ndim(t) == 0 else np.ones_like(np.asarray(t, dtype=float))
        if self.kind == "proportional":
            return self.lam if np.ndim(t) == 0 else np.full_like(np.asarray(t, dtype=float), self.lam)
        return self.tau_prime(t)

    def inverse(self, s):
        """``tau^{-1}(s)``; custom delays are inverted by bracketing."""
        if self.kind == "shift":
            return s + self.sigma
        if self.kind == "proportional":
            return s / self.lam
        lo, hi = s, max(2.0 * abs(s), 1.0) + s
        while self.tau(hi) < s:
            hi = 2.0 * hi
        return brentq(lambda t: self.tau(t) - s, lo, hi, xtol=1e-14 * max(1.0, abs(s)))

    def ratio_bound(self):
        """Closed-form ``limsup t / tau(t)`` for built-ins, ``None`` for custom."""
        if self.kind == "shift":
            return 1.0
        if self.kind == "proportional":
            return 1.0 / self.lam
        return None

    def max_step(self, t):
        """Largest ``h`` with ``tau(t + h) <= t`` (infinite in ODE mode)."""
        if self.is_identity:
            return math.inf
        if self.kind == "shift":
            return self.sigma
        if self.kind == "proportional":
            return t * (1.0 - self.lam) / self.lam
        return self.inverse(t) - t

    def describe(self):
        if self.kind == "shift":
            return f"t-{self.sigma:g}"
        if self.kind == "proportional":
            return f"{self.lam:g}t"
        return "custom"

    def to_dict(self):
        if self.kind == "shift":
            return {"kind": "shift", "sigma": self.sigma}
        if self.kind == "proportional":
            return {"kind": "proportional", "lambda": self.lam}
        raise DomainError("custom delays cannot be serialized")


def _sample_grid(a, decades=6, n=61):
    return a * np.logspace(0, decades, n)


@dataclass(frozen=True)
class HalfLinearEquation:
    """``(r Phi(y'))' = p Phi(y(tau))`` on ``[a, inf)``."""

    alpha: float
    r: CoefficientExpr
    p: CoefficientExpr
    tau: DelayMap
    a: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        object.__setattr__(self, "r", as_coefficient(self.r))
        object.__setattr__(self, "p", as_coefficient(self.p))
        if not self.a > 0:
            raise InvalidParameterError("left endpoint a must be positive")
        for name in ("r", "p"):
            c = getattr(self, name)
            start = c.domain_start()
            if self.a < start:
                raise InvalidParameterError(
                    f"a={self.a} is below the domain start {start:.6g} required by the logs in {name}"
                )
        grid = _sample_grid(self.a)
        for name in ("r", "p"):
            c = getattr(self, name)
            with np.errstate(all="ignore"):
                vals = c.log_value(grid) if c.custom is None else c(grid)
            ok = np.isfinite(vals) if c.custom is None else np.isfinite(vals) & (vals > 0)
            if not np.all(ok):
                raise InvalidParameterError(f"coefficient {name} is not positive on [a, inf)")
        if self.tau.kind == "custom":
            tv = np.asarray([self.tau(t) for t in grid])
            dv = np.asarray([self.tau.derivative(t) for t in grid])
            if np.any(tv > grid) or np.any(dv <= 0):
                raise UnsupportedDelayError("custom delay violates tau(t) <= t, tau' > 0")

    @property
    def exponents(self):
        return Exponents(self.alpha)

    @property
    def beta(self):
        return conjugate(self.alpha)

    @property
    def is_ode(self):
        return self.tau.is_identity

    def delta(self):
        """RV index of ``p`` (only for regularly varying ``p``)."""
        return self.p.index

    def history_start(self):
        return float(self.tau(self.a))

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "a": self.a,
            "r": self.r.to_dict(),
            "p": self.p.to_dict(),
            "tau": self.tau.to_dict(),
        }


def g_eval(eq, t):
    """``G(t) = Phi^{-1}(t p(t) / r(t))``."""
    if np.any(np.asarray(t) < eq.a):
        raise DomainError("g_eval needs t >= a")
    rv = eq.r(t)
    if np.any(rv <= 0):
        raise DomainError("r must be positive")
    return (t * eq.p(t) / rv) ** (eq.beta - 1.0)


def h_tau_eval(eq, t):
    """``H_tau(t) = (t tau'(t))**(alpha-1) p(t) / r(tau(t))``."""
    if np.any(np.asarray(t) < eq.a):
        raise DomainError("h_tau_eval needs t >= a")
    tt = eq.tau(t)
    if np.any(np.asarray(tt) < eq.r.domain_start()) or np.any(np.asarray(tt) <= 0):
        raise DomainError("tau(t) lies below the domain of r")
    return (t * eq.tau.derivative(t)) ** (eq.alpha - 1.0) * eq.p(t) / eq.r(tt)


def structured_g(eq):
    """``G`` as a structured expression (exact), or ``None`` if r or p is custom."""
    if eq.r.custom is not None or eq.p.custom is not None:
        return None
    return (CoefficientExpr(power=1.0) * eq.p / eq.r) ** (eq.beta - 1.0)


def structured_h_tau(eq):
    """A structured ``E`` with ``E(t) ~ H_tau(t)`` (exact up to iterated-log
    composition), or ``None`` when no closed form is available."""
    r_tau = eq.r.compose(eq.tau)
    if r_tau is None or eq.p.custom is not None:
        return None
    tp = CoefficientExpr(power=1.0)
    if eq.tau.kind == "proportional":
        tp = tp * eq.tau.lam
    return tp ** (eq.alpha - 1.0) * eq.p / r_tau
