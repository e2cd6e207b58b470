"""Regular variation from samples: index estimation, log-derivative
traces, the Karamata integration theorem as an oracle and de Haan
Pi-class checks.

All index estimates work on ``ln f`` against ``ln t``; callers that can
only provide ``ln f`` (for functions that under- or overflow) pass
``log_values`` instead of ``values``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CoefficientExpr
from .errors import DomainError, PreconditionError
from .quad import classify_improper, integrate, tail_integral

__all__ = [
    "IndexEstimate",
    "PiClassReport",
    "KaramataTrace",
    "default_grid",
    "estimate_rv_index",
    "nrv_index_from_logderivative",
    "karamata_check",
    "karamata_suite",
    "KARAMATA_CASES",
    "pi_class_check",
    "representation_trace",
    "window_slopes",
    "extrapolate_limit",
]

SV_THRESHOLD = 0.05
STABILITY = 0.02


def default_grid(lo=1e2, hi=1e6, per_decade=60):
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class IndexEstimate:
    """Result of an index estimate.

    ``index`` is the least-squares slope over the trailing window,
    ``limit`` the extrapolation of per-window slopes to ``t = inf`` in the
    variable ``1/ln t`` (which removes slowly varying corrections),
    ``slopes`` the per-window slopes behind the stability and drift rules.
    """

    index: float
    stderr: float
    window: tuple
    verdict: str  # "RV" | "SV" | "NotRV"
    limit: float = math.nan
    drift: float = 0.0
    stable: bool = True
    boundary: bool = False
    slopes: np.ndarray = field(default=None, repr=False, compare=False)
    centers: np.ndarray = field(default=None, repr=False, compare=False)
    trace: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def label(self):
        if self.verdict == "RV":
            return f"RV({self.index:.6g})"
        return self.verdict


def _log_samples(t, values, log_values):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise PreconditionError("grid must be positive and increasing")
    if log_values is not None:
        lf = np.asarray(log_values, dtype=float)
        if not np.all(np.isfinite(lf)):
            raise DomainError("non-finite log sample")
        return t, lf
    if callable(values):
        values = values(t)
    f = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise DomainError("index estimation needs positive finite samples")
    return t, np.log(f)


def _ls(x, y):
    """Slope, its standard error and intercept of a least-squares line."""
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    if n > 2:
        resid = y - ym - slope * (x - xm)
        se = math.sqrt(float(np.sum(resid ** 2)) / (n - 2) / sxx)
    else:
        se = 0.0
    return slope, se, ym - slope * xm


def window_slopes(lt, y, factor=2.0, min_points=4):
    """Least-squares slopes of ``y`` against ``lt = ln t`` over consecutive
    windows of width ``ln factor`` (widened until each holds ``min_points``).

    Returns ``(centers, slopes)`` with centers as ``ln t`` values.
    """
    width = math.log(factor)
    span = lt[-1] - lt[0]
    while True:
        nwin = max(1, int(math.floor(span / width + 1e-9)))
        edges = lt[-1] - width * np.arange(nwin, -1, -1)
        idx = np.searchsorted(lt, edges, side="left")
        idx[-1] = len(lt)
        counts = np.diff(idx)
        if np.all(counts >= min_points) or nwin == 1:
            break
        width *= 1.5
    centers, slopes = [], []
    for i0, i1 in zip(idx[:-1], idx[1:]):
        if i1 - i0 < 2:
            continue
        s, _, _ = _ls(lt[i0:i1], y[i0:i1])
        centers.append(lt[i0:i1].mean())
        slopes.append(s)
    return np.array(centers), np.array(slopes)


def extrapolate_limit(x, v, order=2):
    """Least-squares polynomial fit of ``v`` in ``x`` (e.g. ``x = 1/ln t``);
    returns the intercept (the value at ``x = 0``) and a spread estimate
    from refitting with one order less."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    order = min(order, len(x) - 2)
    if order < 0:
        return float(v[-1]), math.inf
    c = np.polynomial.polynomial.polyfit(x, v, order)
    if order >= 1:
        c_low = np.polynomial.polynomial.polyfit(x, v, order - 1)
        spread = abs(c[0] - c_low[0])
    else:
        spread = float(np.std(v))
    return float(c[0]), float(spread)


def _is_monotone(a, slack=0.0):
    d = np.diff(a)
    return bool(np.all(d >= -slack) or np.all(d <= slack))


def _classify(index, stderr, slopes, sv_threshold, stability, trail_slopes):
    drift = float(slopes[-1] - slopes[0]) if len(slopes) > 1 else 0.0
    if len(slopes) > 1:
        noise = max(1e-12, 3 * stderr)
        if _is_monotone(slopes, noise) and abs(drift) > max(1.0, 10.0 * stderr):
            return "NotRV", drift, False
    changes = np.abs(np.diff(trail_slopes)) if len(trail_slopes) > 1 else np.zeros(1)
    stable = bool(np.max(changes) < stability)
    if abs(index) <= sv_threshold and stable:
        return "SV", drift, stable
    return "RV", drift, stable


def estimate_rv_index(t, values=None, log_values=None, sv_threshold=SV_THRESHOLD,
                      stability=STABILITY, window_decades=1.0, limit_decades=2.0):
    """Estimate the regular-variation index of samples on a geometric grid.

    ``values`` may be an array or a callable evaluated on ``t``; pass
    ``log_values`` instead when ``f`` itself is not representable.
    """
    t, lf = _log_samples(t, values, log_values)
    if len(t) < 8:
        raise PreconditionError("index estimation needs at least 8 samples")
    if t[-1] / t[0] < 10 ** 3 * (1 - 1e-9):
        raise PreconditionError("index estimation needs a grid spanning at least 3 decades")
    lt = np.log(t)
    lo = lt[-1] - window_decades * math.log(10.0)
    sel = lt >= lo - 1e-12
    index, stderr, _ = _ls(lt[sel], lf[sel])
    centers, slopes = window_slopes(lt, lf)
    trail = slopes[centers >= lo]
    if len(trail) < 2:
        trail = slopes[-2:]
    verdict, drift, stable = _classify(index, stderr, slopes, sv_threshold, stability, trail)
    lsel = centers >= lt[-1] - limit_decades * math.log(10.0)
    if np.count_nonzero(lsel) >= 4 and np.all(centers[lsel] > 0):
        limit, _ = extrapolate_limit(1.0 / centers[lsel], slopes[lsel])
    else:
        limit = index
    boundary = verdict != "NotRV" and sv_threshold / 2 < abs(index) <= 2 * sv_threshold
    return IndexEstimate(
        index=index, stderr=stderr, window=(float(t[sel][0]), float(t[-1])), verdict=verdict,
        limit=limit, drift=drift, stable=stable, boundary=boundary,
        slopes=slopes, centers=np.exp(centers),
    )


def representation_trace(f, f_prime, grid):
    """``omega(t) = t f'(t) / f(t)`` sampled on ``grid``."""
    t = np.asarray(grid, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        fv = np.asarray(f(t), dtype=float)
        if np.any(~np.isfinite(fv)) or np.any(fv <= 0):
            raise DomainError("representation trace needs f > 0 on the grid")
        return t * np.asarray(f_prime(t), dtype=float) / fv


def nrv_index_from_logderivative(f, f_prime, grid, sv_threshold=SV_THRESHOLD,
                                 stability=STABILITY, window_decades=1.0):
    """Index from the log-derivative ``t f'/f``: trailing-window average,
    drift across dyadic windows, same verdict rules as
    :func:`estimate_rv_index`."""
    t = np.asarray(grid, dtype=float)
    omega = representation_trace(f, f_prime, t)
    lt = np.log(t)
    lo = lt[-1] - window_decades * math.log(10.0)
    sel = lt >= lo - 1e-12
    vals = omega[sel]
    index = float(vals.mean())
    stderr = float(vals.std() / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    # window averages of omega play the role of per-window slopes
    width = math.log(2.0)
    nwin = max(1, int(math.floor((lt[-1] - lt[0]) / width + 1e-9)))
    edges = lt[-1] - width * np.arange(nwin, -1, -1)
    idx = np.searchsorted(lt, edges, side="left")
    idx[-1] = len(lt)
    centers, means = [], []
    for i0, i1 in zip(idx[:-1], idx[1:]):
        if i1 > i0:
            centers.append(lt[i0:i1].mean())
            means.append(omega[i0:i1].mean())
    centers, means = np.array(centers), np.array(means)
    trail = means[centers >= lo] if np.count_nonzero(centers >= lo) > 1 else means[-2:]
    verdict, drift, stable = _classify(index, stderr, means, sv_threshold, stability, trail)
    if len(centers) >= 4 and np.all(centers > 0):
        limit, _ = extrapolate_limit(1.0 / centers[-6:], means[-6:])
    else:
        limit = index
    boundary = verdict != "NotRV" and sv_threshold / 2 < abs(index) <= 2 * sv_threshold
    return IndexEstimate(
        index=index, stderr=stderr, window=(float(t[sel][0]), float(t[-1])), verdict=verdict,
        limit=limit, drift=drift, stable=stable, boundary=boundary,
        slopes=means, centers=np.exp(centers), trace=omega,
    )


@dataclass(frozen=True)
class KaramataTrace:
    ts: np.ndarray
    ratio: np.ndarray
    limit: float  # 1 for modes (i)/(ii), 0 for mode (iii)
    mode: str

    @property
    def final(self):
        return float(self.ratio[-1])

    @property
    def final_deviation(self):
        return abs(self.final - self.limit)

    def monotone_last_decade(self):
        sel = self.ts >= self.ts[-1] / 10.0 * (1 - 1e-12)
        return _is_monotone(self.ratio[sel], 1e-12)


def karamata_check(L, theta, mode, grid=None, a=None, tol=1e-11):
    """Ratio of the numerical integral of ``s**theta L(s)`` to the Karamata
    asymptote along ``grid``.

    * mode ``"i"`` (``theta < -1``): ``int_t^inf / (t^{theta+1} L / (-theta-1))``
    * mode ``"ii"`` (``theta > -1``): ``int_a^t / (t^{theta+1} L / (theta+1))``
    * mode ``"iii"`` (``theta = -1``): ``L / L~`` with ``L~ = int_a^t L(s)/s``
      when that diverges and ``int_t^inf L(s)/s`` otherwise; tends to 0.
    """
    mode = str(mode).lower()
    if isinstance(L, CoefficientExpr) and L.power != 0.0:
        raise PreconditionError("L must have power 0")
    if mode == "i" and not theta < -1:
        raise PreconditionError("mode (i) needs theta < -1")
    if mode == "ii" and not theta > -1:
        raise PreconditionError("mode (ii) needs theta > -1")
    if mode == "iii" and theta != -1:
        raise PreconditionError("mode (iii) needs theta = -1")
    if mode not in ("i", "ii", "iii"):
        raise PreconditionError(f"unknown mode {mode!r}")
    ts = default_grid(1e3, 1e6, 10) if grid is None else np.asarray(grid, dtype=float)
    if a is None:
        a = max(1.0, L.domain_start()) if isinstance(L, CoefficientExpr) else 1.0
    integrand = CoefficientExpr(power=theta) * L
    Lv = np.asarray(L(ts), dtype=float)
    if mode == "i":
        num = np.array([float(tail_integral(integrand, t, tol)) for t in ts])
        ratio = num / (ts ** (theta + 1) * Lv / (-theta - 1))
        limit = 1.0
    else:
        divergent = True
        if mode == "iii":
            divergent = not classify_improper(integrand, a).convergent
        if divergent:
            edges = np.concatenate([[a], ts])
            pieces = [float(integrate(integrand, lo, hi, tol)) if hi > lo else 0.0
                      for lo, hi in zip(edges[:-1], edges[1:])]
            num = np.cumsum(pieces)
        else:
            num = np.array([float(tail_integral(integrand, t, tol)) for t in ts])
        if mode == "ii":
            ratio = num / (ts ** (theta + 1) * Lv / (theta + 1))
            limit = 1.0
        else:
            ratio = Lv / num
            limit = 0.0
    return KaramataTrace(ts=ts, ratio=ratio, limit=limit, mode=mode)


@dataclass(frozen=True)
class PiClassReport:
    holds: bool
    auxiliary_samples: np.ndarray
    lambda_grid: tuple
    max_deviation: float  # at the last grid point
    deviations: np.ndarray = field(repr=False, default=None)
    ts: np.ndarray = field(repr=False, default=None)
    decreasing: bool = False


def pi_class_check(f, w, grid, lambda_grid=(0.5, 2.0, 4.0), tol=0.25):
    """de Haan check: ``max_lambda |(f(lambda t) - f(t)) / w(t) - ln lambda|``
    along ``grid``.  Holds when the deviation decreases from the first to
    the last grid point, is non-increasing over the last decade, and ends
    below ``tol``."""
    ts = np.asarray(grid, dtype=float)
    wv = np.asarray(w(ts), dtype=float)
    if np.any(~np.isfinite(wv)) or np.any(wv <= 0):
        raise DomainError("auxiliary function must be positive on the grid")
    fv = np.asarray(f(ts), dtype=float)
    devs = np.zeros_like(ts)
    for lam in lambda_grid:
        d = np.abs((np.asarray(f(lam * ts), dtype=float) - fv) / wv - math.log(lam))
        devs = np.maximum(devs, d)
    sel = ts >= ts[-1] / 10.0 * (1 - 1e-12)
    tail = devs[sel]
    scale = max(float(np.max(devs)), 1e-300)
    decreasing = bool(devs[-1] <= devs[0] and np.all(np.diff(tail) <= 1e-9 * scale))
    final = float(devs[-1])
    holds = bool(final < tol and (decreasing or final < 1e-12))
    return PiClassReport(
        holds=holds, auxiliary_samples=wv, lambda_grid=tuple(lambda_grid),
        max_deviation=final, deviations=devs, ts=ts, decreasing=decreasing,
    )


# (mode, theta, log exponents of L); the first of each of modes (i) and (ii)
# has L = 1 and an exact antiderivative
KARAMATA_CASES = (
    ("i", -2.0, ()),
    ("i", -2.0, (-1.0,)),
    ("i", -3.0, (1.0,)),
    ("i", -2.5, (0.0, 1.0)),
    ("ii", 2.0, ()),
    ("ii", 0.0, (1.0,)),
    ("ii", 1.0, (-1.0,)),
    ("ii", 3.0, (2.0,)),
    ("iii", -1.0, (-2.0,)),
    ("iii", -1.0, (-0.5,)),
    ("iii", -1.0, (-1.0,)),
    ("iii", -1.0, (-1.0, -2.0)),
)


def karamata_suite(t_end=1e6, cases=KARAMATA_CASES, per_decade=10):
    """Run :func:`karamata_check` on each case over ``[1e3, t_end]``;
    returns ``[(case, trace), ...]``."""
    grid = default_grid(1e3, t_end, per_decade)
    out = []
    for mode, theta, logs in cases:
        L = CoefficientExpr(log_powers=logs)
        out.append(((mode, theta, tuple(logs)), karamata_check(L, theta, mode, grid=grid)))
    return out
