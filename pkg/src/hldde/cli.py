"""Scenario runner: JSON scenario files in, deterministic reports out.

Subcommands::

    hldde solve     --config FILE [--t-end X] [--out DIR]
    hldde classify  --config FILE [--t-end X] [--out DIR] [--format F]
    hldde verify    --config FILE [--engine NAME] [--tol X] [--out DIR] [--format F]
    hldde karamata  [--config FILE] [--t-end X] [--tol X] [--out DIR] [--format F]
    hldde transform --config FILE [--out DIR] [--format F]
    hldde suite     [--config FILE_OR_DIR] [--tol X] [--out DIR] [--format F]

``--tol`` overrides the ``ratio`` tolerance of a scenario (the window
around 1 for formula ratios, the deviation bar for Karamata traces).
Exit codes: 0 pass, 1 scenario failure, 2 configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .asymptotics import (
    DEFAULT_TOLERANCES, ENGINES, Check, change_of_variables, check_hypotheses,
    check_necessity, reciprocal_transform, verify,
)
from .core import CoefficientExpr, DelayMap, HalfLinearEquation
from .dde import (
    HistorySpec, classify_trajectory, manufactured_p, residual, solve,
)
from .errors import ConfigError, HalfLinearError, MismatchError
from .quad import classify_improper
from .rvkit import (
    KARAMATA_CASES, estimate_rv_index, karamata_suite, nrv_index_from_logderivative,
)

SCENARIO_DIR = Path(__file__).parent / "scenarios"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

CHECK_KINDS = (
    "verify", "convergence", "counterexample", "karamata", "bertrand",
    "transform", "cross_engine", "hypotheses",
)

# thresholds used by the scenario runners on top of the engine tolerances
RUNNER_TOLERANCES = {
    "error": 1e-5,  # manufactured-solution relative error
    "order_ratio": 8.0,  # error reduction when the step is halved
    "roundoff": 1e-12,  # errors below this count as exact
    "residual": 1e-6,  # residual of a known solution
    "log_derivative": 0.01,  # relative gap of t y'/y to its expected value
    "exact": 1e-8,  # Karamata traces against closed-form antiderivatives
    "agreement": 0.01,  # N / M across engines
    "solver_factor": 10.0,  # reciprocal residual in units of the solver tolerance
    "r_hat_divergent": 1e-8,
    "r_hat_convergent": 1e-6,
    "quasi_equality": 1e-6,
}


# -- configuration --------------------------------------------------------------------


def _require_keys(d, path, allowed, required=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {', '.join(unknown)}")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}: missing field '{k}'")


def _number(v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{path}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}: expected a positive number, got {v!r}")
    return float(v)


def _numbers(v, path, length=None):
    if not isinstance(v, list):
        raise ConfigError(f"{path}: expected a list of numbers")
    if length is not None and len(v) != length:
        raise ConfigError(f"{path}: expected {length} numbers, got {len(v)}")
    return tuple(_number(x, f"{path}[{i}]") for i, x in enumerate(v))


COEFFICIENT_FIELDS = ("scale", "power", "log_powers", "exp_rate", "poly")


def parse_coefficient(d, path):
    """``{scale, power, log_powers, exp_rate, poly}`` or a bare positive number."""
    if not isinstance(d, dict):
        return CoefficientExpr.constant(_number(d, path, positive=True))
    _require_keys(d, path, COEFFICIENT_FIELDS)
    kw = {}
    if "scale" in d:
        kw["scale"] = _number(d["scale"], f"{path}.scale", positive=True)
    if "power" in d:
        kw["power"] = _number(d["power"], f"{path}.power")
    if "log_powers" in d:
        kw["log_powers"] = _numbers(d["log_powers"], f"{path}.log_powers")
    if "exp_rate" in d:
        kw["exp_rate"] = _numbers(d["exp_rate"], f"{path}.exp_rate", 2)
    if "poly" in d:
        kw["poly"] = _numbers(d["poly"], f"{path}.poly")
    try:
        return CoefficientExpr(**kw)
    except HalfLinearError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_delay(d, path):
    _require_keys(d, path, ("kind", "sigma", "lambda"), ("kind",))
    kind = d["kind"]
    try:
        if kind == "shift":
            return DelayMap.shift(_number(d.get("sigma", 0.0), f"{path}.sigma"))
        if kind == "proportional":
            return DelayMap.proportional(_number(d.get("lambda", 1.0), f"{path}.lambda"))
    except HalfLinearError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: expected 'shift' or 'proportional', got {kind!r}")


def parse_equation(d, path):
    """``{alpha, a, r, p, tau}``; ``p`` may be ``{"manufactured": {"rho": x}}``
    for the coefficient making ``y = t**rho`` exact."""
    _require_keys(d, path, ("alpha", "a", "r", "p", "tau"), ("alpha", "a", "r", "p", "tau"))
    alpha = _number(d["alpha"], f"{path}.alpha")
    a = _number(d["a"], f"{path}.a")
    r = parse_coefficient(d["r"], f"{path}.r")
    tau = parse_delay(d["tau"], f"{path}.tau")
    p_spec = d["p"]
    if isinstance(p_spec, dict) and "manufactured" in p_spec:
        _require_keys(p_spec, f"{path}.p", ("manufactured",))
        m = p_spec["manufactured"]
        _require_keys(m, f"{path}.p.manufactured", ("rho",), ("rho",))
        try:
            p = manufactured_p(r, tau, _number(m["rho"], f"{path}.p.manufactured.rho"), alpha)
        except HalfLinearError as exc:
            raise ConfigError(f"{path}.p.manufactured: {exc}") from exc
    else:
        p = parse_coefficient(p_spec, f"{path}.p")
    try:
        return HalfLinearEquation(alpha, r, p, tau, a)
    except HalfLinearError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_history(d, path):
    """``{"kind": "power", "rho", "scale"}``, ``{"kind": "expr", "expr": {...}}``
    or ``{"kind": "gaussian"}``, each with an optional ``start_quasiderivative``."""
    _require_keys(d, path, ("kind", "rho", "scale", "expr", "start_quasiderivative"), ("kind",))
    kind = d["kind"]
    u0 = d.get("start_quasiderivative")
    if u0 is not None:
        u0 = _number(u0, f"{path}.start_quasiderivative")
    if kind == "power":
        rho = _number(d.get("rho", 1.0), f"{path}.rho")
        scale = _number(d.get("scale", 1.0), f"{path}.scale", positive=True)
        h = HistorySpec.from_expr(CoefficientExpr(scale=scale, power=rho), u0)
    elif kind == "expr":
        if "expr" not in d:
            raise ConfigError(f"{path}: missing field 'expr'")
        h = HistorySpec.from_expr(parse_coefficient(d["expr"], f"{path}.expr"), u0)
    elif kind == "gaussian":
        h = HistorySpec.gaussian()
        if u0 is not None:
            h = HistorySpec(h.phi, h.phi_prime, u0, h.description)
    else:
        raise ConfigError(f"{path}.kind: expected 'power', 'expr' or 'gaussian', got {kind!r}")
    return h


@dataclass
class Case:
    """One equation with its history and solver options."""

    label: str
    equation: HalfLinearEquation
    history: Optional[HistorySpec]
    t_end: Optional[float]
    solver: dict
    params: dict


@dataclass
class Scenario:
    name: str
    check: str
    description: str
    engine: str
    tolerances: dict
    expect: dict
    params: dict
    cases: list

    def engine_tolerances(self):
        return {k: v for k, v in self.tolerances.items() if k in DEFAULT_TOLERANCES}

    def tol(self, key):
        if key in self.tolerances:
            return self.tolerances[key]
        if key in RUNNER_TOLERANCES:
            return RUNNER_TOLERANCES[key]
        return DEFAULT_TOLERANCES[key]


CASE_FIELDS = ("label", "equation", "history", "t_end", "solver", "params")
SOLVER_FIELDS = ("tol", "step", "h_max")


def _parse_case(d, path, default_label):
    _require_keys(d, path, CASE_FIELDS, ("equation",))
    eq = parse_equation(d["equation"], f"{path}.equation")
    history = parse_history(d["history"], f"{path}.history") if "history" in d else None
    t_end = _number(d["t_end"], f"{path}.t_end") if "t_end" in d else None
    if t_end is not None and not t_end > eq.a:
        raise ConfigError(f"{path}.t_end: must exceed a = {eq.a:g}")
    solver = d.get("solver", {})
    _require_keys(solver, f"{path}.solver", SOLVER_FIELDS)
    solver = {k: (None if v is None else _number(v, f"{path}.solver.{k}", positive=True))
              for k, v in solver.items()}
    params = d.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"{path}.params: expected an object")
    return Case(str(d.get("label", default_label)), eq, history, t_end, solver, params)


SCENARIO_FIELDS = ("name", "check", "description", "engine", "tolerances", "expect",
                   "params", "cases") + CASE_FIELDS[1:]


def parse_scenario(doc, source="<scenario>"):
    """Validate a scenario document (already decoded from JSON)."""
    _require_keys(doc, source, SCENARIO_FIELDS, ("name", "check"))
    name = doc["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{source}.name: expected a non-empty string")
    check = doc["check"]
    if check not in CHECK_KINDS:
        raise ConfigError(f"{source}.check: expected one of {', '.join(CHECK_KINDS)}, got {check!r}")
    engine = doc.get("engine", "auto")
    if engine != "auto" and engine not in ENGINES:
        raise ConfigError(f"{source}.engine: expected auto or one of {', '.join(ENGINES)}")
    tolerances = doc.get("tolerances", {})
    _require_keys(tolerances, f"{source}.tolerances",
                  tuple(DEFAULT_TOLERANCES) + tuple(RUNNER_TOLERANCES))
    tolerances = {k: _number(v, f"{source}.tolerances.{k}", positive=True)
                  for k, v in tolerances.items()}
    expect = doc.get("expect", {})
    params = doc.get("params", {})
    for key, val in (("expect", expect), ("params", params)):
        if not isinstance(val, dict):
            raise ConfigError(f"{source}.{key}: expected an object")
    if "cases" in doc:
        if any(k in doc for k in ("equation", "history", "t_end", "solver")):
            raise ConfigError(f"{source}: give either 'cases' or a top-level equation, not both")
        if not isinstance(doc["cases"], list) or not doc["cases"]:
            raise ConfigError(f"{source}.cases: expected a non-empty list")
        cases = [_parse_case(c, f"{source}.cases[{i}]", f"case{i}") for i, c in enumerate(doc["cases"])]
    elif "equation" in doc:
        top = {k: doc[k] for k in CASE_FIELDS[1:] if k in doc}
        cases = [_parse_case(top, source, name)]
    else:
        cases = []
    return Scenario(name, check, str(doc.get("description", "")), engine, tolerances,
                    expect, params, cases)


def load_scenario(path):
    """Read and validate a scenario file; JSON syntax errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_scenario(doc, path.name)


def bundled_scenarios():
    """Bundled acceptance scenarios sorted by name."""
    scenarios = [load_scenario(p) for p in sorted(SCENARIO_DIR.glob("*.json"))]
    return sorted(scenarios, key=lambda s: s.name)


# -- reports --------------------------------------------------------------------------


@dataclass
class RunReport:
    """Outcome of one scenario.  ``timing`` is reported on the console only,
    so written artifacts stay byte-identical across runs."""

    scenario: str
    check: str
    checks: list = field(default_factory=list)
    hypotheses: dict = field(default_factory=dict)  # case label -> HypothesisReport
    observed: dict = field(default_factory=dict)  # case label -> SolutionClass
    fits: dict = field(default_factory=dict)  # case label -> AsymptoticFit
    traces: dict = field(default_factory=dict)  # trace name -> (t, values)
    trajectories: dict = field(default_factory=dict)  # case label -> Trajectory
    timing: float = 0.0
    error: Optional[str] = None

    @property
    def passed(self):
        return self.error is None and bool(self.checks) and all(c.passed for c in self.checks)

    def failing(self):
        return [c for c in self.checks if not c.passed]

    def add(self, name, required, observed, passed):
        self.checks.append(Check(name, required, observed, bool(passed)))


def _fmt(v, digits=6):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{digits}g}"
    if v is None:
        return ""
    return str(v)


def _csv_cell(s):
    s = str(s)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def trajectory_csv(traj):
    """Trajectory nodes as CSV text with columns ``t,y,y_prime,quasi``."""
    lines = ["t,y,y_prime,quasi"]
    for row in zip(traj.ts, traj.ys, traj.y_primes, traj.quasis):
        lines.append(",".join(f"{float(x):.17g}" for x in row))
    return "\n".join(lines) + "\n"


def _check_rows(report):
    """``(section, Check)`` pairs in a fixed order."""
    rows = []
    for label, hyp in report.hypotheses.items():
        rows += [(f"hypotheses:{label}:{hyp.theorem}", c) for c in hyp.checks]
    for label, fit in report.fits.items():
        rows += [(f"fit:{label}:{fit.formula_id}", m) for m in fit.metrics]
    rows += [("acceptance", c) for c in report.checks]
    return rows


def report_markdown(report):
    out = [f"# {report.scenario}", "", f"check: {report.check}", "",
           f"result: {'PASS' if report.passed else 'FAIL'}", ""]
    if report.error:
        out += [f"error: {report.error}", ""]
    for label, hyp in report.hypotheses.items():
        out += [f"## Hypotheses: {label} ({hyp.theorem})", "",
                f"applicable: {_fmt(hyp.applicable)}; predicted class {hyp.predicted_class}; "
                f"predicted index {_fmt(hyp.predicted_index)}; formula {hyp.formula_id}", "",
                "| check | required | observed | pass |", "|---|---|---|---|"]
        out += [f"| {c.name} | {c.required} | {_fmt(c.observed)} | {_fmt(c.passed)} |" for c in hyp.checks]
        out.append("")
    for label, cls in report.observed.items():
        out += [f"observed class ({label}): {cls.label} (y: {cls.y_limit.describe()}, "
                f"quasiderivative: {cls.quasi_limit.describe()})", ""]
    for label, fit in report.fits.items():
        consts = ", ".join(f"{k} = {_fmt(v)}" for k, v in fit.limit_constants.items()) or "none"
        out += [f"## Fit: {label} ({fit.formula_id})", "",
                f"metric: {fit.comparison_metric}", "",
                f"final ratio {_fmt(fit.final_ratio)}; constants: {consts}", "",
                "| metric | required | observed | pass |", "|---|---|---|---|"]
        out += [f"| {m.name} | {m.required} | {_fmt(m.observed)} | {_fmt(m.passed)} |" for m in fit.metrics]
        out.append("")
    out += ["## Acceptance checks", "", "| check | required | observed | pass |", "|---|---|---|---|"]
    out += [f"| {c.name} | {c.required} | {_fmt(c.observed)} | {_fmt(c.passed)} |" for c in report.checks]
    return "\n".join(out) + "\n"


def report_csv(report):
    lines = ["scenario,section,name,required,observed,passed"]
    for section, c in _check_rows(report):
        cells = (report.scenario, section, c.name, c.required, _fmt(c.observed), _fmt(c.passed))
        lines.append(",".join(_csv_cell(x) for x in cells))
    return "\n".join(lines) + "\n"


def report_jsonl(report):
    """One JSON object per trace point: formula ratios (``ratio:<case>``) and
    auxiliary traces."""
    lines = []
    series = [(f"ratio:{label}", fit.ts, fit.ratio) for label, fit in report.fits.items()]
    for label, fit in report.fits.items():
        series += [(f"{name}:{label}", t, v) for name, (t, v) in fit.traces.items()]
    series += [(name, t, v) for name, (t, v) in report.traces.items()]
    for name, ts, vs in series:
        for t, v in zip(np.asarray(ts, dtype=float), np.asarray(vs, dtype=float)):
            obj = {"scenario": report.scenario, "trace": name,
                   "t": float(f"{t:.17g}"), "value": float(f"{v:.17g}") if math.isfinite(v) else None}
            lines.append(json.dumps(obj, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


FORMATS = {"markdown": (".md", report_markdown), "csv": (".csv", report_csv),
           "jsonl": (".jsonl", report_jsonl)}


def emit_report(report, out_dir, fmt="markdown"):
    """Write the report (and any trajectories as CSV) into ``out_dir``;
    returns the written paths.  Raises ``OSError`` when unwritable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix, render = FORMATS[fmt]
    paths = [out_dir / f"{report.scenario}{suffix}"]
    paths[0].write_text(render(report))
    for label, traj in report.trajectories.items():
        tag = "" if label == report.scenario else f"_{label}"
        p = out_dir / f"{report.scenario}{tag}_trajectory.csv"
        p.write_text(trajectory_csv(traj))
        paths.append(p)
    return paths


def suite_summary(reports, fmt="markdown"):
    if fmt == "csv":
        lines = ["scenario,check,passed,failing"]
        for r in reports:
            failing = ";".join(c.name for c in r.failing()) or (r.error or "")
            lines.append(",".join(_csv_cell(x) for x in (r.scenario, r.check, _fmt(r.passed), failing)))
        return ".csv", "\n".join(lines) + "\n"
    if fmt == "jsonl":
        lines = [json.dumps({"scenario": r.scenario, "check": r.check, "passed": r.passed,
                             "failing": [c.name for c in r.failing()], "error": r.error},
                            sort_keys=True) for r in reports]
        return ".jsonl", "\n".join(lines) + "\n"
    lines = ["# Suite", "", "| scenario | check | result | failing |", "|---|---|---|---|"]
    for r in reports:
        failing = ", ".join(c.name for c in r.failing()) or (r.error or "")
        lines.append(f"| {r.scenario} | {r.check} | {'PASS' if r.passed else 'FAIL'} | {failing} |")
    return ".md", "\n".join(lines) + "\n"


# -- pipelines --------------------------------------------------------------------------


def _solve_case(case, t_end=None):
    if case.history is None:
        raise ConfigError(f"case {case.label}: solving needs a 'history'")
    t_end = t_end if t_end is not None else case.t_end
    if t_end is None:
        raise ConfigError(f"case {case.label}: solving needs 't_end'")
    opts = {"tol": case.solver.get("tol", 1e-10)}
    if "step" in case.solver:
        opts["step"] = case.solver["step"]
    if "h_max" in case.solver:
        opts["h_max"] = case.solver["h_max"]
    return solve(case.equation, case.history, t_end, **opts)


def _index_at(rep, label, traj, t_at, target, rel):
    """Index of ``y`` on the decade ending at ``t_at`` (grid spanning three decades)."""
    lo = max(t_at / 1e3, float(traj.ts[0]) * (1 + 1e-9))
    grid = np.geomspace(lo, t_at, 121)
    est = estimate_rv_index(grid, traj.y(grid))
    ok = abs(est.index - target) <= rel * max(abs(target), 1.0)
    rep.add(f"y_index_at_{t_at:g}:{label}", f"{target:g} within {100 * rel:g}%", est.index, ok)


def _verify_case(rep, sc, case, engine, t_end=None):
    """hypotheses -> solve -> classify -> verify for one case; returns the fit."""
    eq = case.equation
    hyp = check_hypotheses(eq, engine)
    rep.hypotheses[case.label] = hyp
    rep.add(f"applicable:{case.label}", f"{hyp.theorem} hypotheses hold", hyp.applicable, hyp.applicable)
    exp = {**sc.expect, **case.params.get("expect", {})}
    if "predicted_index" in exp:
        ok = abs(hyp.predicted_index - exp["predicted_index"]) <= 1e-12
        rep.add(f"predicted_index:{case.label}", f"{exp['predicted_index']:g}", hyp.predicted_index, ok)
    traj = _solve_case(case, t_end)
    rep.trajectories[case.label] = traj
    observed = classify_trajectory(traj)
    rep.observed[case.label] = observed
    if "class" in exp:
        rep.add(f"observed_class:{case.label}", exp["class"], observed.label, observed.label == exp["class"])
    if not hyp.applicable:
        return None
    try:
        fit = verify(eq, traj, engine=hyp.theorem.lower(), report=hyp,
                     tolerances=sc.engine_tolerances())
    except MismatchError as exc:
        rep.add(f"class_match:{case.label}", exc.predicted, exc.observed, False)
        return None
    rep.fits[case.label] = fit
    rep.add(f"class_match:{case.label}", fit.predicted_class, fit.observed.label,
            fit.observed.label == fit.predicted_class)
    failing = [m.name for m in fit.metrics if not m.passed]
    rep.add(f"fit_metrics:{case.label}", "all formula metrics pass",
            ", ".join(failing) if failing else "all pass", not failing)
    if "index_at" in case.params:
        t_at = float(case.params["index_at"])
        _index_at(rep, case.label, traj, t_at, hyp.predicted_index, sc.tol("index_rel"))
    if case.params.get("necessity"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            nec = check_necessity(eq, traj, tolerances=sc.engine_tolerances())
        rep.add(f"necessity:{case.label}", "applicable, trends vanish, Riccati residual small",
                nec.riccati_residual, nec.applicable and nec.passed)
    return fit


def run_verify(sc, engine=None, t_end=None):
    rep = RunReport(sc.name, "verify")
    for case in sc.cases:
        _verify_case(rep, sc, case, engine or sc.engine, t_end)
    return rep


def run_convergence(sc):
    """Manufactured ``y = t**rho`` with ``r = 1`` on the alpha x lambda grid:
    relative error at ``t_eval`` and the gain when the fixed step is halved."""
    p = sc.params
    rho = float(p.get("rho", 2.0))
    t_eval = float(p.get("t_eval", 100.0))
    a = float(p.get("a", 1.0))
    h = float(p.get("step", 0.02))
    rep = RunReport(sc.name, "convergence")
    exact = t_eval ** rho
    for alpha in p.get("alphas", [1.5, 2.0, 3.0]):
        for lam in p.get("lambdas", [0.3, 0.5, 0.9]):
            tau = DelayMap.proportional(lam)
            r = CoefficientExpr()
            eq = HalfLinearEquation(alpha, r, manufactured_p(r, tau, rho, alpha), tau, a)
            errs = []
            for step in (h, h / 2):
                traj = solve(eq, HistorySpec.power(rho), t_eval, tol=None, step=step)
                errs.append(abs(float(traj.y(t_eval)) - exact) / exact)
            tag = f"alpha={alpha:g},lambda={lam:g}"
            rep.add(f"error:{tag}", f"<= {sc.tol('error'):g}", errs[1], errs[1] <= sc.tol("error"))
            floor = sc.tol("roundoff")
            gain = errs[0] / errs[1] if errs[1] > 0 else math.inf
            exact_hit = max(errs) < floor
            rep.add(f"order:{tag}", f"gain >= {sc.tol('order_ratio'):g} or both errors < {floor:g}",
                    "roundoff" if exact_hit else gain, exact_hit or gain >= sc.tol("order_ratio"))
    return rep


def run_counterexample(sc):
    """Decreasing solution ``exp(-t**2)``: residual on a uniform grid, the
    class of the computed trajectory and the log-derivative verdict."""
    p = sc.params
    rep = RunReport(sc.name, "counterexample")
    case = sc.cases[0]
    eq = case.equation
    g = HistorySpec.gaussian()
    lo, hi = p.get("residual_interval", [eq.a, 6.0])
    h = float(p.get("residual_step", 1e-3))
    n = int(round((hi - lo) / h))
    grid = lo + h * np.arange(n + 1)
    res = residual(eq, g.phi, g.phi_prime, grid)
    rep.add("residual", f"< {sc.tol('residual'):g} (step {h:g} on [{lo:g}, {hi:g}])", res,
            res < sc.tol("residual"))
    traj = _solve_case(case)
    rep.trajectories[case.label] = traj
    observed = classify_trajectory(traj)
    rep.observed[case.label] = observed
    want = sc.expect.get("class", "D")
    rep.add("observed_class", want, observed.label, observed.label == want)
    t_at = float(p.get("log_derivative_at", 10.0))
    target = float(sc.expect.get("log_derivative", -200.0))
    est = nrv_index_from_logderivative(g.phi, g.phi_prime, np.geomspace(t_at / 1e3, t_at, 121))
    verdict = sc.expect.get("index_verdict", "NotRV")
    rep.add("index_verdict", verdict, est.verdict, est.verdict == verdict)
    omega = float(est.trace[-1])
    ok = abs(omega - target) <= sc.tol("log_derivative") * abs(target)
    rep.add(f"log_derivative_at_{t_at:g}", f"{target:g} within {100 * sc.tol('log_derivative'):g}%",
            omega, ok)
    rep.traces["log_derivative"] = (np.geomspace(t_at / 1e3, t_at, 121), est.trace)
    return rep


def _karamata_exact(mode, theta, ts, a):
    """Closed-form ratio for ``L = 1``."""
    if mode == "i":
        return np.ones_like(ts)
    return 1.0 - (a / ts) ** (theta + 1.0)


def run_karamata(sc, t_end=None):
    p = sc.params
    t_end = float(t_end if t_end is not None else p.get("t_end", 1e6))
    cases = [tuple((c[0], float(c[1]), tuple(c[2]))) for c in p.get("cases", KARAMATA_CASES)]
    rep = RunReport(sc.name, "karamata")
    bar = sc.tol("ratio") if "ratio" in sc.tolerances else 0.08
    for (mode, theta, logs), tr in karamata_suite(t_end, cases):
        tag = f"{mode}:theta={theta:g}:logs={list(logs)}"
        dev = tr.final_deviation
        rep.add(f"deviation:{tag}", f"<= {bar:g} from {tr.limit:g}", dev, dev <= bar)
        mono = tr.monotone_last_decade()
        rep.add(f"monotone:{tag}", "monotone over the last decade", mono, mono)
        rep.traces[f"karamata:{tag}"] = (tr.ts, tr.ratio)
        if not any(logs) and mode in ("i", "ii"):
            exact = _karamata_exact(mode, theta, tr.ts, 1.0)
            gap = float(np.max(np.abs(tr.ratio - exact)))
            rep.add(f"exact:{tag}", f"< {sc.tol('exact'):g}", gap, gap < sc.tol("exact"))
    return rep


def run_bertrand(sc):
    """Hand-derived Bertrand table, decided by both the exact index rule and
    the dyadic-window heuristic, plus named integrals of scenario cases."""
    rep = RunReport(sc.name, "bertrand")
    a = float(sc.params.get("a", 16.0))
    for power, logs, want in sc.params.get("table", []):
        f = CoefficientExpr(power=power, log_powers=tuple(logs))
        tag = f"t^{power:g}*ln^{list(logs)}"
        for method in ("auto", "heuristic"):
            try:
                got = classify_improper(f, a, method=method).status
            except HalfLinearError as exc:
                got = f"failed: {exc}"
            rep.add(f"{method}:{tag}", want, got, got == want)
    for case in sc.cases:
        for which, want in case.params.get("integrals", {}).items():
            hyp = check_hypotheses(case.equation, case.params.get("engine", "auto"))
            f = hyp.details[which]
            try:
                got = classify_improper(f, case.equation.a).status
            except HalfLinearError as exc:
                got = f"failed: {exc}"
            rep.add(f"int_{which}:{case.label}", want, got, got == want)
    return rep


def run_transform(sc):
    """Reciprocal-equation and change-of-variables consistency."""
    rep = RunReport(sc.name, "transform")
    for case in sc.cases:
        kinds = case.params.get("transforms", sc.params.get("transforms", ["reciprocal", "change_of_variables"]))
        eq = case.equation
        traj = _solve_case(case) if case.history is not None else None
        if traj is not None:
            rep.trajectories[case.label] = traj
        if "reciprocal" in kinds:
            rec = reciprocal_transform(eq)
            tol = case.solver.get("tol", 1e-10)
            res = rec.residual(traj)
            bound = sc.tol("solver_factor") * tol
            rep.add(f"reciprocal_residual:{case.label}", f"< {bound:g}", res, res < bound)
            est, target, ok = rec.index_check()
            rep.add(f"reciprocal_index:{case.label}", f"delta~ = {target:g} within 5%", est.limit, ok)
        if "change_of_variables" in kinds:
            mode = case.params.get("mode")
            tcv = change_of_variables(eq, mode=mode)
            s_hi = tcv.cov.forward(float(case.params.get("s_sample_end", traj.t_end if traj else 1e6)))
            s_lo = tcv.cov.forward(2.0 * eq.a)
            if tcv.cov.mode == "Divergent":
                s = np.geomspace(max(s_lo, 1e-6), s_hi, 40)
                dev = tcv.r_hat_deviation(s)
                bound = sc.tol("r_hat_divergent")
                rep.add(f"r_hat_is_one:{case.label}", f"deviation < {bound:g}", dev, dev < bound)
            else:
                s = np.geomspace(s_lo, s_hi, 40)
                dev = tcv.r_hat_deviation(s)
                bound = sc.tol("r_hat_convergent")
                rep.add(f"r_hat_power:{case.label}", f"relative deviation < {bound:g}", dev, dev < bound)
            if traj is not None:
                s = tcv.cov.forward(np.geomspace(2.0 * eq.a, traj.t_end, 30))
                q = tcv.quasi_deviation(traj, s)
                bound = sc.tol("quasi_equality")
                rep.add(f"quasi_equality:{case.label}", f"< {bound:g}", q, q < bound)
    return rep


def run_cross_engine(sc):
    """Two engines on one equation: same class label and N / M within tolerance."""
    rep = RunReport(sc.name, "cross_engine")
    for case in sc.cases:
        engines = case.params.get("engines")
        if not engines or len(engines) != 2:
            raise ConfigError(f"case {case.label}: params.engines must name two engines")
        traj = _solve_case(case)
        rep.trajectories[case.label] = traj
        fits = []
        for eng in engines:
            sub = Case(f"{case.label}:{eng}", case.equation, case.history, case.t_end,
                       case.solver, {})
            hyp = check_hypotheses(case.equation, eng)
            rep.hypotheses[sub.label] = hyp
            rep.add(f"applicable:{sub.label}", f"{hyp.theorem} hypotheses hold", hyp.applicable, hyp.applicable)
            if not hyp.applicable:
                fits.append(None)
                continue
            try:
                fit = verify(case.equation, traj, engine=eng, report=hyp, tolerances=sc.engine_tolerances())
            except MismatchError as exc:
                rep.add(f"class_match:{sub.label}", exc.predicted, exc.observed, False)
                fits.append(None)
                continue
            rep.fits[sub.label] = fit
            failing = [m.name for m in fit.metrics if not m.passed]
            rep.add(f"fit_metrics:{sub.label}", "all formula metrics pass",
                    ", ".join(failing) if failing else "all pass", not failing)
            fits.append(fit)
        if None in fits:
            continue
        f1, f2 = fits
        same = f1.predicted_class == f2.predicted_class == f1.observed.label
        rep.add(f"same_class:{case.label}", f1.predicted_class, f2.predicted_class, same)
        for key in ("N", "M"):
            if key in f1.limit_constants and key in f2.limit_constants:
                v1, v2 = f1.limit_constants[key], f2.limit_constants[key]
                gap = abs(v1 - v2) / abs(v1)
                rep.add(f"{key}_agreement:{case.label}", f"relative gap < {sc.tol('agreement'):g}",
                        gap, gap < sc.tol("agreement"))
    return rep


def run_hypotheses(sc):
    """Hypothesis reports only (no trajectory): applicability, formula and
    named checks against expectations in each case's ``params.expect``."""
    rep = RunReport(sc.name, "hypotheses")
    for case in sc.cases:
        engine = case.params.get("engine", sc.engine)
        hyp = check_hypotheses(case.equation, engine)
        rep.hypotheses[case.label] = hyp
        exp = case.params.get("expect", {})
        if "applicable" in exp:
            rep.add(f"applicable:{case.label}", _fmt(exp["applicable"]), hyp.applicable,
                    hyp.applicable == exp["applicable"])
        if "formula" in exp:
            rep.add(f"formula:{case.label}", exp["formula"], hyp.formula_id, hyp.formula_id == exp["formula"])
        for name, want in exp.get("checks", {}).items():
            try:
                c = hyp.check(name)
            except KeyError:
                rep.add(f"{name}:{case.label}", str(want), "missing", False)
                continue
            if isinstance(want, (int, float)) and not isinstance(want, bool):
                obs = c.observed
                ok = isinstance(obs, float) and abs(obs - want) <= sc.tol("index_rel") * max(abs(want), 1.0)
                rep.add(f"{name}:{case.label}", f"{want:g} within {100 * sc.tol('index_rel'):g}%", obs, ok)
            elif isinstance(want, bool):
                rep.add(f"{name}:{case.label}", f"passed = {_fmt(want)}", c.observed, c.passed == want)
            else:
                rep.add(f"{name}:{case.label}", str(want), c.observed, c.observed == want)
        if "trend" in exp:
            trend = hyp.details.get(exp["trend"]["detail"])
            if trend is None:
                rep.add(f"{exp['trend']['detail']}:{case.label}", "decreasing", "missing", False)
            else:
                rep.add(f"{exp['trend']['detail']}:{case.label}", "decreasing", trend.describe(), trend.decreasing)
                rep.traces[f"{exp['trend']['detail']}:{case.label}"] = (np.exp(trend.x), trend.values)
    return rep


RUNNERS = {
    "verify": run_verify,
    "convergence": run_convergence,
    "counterexample": run_counterexample,
    "karamata": run_karamata,
    "bertrand": run_bertrand,
    "transform": run_transform,
    "cross_engine": run_cross_engine,
    "hypotheses": run_hypotheses,
}


def run_scenario(sc, tol=None, engine=None, t_end=None):
    """Run ``sc`` with its own pipeline; ``tol`` overrides the ratio tolerance."""
    if tol is not None:
        sc = Scenario(sc.name, sc.check, sc.description, sc.engine,
                      {**sc.tolerances, "ratio": tol}, sc.expect, sc.params, sc.cases)
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            if sc.check == "verify":
                rep = run_verify(sc, engine=engine, t_end=t_end)
            elif sc.check == "karamata":
                rep = run_karamata(sc, t_end=t_end)
            else:
                rep = RUNNERS[sc.check](sc)
        except ConfigError:
            raise
        except HalfLinearError as exc:
            rep = RunReport(sc.name, sc.check, error=f"{type(exc).__name__}: {exc}")
    rep.timing = time.perf_counter() - start
    return rep


# -- command line -------------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="hldde", description="Half-linear delay equation workbench.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario JSON file")
        p.add_argument("--out", help="directory for reports")
        p.add_argument("--format", choices=sorted(FORMATS), default="markdown")

    p = sub.add_parser("solve", help="integrate and write the trajectory CSV")
    common(p)
    p.add_argument("--t-end", type=float)
    p = sub.add_parser("classify", help="solution class and index verdict")
    common(p)
    p.add_argument("--t-end", type=float)
    p = sub.add_parser("verify", help="hypotheses, integration and formula comparison")
    common(p)
    p.add_argument("--t-end", type=float)
    p.add_argument("--tol", type=float, help="ratio tolerance")
    p.add_argument("--engine", choices=("auto",) + ENGINES)
    p = sub.add_parser("karamata", help="Karamata integration-theorem suite")
    common(p, config_required=False)
    p.add_argument("--t-end", type=float)
    p.add_argument("--tol", type=float, help="deviation bar for the ratio traces")
    p = sub.add_parser("transform", help="reciprocal and change-of-variables consistency")
    common(p)
    p = sub.add_parser("suite", help="run the bundled acceptance scenarios")
    common(p, config_required=False)
    p.add_argument("--tol", type=float, help="ratio tolerance for every scenario")
    return ap


def _print_report(rep, stream):
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status} {rep.scenario} ({rep.check}, {rep.timing:.1f} s)", file=stream)
    if rep.error:
        print(f"  error: {rep.error}", file=stream)
    for c in rep.failing():
        print(f"  failing: {c.name}: required {c.required}, observed {_fmt(c.observed)}", file=stream)


def _cmd_solve(args, out):
    sc = load_scenario(args.config)
    if not sc.cases:
        raise ConfigError(f"{args.config}: no equation to solve")
    case = sc.cases[0]
    traj = _solve_case(case, args.t_end)
    print(f"{sc.name}: status {traj.status}, {len(traj.ts)} nodes, "
          f"y({traj.t_end:.6g}) = {float(traj.ys[-1]):.6g}", file=out)
    if args.out:
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"{sc.name}_trajectory.csv").write_text(trajectory_csv(traj))
    else:
        out.write(trajectory_csv(traj))
    return EXIT_PASS if traj.ok else EXIT_FAIL


def _cmd_classify(args, out):
    sc = load_scenario(args.config)
    rep = RunReport(sc.name, "classify")
    for case in sc.cases:
        traj = _solve_case(case, args.t_end)
        rep.trajectories[case.label] = traj
        cls = classify_trajectory(traj)
        rep.observed[case.label] = cls
        grid = np.geomspace(float(traj.ts[0]), traj.t_end, 121)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = nrv_index_from_logderivative(traj.y, traj.y_prime, grid)
        print(f"{case.label}: class {cls.label} (y: {cls.y_limit.describe()}, "
              f"quasiderivative: {cls.quasi_limit.describe()}); index {est.index:.6g} [{est.verdict}]",
              file=out)
        exp = {**sc.expect, **case.params.get("expect", {})}
        want = exp.get("class")
        if want is not None:
            rep.add(f"class:{case.label}", want, cls.label, cls.label == want)
        want = exp.get("index_verdict")
        rep.add(f"index_verdict:{case.label}", want or "reported", est.verdict,
                want is None or est.verdict == want)
    return rep


def main(argv=None, out=None):
    out = out or sys.stdout
    args = _parser().parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args, out)
        if args.command == "classify":
            reports = [_cmd_classify(args, out)]
        elif args.command == "verify":
            sc = load_scenario(args.config)
            if not sc.cases:
                raise ConfigError(f"{args.config}: no equation to verify")
            sc = Scenario(sc.name, "verify", sc.description, sc.engine, sc.tolerances,
                          sc.expect, sc.params, sc.cases)
            reports = [run_scenario(sc, tol=args.tol, engine=args.engine, t_end=args.t_end)]
        elif args.command == "karamata":
            if args.config:
                sc = load_scenario(args.config)
            else:
                sc = Scenario("karamata", "karamata", "", "auto", {}, {}, {}, [])
            sc = Scenario(sc.name, "karamata", sc.description, sc.engine, sc.tolerances,
                          sc.expect, sc.params, sc.cases)
            reports = [run_scenario(sc, tol=args.tol, t_end=args.t_end)]
        elif args.command == "transform":
            sc = load_scenario(args.config)
            sc = Scenario(sc.name, "transform", sc.description, sc.engine, sc.tolerances,
                          sc.expect, sc.params, sc.cases)
            reports = [run_scenario(sc)]
        else:
            if args.config:
                path = Path(args.config)
                files = sorted(path.glob("*.json")) if path.is_dir() else [path]
                scenarios = sorted((load_scenario(p) for p in files), key=lambda s: s.name)
            else:
                scenarios = bundled_scenarios()
            reports = []
            for sc in scenarios:
                rep = run_scenario(sc, tol=args.tol)
                _print_report(rep, out)
                reports.append(rep)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command != "suite":
        for rep in reports:
            _print_report(rep, out)
    try:
        if args.out:
            for rep in reports:
                emit_report(rep, args.out, args.format)
            if args.command == "suite":
                suffix, text = suite_summary(reports, args.format)
                (Path(args.out) / f"suite{suffix}").write_text(text)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
