"""Run the checks a command asks for and collect them into a versioned report."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .atlas import DIAMETER_CLASSES, enumerate_fset, set_diameter, verify_diameter, write_members_csv
from .cyclic import (
    ClassParams,
    CyclicMap,
    OperatorClass,
    classify,
    contraction_rate,
    verify_cyclicity,
)
from .engine import HIT, SolveConfig, iteration_bound, picard_solve, power_solve, write_trace_csv
from .errors import AfpError, OrbitExitFault, ParameterFault, SpecSemanticError, SpecSyntaxError
from .space import GridPlan, check_axioms
from .speclang import ProblemSpec, load_spec, spec_digest

__all__ = ["SCHEMA_VERSION", "COMMANDS", "RunOptions", "RunReport", "execute", "render_text"]

SCHEMA_VERSION = 1
COMMANDS = ("check", "classify", "solve", "fset", "verify", "report")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_FAULT = 0, 1, 2, 3
AXIOM_SAMPLE = 60
MAX_STARTS = 500
MAX_WITNESSES = 200
RATE_TOL = 1e-9


@dataclass(frozen=True)
class RunOptions:
    epsilon: Optional[float] = None
    x0: Optional[float] = None
    k: Optional[int] = None
    grid: Optional[float] = None
    budget: Optional[int] = None
    seed: Optional[int] = None
    strict: bool = False
    csv: Optional[str] = None


@dataclass
class RunReport:
    command: str
    spec: str
    spec_digest: Optional[str] = None
    results: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    exit_code: int = EXIT_OK

    def warn(self, kind, message, witness=None):
        self.warnings.append({"kind": kind, "message": message, "witness": witness})

    def fail(self, kind, message, witness=None):
        self.failures.append({"kind": kind, "message": message, "witness": witness})

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "spec": self.spec,
            "spec_digest": self.spec_digest,
            "exit_code": self.exit_code,
            "results": self.results,
            "warnings": self.warnings,
            "failures": self.failures,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write_json(self, path):
        _atomic_write(path, self.to_json())


def _clean(obj):
    """Make a payload JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _atomic_write(path, text):
    path = os.fspath(path)
    tmp = f"{path}.{os.getpid()}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- the individual stages -------------------------------------------------------


@dataclass
class _Ctx:
    spec: ProblemSpec
    opts: RunOptions
    map: CyclicMap
    plan: GridPlan
    budget: int
    seed: int
    report: RunReport
    _classification: object = None

    @property
    def space(self):
        return self.map.domain

    @property
    def epsilons(self):
        return (self.opts.epsilon,) if self.opts.epsilon is not None else self.spec.epsilons

    def classification(self):
        if self._classification is None:
            self._classification = classify(self.map, self.plan, self.budget, self.seed)
        return self._classification


def _axiom_sample(ctx):
    pts = ctx.space.union_grid(ctx.plan)
    if pts.size > AXIOM_SAMPLE:
        pts = pts[np.unique(np.linspace(0, pts.size - 1, AXIOM_SAMPLE).round().astype(int))]
    return pts


def _stage_axioms(ctx):
    rep = check_axioms(ctx.space, _axiom_sample(ctx))
    ctx.report.results["axioms"] = rep.to_dict()
    for v in rep.verdicts:
        if not v.passed:
            ctx.report.fail("axiom", f"{v.axiom} fails: {v.detail}", list(v.witness))
    return rep.passed


def _stage_cyclicity(ctx):
    rep = verify_cyclicity(ctx.map, ctx.plan)
    ctx.report.results["cyclicity"] = {
        "passed": rep.passed,
        "checked": rep.checked,
        "violation_count": len(rep.violations),
        "violations": [
            {"set": s, "x": x, "tx": tx, "target": t} for s, x, tx, t in rep.violations[:MAX_WITNESSES]
        ],
    }
    if rep.passed:
        return
    by_source = {}
    for s, x, tx, t in rep.violations:
        by_source.setdefault((s, t), []).append((x, tx))
    for (s, t), items in sorted(by_source.items()):
        x, tx = items[0]
        target = ctx.spec.subsets[t - 1]
        shown = "undefined" if tx is None else repr(tx)
        ctx.report.warn(
            "cyclicity",
            f"{len(items)} grid points of X{s} map outside X{t} = {target}, e.g. T({x!r}) = {shown}",
            {"set": s, "target": t, "pairs": [[a, b] for a, b in items[:MAX_WITNESSES]]},
        )


def _certified(ctx, result):
    """Class parameters backed by the sweep, or None when the class is out of reach.

    A declared alpha is used when the sweep stays below it; otherwise the
    measured constant itself. The combined class always uses its fitted triple.
    """
    cls = result.cls
    if cls is OperatorClass.GMohsenialhosseini:
        return (result.params, "fitted") if result.admissible else None
    a = ctx.spec.alpha
    if a is not None and 0 < a < cls.alpha_upper and result.empirical_constant <= a:
        return ClassParams(a), "declared"
    if result.admissible:
        return ClassParams(max(result.empirical_constant, 1e-12)), "measured"
    return None


def _stage_classify(ctx):
    rep = ctx.classification()
    out = {}
    certs = {}
    for cls, res in rep.results.items():
        entry = res.to_dict()
        cert = _certified(ctx, res)
        entry["params_used"] = None
        entry["params_source"] = None
        entry["rate"] = None
        if cert is not None:
            params, source = cert
            rate = contraction_rate(cls, params)
            entry.update(params_used=params.to_dict(), params_source=source, rate=rate)
            certs[cls] = (params, rate)
            if rate is None:
                ctx.report.warn(
                    "rate", f"{cls} with {params.to_dict()} gives a contraction rate >= 1; no iteration bound",
                    {"class": str(cls), "params": params.to_dict()},
                )
        out[str(cls)] = entry
    ctx.report.results["classification"] = out
    if not certs:
        ctx.report.warn("classification", "no operator class is admissible on this grid",
                        {str(c): r.empirical_constant for c, r in rep.results.items()})
    return certs


def _bound_rate(ctx):
    """Rate used for the a-priori iteration count of a single solve."""
    if ctx.spec.alpha is not None and 0 < ctx.spec.alpha < 0.5:
        return contraction_rate(OperatorClass.GMohseni, ClassParams(ctx.spec.alpha))
    return None


def _solve_config(ctx, epsilon, x0, start_set=None):
    return SolveConfig(epsilon, x0, ctx.spec.max_iter, ctx.spec.divergence_factor, start_set)


def _stage_solve(ctx, fatal=True):
    x0 = ctx.opts.x0 if ctx.opts.x0 is not None else ctx.spec.x0
    if x0 is None:
        raise ParameterFault("no starting point: pass --x0 or set x0 in [run]")
    eps = ctx.epsilons[0]
    k = ctx.opts.k or 1
    rate = _bound_rate(ctx)
    config = _solve_config(ctx, eps, x0)
    try:
        trace = power_solve(ctx.space, ctx.map, k, config, rate) if k > 1 else picard_solve(ctx.space, ctx.map, config, rate)
    except OrbitExitFault as exc:
        if ctx.opts.csv and exc.trace is not None:
            with open(ctx.opts.csv, "w", encoding="utf-8", newline="") as fh:
                write_trace_csv(exc.trace, fh)
        if exc.trace is not None:
            ctx.report.results["solve"] = exc.trace.summary()
        if fatal:
            raise
        ctx.report.warn("orbit_exit", f"orbit from x0 = {x0!r} leaves the sets: {exc}",
                        {"x0": x0, "iterate": exc.index, "x": exc.point})
        return
    summary = trace.summary()
    summary["epsilon"] = eps
    summary["displacements"] = list(trace.displacements[:100])
    ctx.report.results["solve"] = summary
    if ctx.opts.csv:
        with open(ctx.opts.csv, "w", encoding="utf-8", newline="") as fh:
            write_trace_csv(trace, fh)
    if trace.outcome != HIT:
        ctx.report.warn(
            "solve", f"no epsilon-fixed point reached from x0 = {x0!r} ({trace.outcome})",
            {"x0": x0, "last": trace.iterates[-1], "iterations": len(trace.displacements)},
        )
    elif trace.bound is not None and trace.hit_index > trace.bound.n_star:
        ctx.report.fail(
            "iteration_bound", f"hit after {trace.hit_index} steps, bound allows {trace.bound.n_star}",
            {"x0": x0, "hit_index": trace.hit_index, "n_star": trace.bound.n_star},
        )


def _stage_fset(ctx):
    out = []
    fsets = []
    for eps in ctx.epsilons:
        fs = enumerate_fset(ctx.space, ctx.map, eps, ctx.plan)
        fsets.append(fs)
        entry = fs.to_dict()
        if fs.members:
            dt, dp, approx = set_diameter(ctx.space, fs, ctx.budget, ctx.seed)
            entry.update(delta_triple=dt, delta_pair=dp, approximate=approx)
        else:
            entry.update(delta_triple=None, delta_pair=None, approximate=False)
            ctx.report.warn("empty_fset", f"no grid point is an epsilon-fixed point for epsilon = {eps!r}",
                            {"epsilon": eps})
        out.append(entry)
    ctx.report.results["fset"] = out
    if ctx.opts.csv and ctx.report.command == "fset":
        with open(ctx.opts.csv, "w", encoding="utf-8", newline="") as fh:
            write_members_csv(fsets, fh)


def _starts(ctx):
    pairs = []
    for i, s in enumerate(ctx.spec.subsets):
        pairs.extend((i, float(x)) for x in s.grid(ctx.plan))
    if len(pairs) > MAX_STARTS:
        idx = np.unique(np.linspace(0, len(pairs) - 1, MAX_STARTS).round().astype(int))
        pairs = [pairs[j] for j in idx]
    return pairs


def _stage_orbits(ctx, certs):
    """Picard orbits from grid starts, checked against the certified rates.

    An orbit does not depend on epsilon, so each start is iterated once with
    the smallest epsilon and the hits for larger ones are read off its trace.
    """
    rates = {cls: r for cls, (_, r) in certs.items() if r is not None}
    best = min(rates.values()) if rates else None
    epsilons = sorted(ctx.epsilons)
    starts = _starts(ctx)
    hits = {eps: 0 for eps in epsilons}
    exits = 0
    worst_ratio, worst_witness = 0.0, None
    late = []
    over = {cls: [] for cls in rates}
    for i, x0 in starts:
        try:
            trace = picard_solve(ctx.space, ctx.map, _solve_config(ctx, epsilons[0], x0, i))
        except OrbitExitFault as exc:
            exits += 1
            if exits == 1:
                ctx.report.warn("orbit_exit", f"orbit from x0 = {x0!r} (X{i + 1}) leaves the sets: {exc}",
                                {"x0": x0, "set": i + 1, "iterate": exc.index, "x": exc.point})
            trace = exc.trace
        ds = trace.displacements
        for eps in epsilons:
            n = next((n for n, d in enumerate(ds) if d < eps), None)
            if n is None:
                continue
            hits[eps] += 1
            if best is not None:
                n_star = iteration_bound(ds[0], eps, best).n_star
                if n > n_star:
                    late.append([x0, eps, n, n_star])
        if trace.decay_ratios:
            r = max(trace.decay_ratios)
            if r > worst_ratio:
                worst_ratio, worst_witness = r, {"x0": x0, "set": i + 1}
            for cls, rate in rates.items():
                if r > rate + RATE_TOL:
                    over[cls].append([x0, r])
    if exits > 1:
        ctx.report.warn("orbit_exit", f"{exits} of {len(starts)} orbits leave the sets", {"count": exits})
    for cls, bad in over.items():
        if bad:
            ctx.report.fail("decay", f"{len(bad)} orbits decay slower than the {cls} rate {rates[cls]!r}",
                            {"class": str(cls), "starts": bad[:MAX_WITNESSES]})
    if late:
        ctx.report.fail("iteration_bound", f"{len(late)} orbits hit later than the a-priori bound",
                        {"runs": late[:MAX_WITNESSES]})
    ctx.report.results["orbits"] = {
        "starts": len(starts),
        "hits": [{"epsilon": eps, "count": hits[eps]} for eps in epsilons],
        "left_domain": exits,
        "bound_rate": best,
        "max_decay_ratio": worst_ratio,
        "max_decay_witness": worst_witness,
        "late_hits": len(late),
    }


def _stage_diameters(ctx, certs):
    out = []
    for cls in DIAMETER_CLASSES:
        if cls not in certs:
            continue
        params = certs[cls][0]
        for eps in ctx.epsilons:
            rep = verify_diameter(ctx.space, ctx.map, cls, params, eps, ctx.plan, ctx.budget, ctx.seed)
            out.append(rep.to_dict())
            if rep.empty:
                ctx.report.warn("vacuous", f"{cls} diameter check at epsilon = {eps!r} is vacuous (empty set)",
                                {"class": str(cls), "epsilon": eps})
            elif not rep.passed:
                ctx.report.fail(
                    "diameter", f"{cls} at epsilon = {eps!r}: diameters {rep.delta_triple!r}, {rep.delta_pair!r} exceed {rep.bound!r}",
                    {"class": str(cls), "epsilon": eps, "delta_triple": rep.delta_triple,
                     "delta_pair": rep.delta_pair, "bound": rep.bound},
                )
    ctx.report.results["diameters"] = out


def _run(ctx):
    cmd = ctx.report.command
    if cmd == "check":
        _stage_axioms(ctx)
        _stage_cyclicity(ctx)
        return
    if ctx.spec.gmetric.kind != "builder" and not _stage_axioms(ctx):
        return
    if cmd == "classify":
        _stage_classify(ctx)
    elif cmd == "solve":
        _stage_solve(ctx)
    elif cmd == "fset":
        _stage_fset(ctx)
    elif cmd in ("verify", "report"):
        if cmd == "report":
            if "axioms" not in ctx.report.results:
                _stage_axioms(ctx)
        _stage_cyclicity(ctx)
        certs = _stage_classify(ctx)
        if cmd == "report" and (ctx.opts.x0 is not None or ctx.spec.x0 is not None):
            _stage_solve(ctx, fatal=False)
        if cmd == "report":
            _stage_fset(ctx)
        _stage_orbits(ctx, certs)
        _stage_diameters(ctx, certs)


def execute(command: str, spec_path: str, opts: RunOptions = RunOptions()) -> RunReport:
    """Run one command against a spec file (or bundled spec name)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    report = RunReport(command, str(spec_path))
    try:
        spec = load_spec(spec_path)
    except (SpecSyntaxError, SpecSemanticError) as exc:
        report.errors.append({"kind": "parse", "message": str(exc),
                              "line": getattr(exc, "line", None), "column": getattr(exc, "column", None)})
        report.exit_code = EXIT_PARSE
        return report
    except OSError as exc:
        report.errors.append({"kind": "io", "message": str(exc)})
        report.exit_code = EXIT_PARSE
        return report

    report.spec_digest = spec_digest(spec)
    try:
        plan = spec.grid if opts.grid is None else replace(spec.grid, h=opts.grid)
        budget = spec.budget if opts.budget is None else opts.budget
        seed = spec.seed if opts.seed is None else opts.seed
        if budget < 1:
            raise ParameterFault("budget must be positive")
        ctx = _Ctx(spec, opts, CyclicMap.from_spec(spec), plan, budget, seed, report)
        report.results["settings"] = {"grid": plan.h, "max_points": plan.max_points, "budget": budget,
                                      "seed": seed, "epsilons": list(ctx.epsilons)}
        _run(ctx)
    except AfpError as exc:
        err = {"kind": type(exc).__name__, "message": str(exc)}
        point = getattr(exc, "point", None)
        if point is not None:
            err["witness"] = point if not isinstance(point, dict) else {k: float(v) for k, v in point.items()}
        report.errors.append(err)

    if report.errors:
        report.exit_code = EXIT_FAULT
    elif report.failures or (opts.strict and report.warnings):
        report.exit_code = EXIT_FAIL
    return report


def render_text(report: RunReport) -> str:
    """Short human-readable summary of a report."""
    lines = [f"{report.command} {report.spec}"]
    if report.spec_digest:
        lines.append(f"  spec sha256 {report.spec_digest[:16]}")
    r = report.results
    if "axioms" in r:
        ax = r["axioms"]
        bad = [a["axiom"] for a in ax["axioms"] if not a["passed"]]
        lines.append(f"  axioms: {'pass' if ax['passed'] else 'FAIL ' + ','.join(bad)} ({ax['sample_size']} points)")
    if "cyclicity" in r:
        c = r["cyclicity"]
        lines.append(f"  cyclicity: {'pass' if c['passed'] else str(c['violation_count']) + ' violations'}"
                     f" ({c['checked']} points)")
    if "classification" in r:
        for name, c in r["classification"].items():
            rate = "-" if c["rate"] is None else f"{c['rate']:.6g}"
            tag = "admissible" if c["admissible"] else "not admissible"
            lines.append(f"  {name:<19} constant {c['empirical_constant']:.6g}  {tag}  rate {rate}")
    if "solve" in r:
        s = r["solve"]
        lines.append(f"  solve: {s['outcome']} hit_index {s['hit_index']} hit_point {s['hit_point']}")
        if s.get("bound"):
            lines.append(f"  iteration bound n* = {s['bound']['n_star']} at rate {s['bound']['rate']:.6g}")
    for f in r.get("fset", []):
        diam = "" if f["delta_pair"] is None else f"  delta_triple {f['delta_triple']:.6g} delta_pair {f['delta_pair']:.6g}"
        lines.append(f"  F_eps(eps={f['epsilon']:g}): {f['count']} of {f['grid_size']} points{diam}")
    if "orbits" in r:
        o = r["orbits"]
        hit = ", ".join(f"{h['count']} at eps={h['epsilon']:g}" for h in o["hits"])
        lines.append(f"  orbits from {o['starts']} starts: hits {hit}; {o['left_domain']} left the sets;"
                     f" max decay ratio {o['max_decay_ratio']:.6g}")
    for d in r.get("diameters", []):
        verdict = "vacuous" if d["empty"] else ("pass" if d["pass"] else "FAIL")
        lines.append(f"  {d['class']} eps={d['epsilon']:g}: {d['delta_triple']:.6g}, {d['delta_pair']:.6g}"
                     f" <= {d['bound']:.6g} {verdict}")
    for w in report.warnings:
        lines.append(f"warning [{w['kind']}]: {w['message']}")
    for f in report.failures:
        lines.append(f"failure [{f['kind']}]: {f['message']}")
    for e in report.errors:
        lines.append(f"error [{e['kind']}]: {e['message']}")
    lines.append(f"exit {report.exit_code}")
    return "\n".join(lines) + "\n"
