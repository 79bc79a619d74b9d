"""Problem-definition files: parsing, validation and canonical serialization.

A file is a sequence of ``[section]`` headers followed by ``key = value``
lines; ``#`` starts a comment line. See ``docs/spec-format.md`` for the
grammar. ``serialize_spec`` emits the canonical form, which parses back to
an equal :class:`ProblemSpec`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Union

from .errors import SpecSemanticError, SpecSyntaxError
from .expr import ExprAst, evaluate, parse_expr, to_text
from .space import CarrierSet, GMetricDef, GridPlan, RealSubset, _fmt

__all__ = [
    "IntervalGuard",
    "SetGuard",
    "Branch",
    "PiecewiseDef",
    "ProblemSpec",
    "parse_spec",
    "serialize_spec",
    "spec_digest",
    "BUNDLED_SPECS",
    "bundled_spec_text",
    "load_bundled",
    "load_spec",
]

BUNDLED_SPECS = ("example_cyclic_seq", "example_3_8", "example_4_12", "example_4_15")


@dataclass(frozen=True)
class IntervalGuard:
    interval: RealSubset

    def __str__(self):
        return str(self.interval)


@dataclass(frozen=True)
class SetGuard:
    """Matches points taken from the declared set ``X_{index+1}`` (0-based)."""

    index: int

    def __str__(self):
        return f"X{self.index + 1}"


@dataclass(frozen=True)
class Branch:
    guard: Union[IntervalGuard, SetGuard]
    body: ExprAst


@dataclass(frozen=True)
class PiecewiseDef:
    branches: tuple
    default: Optional[ExprAst] = None


@dataclass(frozen=True)
class ProblemSpec:
    subsets: tuple
    map: Union[ExprAst, PiecewiseDef]
    epsilons: tuple
    gmetric: GMetricDef = field(default_factory=GMetricDef)
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None
    grid: GridPlan = field(default_factory=GridPlan)
    budget: int = 1_000_000
    seed: int = 42
    x0: Optional[float] = None
    max_iter: int = 1_000_000
    divergence_factor: float = 1000.0
    name: str = ""
    note: str = ""

    @property
    def m(self):
        return len(self.subsets)


_SECTIONS = {
    "meta": ("name", "note"),
    "space": ("m", "X*", "gmetric"),
    "map": ("T", "map", "branch", "default"),
    "params": ("alpha", "beta", "gamma", "epsilon"),
    "run": ("grid", "max_points", "budget", "seed", "x0", "max_iter", "divergence"),
}
_REPEATABLE = {"branch"}


def _split_plain(text, sep):
    out, start = [], 0
    for piece in text.split(sep):
        out.append((piece, start))
        start += len(piece) + 1
    return out


def _split_top(text, sep):
    """Split on ``sep`` outside parentheses; yields (piece, offset) pairs."""
    depth, start, out = 0, 0, []
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            out.append((text[start:i], start))
            start = i + 1
    out.append((text[start:], start))
    return out


def _strip(text, col):
    lead = len(text) - len(text.lstrip())
    return text.strip(), col + lead


class _Reader:
    def __init__(self, text):
        self.text = text
        self.entries = {}  # (section, key) -> list of (value, line, col)

    def read(self):
        section = None
        for lineno, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.rstrip()
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if stripped.startswith("["):
                col = line.index("[") + 1
                if not stripped.endswith("]"):
                    raise SpecSyntaxError("unterminated section header", lineno, col)
                name = stripped[1:-1].strip()
                if name not in _SECTIONS:
                    raise SpecSemanticError(f"unknown section [{name}]", name)
                section = name
                continue
            if "=" not in line:
                raise SpecSyntaxError("expected 'key = value'", lineno, len(line) - len(line.lstrip()) + 1)
            eq = line.index("=")
            key = line[:eq].strip()
            if not key:
                raise SpecSyntaxError("missing key before '='", lineno, eq + 1)
            if section is None:
                raise SpecSyntaxError(f"key {key!r} outside any section", lineno, line.index(key) + 1)
            allowed = _SECTIONS[section]
            if key not in allowed and not ("X*" in allowed and key[:1] == "X" and key[1:].isdigit()):
                raise SpecSemanticError(f"unknown key in [{section}]", key)
            value, col = _strip(line[eq + 1:], eq + 1)
            slot = self.entries.setdefault((section, key), [])
            if slot and key not in _REPEATABLE:
                raise SpecSemanticError(f"duplicate key (line {lineno})", key)
            slot.append((value, lineno, col))
        return self.entries


def _const(text, line, col, key):
    text, col = _strip(text, col)
    ast = parse_expr(text, (), line=line, col=col)
    return float(evaluate(ast, {}))


def _int(text, line, col, key):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        raise SpecSyntaxError(f"{key} must be an integer", line, col + 1) from None


def _interval(text, line, col):
    text, col = _strip(text, col)
    if len(text) < 2 or text[0] not in "([" or text[-1] not in ")]":
        raise SpecSyntaxError("expected an interval such as (0, 0.8]", line, col + 1)
    pieces = _split_top(text[1:-1], ",")
    if len(pieces) != 2:
        raise SpecSyntaxError("an interval needs exactly two bounds", line, col + 1)
    (lo_t, lo_off), (hi_t, hi_off) = pieces
    lo = _const(lo_t, line, col + 1 + lo_off, "bound")
    hi = _const(hi_t, line, col + 1 + hi_off, "bound")
    if lo > hi or (lo == hi and (text[0] == "(" or text[-1] == ")")):
        raise SpecSemanticError(f"empty interval {text} (line {line})", "interval")
    return RealSubset.interval(lo, hi, text[0] == "(", text[-1] == ")")


def _family(text, line, col):
    text, col = _strip(text, col)
    if not text.endswith("}"):
        raise SpecSyntaxError("unterminated family, expected '}'", line, col + len(text))
    body = text[1:-1]
    if ":" not in body:
        raise SpecSyntaxError("family needs ': k = a..b'", line, col + 1)
    colon = body.index(":")
    gen_t, gen_col = _strip(body[:colon], col + 1)
    gen = parse_expr(gen_t, ("k",), line=line, col=gen_col)
    rng = body[colon + 1:]
    if "=" not in rng or ".." not in rng:
        raise SpecSyntaxError("family range must read 'k = a..b'", line, col + 2 + colon)
    var, bounds = rng.split("=", 1)
    if var.strip() != "k":
        lead = len(var) - len(var.lstrip())
        raise SpecSyntaxError("family index must be named k", line, col + 3 + colon + lead)
    a, b = bounds.split("..", 1)
    range_col = col + 2 + colon + len(var) + 1
    k_min, k_max = _int(a, line, range_col, "k"), _int(b, line, range_col, "k")
    if k_min < 1 or k_max < k_min:
        raise SpecSemanticError(f"family index range {k_min}..{k_max} is invalid (line {line})", "k")
    return RealSubset.family(gen, k_min, k_max)


def _carrier(text, line, col):
    parts = []
    for piece, off in _split_plain(text, "|"):
        piece_s, pcol = _strip(piece, col + off)
        if not piece_s:
            raise SpecSyntaxError("empty set component", line, col + off + 1)
        if piece_s.startswith("{"):
            parts.append(_family(piece_s, line, pcol))
        else:
            parts.append(_interval(piece_s, line, pcol))
    return CarrierSet(tuple(parts))


def _gmetric(text, line, col):
    head, _, rest = text.partition(" ")
    rest_col = col + len(head) + 1
    if head in ("max", "sum"):
        scale = _const(rest, line, rest_col, "gmetric")
        if not scale > 0:
            raise SpecSemanticError("builder scale must be positive", "gmetric")
        return GMetricDef.builder(head, scale)
    if head == "custom":
        expr_t, ecol = _strip(rest, rest_col)
        return GMetricDef.custom(parse_expr(expr_t, ("x", "y", "z"), line=line, col=ecol))
    raise SpecSyntaxError("gmetric must start with max, sum or custom", line, col + 1)


def _branch(text, line, col, m):
    pieces = _split_plain(text, ":")
    if len(pieces) != 2:
        raise SpecSyntaxError("branch must read '<guard> : <expression>'", line, col + 1)
    (guard_t, _), (body_t, body_off) = pieces
    guard_s, gcol = _strip(guard_t, col)
    if guard_s[:1] == "X" and guard_s[1:].isdigit():
        idx = int(guard_s[1:]) - 1
        if not 0 <= idx < m:
            raise SpecSemanticError(f"guard {guard_s} names an undeclared set (line {line})", "branch")
        guard = SetGuard(idx)
    else:
        guard = IntervalGuard(_interval(guard_s, line, gcol))
    body_s, bcol = _strip(body_t, col + body_off)
    return Branch(guard, parse_expr(body_s, ("x",), line=line, col=bcol))


def parse_spec(text: str) -> ProblemSpec:
    """Parse problem-spec text into a fully resolved :class:`ProblemSpec`."""
    entries = _Reader(text).read()

    def get(section, key):
        vals = entries.get((section, key))
        return vals[0] if vals else None

    # a lone map expression is parsed first so its syntax errors win over missing keys
    single = get("map", "T") or get("map", "map")
    single_ast = parse_expr(single[0], ("x",), line=single[1], col=single[2]) if single else None

    m_entry = get("space", "m")
    if m_entry is None:
        raise SpecSemanticError("missing", "m")
    m = _int(m_entry[0], m_entry[1], m_entry[2], "m")
    if m < 1:
        raise SpecSemanticError("must be at least 1", "m")
    declared = sorted(int(k[1:]) for (s, k) in entries if s == "space" and k.startswith("X"))
    if declared != list(range(1, m + 1)):
        raise SpecSemanticError(f"m = {m} but sets {['X%d' % d for d in declared]} are declared", "m")
    subsets = tuple(_carrier(*get("space", f"X{i}")) for i in range(1, m + 1))

    g = get("space", "gmetric")
    gmetric = _gmetric(*g) if g else GMetricDef()

    if get("map", "T") and get("map", "map"):
        raise SpecSemanticError("give the map once, as T", "map")
    branches = entries.get(("map", "branch"), [])
    default = get("map", "default")
    if single and (branches or default):
        raise SpecSemanticError("use either T or branch/default lines, not both", "T")
    if single:
        the_map = single_ast
    elif branches:
        the_map = PiecewiseDef(
            tuple(_branch(v, ln, c, m) for v, ln, c in branches),
            parse_expr(default[0], ("x",), line=default[1], col=default[2]) if default else None,
        )
    else:
        raise SpecSemanticError("missing map definition", "T")

    params = {}
    for key in ("alpha", "beta", "gamma"):
        e = get("params", key)
        params[key] = _const(*e, key) if e else None
    eps_entry = get("params", "epsilon")
    if eps_entry is None:
        raise SpecSemanticError("at least one value required", "epsilon")
    value, line, col = eps_entry
    epsilons = tuple(_const(t, line, col + off, "epsilon") for t, off in _split_top(value, ","))
    if any(not e > 0 for e in epsilons):
        raise SpecSemanticError("all values must be positive", "epsilon")

    run = {}
    for key, conv, dflt in (
        ("grid", _const, 0.01),
        ("max_points", _int, 1_000_000),
        ("budget", _int, 1_000_000),
        ("seed", _int, 42),
        ("x0", _const, None),
        ("max_iter", _int, 1_000_000),
        ("divergence", _const, 1000.0),
    ):
        e = get("run", key)
        run[key] = conv(*e, key) if e else dflt
    if not run["grid"] > 0:
        raise SpecSemanticError("must be positive", "grid")
    if run["max_points"] < 1:
        raise SpecSemanticError("must be positive", "max_points")
    if run["budget"] < 1:
        raise SpecSemanticError("must be positive", "budget")
    if run["max_iter"] < 1:
        raise SpecSemanticError("must be positive", "max_iter")
    if not run["divergence"] > 1:
        raise SpecSemanticError("must exceed 1", "divergence")

    name = get("meta", "name")
    note = get("meta", "note")
    return ProblemSpec(
        subsets=subsets,
        map=the_map,
        epsilons=epsilons,
        gmetric=gmetric,
        alpha=params["alpha"],
        beta=params["beta"],
        gamma=params["gamma"],
        grid=GridPlan(run["grid"], run["max_points"]),
        budget=run["budget"],
        seed=run["seed"],
        x0=run["x0"],
        max_iter=run["max_iter"],
        divergence_factor=run["divergence"],
        name=name[0] if name else "",
        note=note[0] if note else "",
    )


def serialize_spec(spec: ProblemSpec) -> str:
    """Canonical text: fixed section and key order, minimal parentheses."""
    out = []
    if spec.name or spec.note:
        out.append("[meta]")
        if spec.name:
            out.append(f"name = {spec.name}")
        if spec.note:
            out.append(f"note = {spec.note}")
        out.append("")
    out.append("[space]")
    out.append(f"m = {spec.m}")
    for i, s in enumerate(spec.subsets, start=1):
        out.append(f"X{i} = {s}")
    out.append(f"gmetric = {spec.gmetric}")
    out.append("")
    out.append("[map]")
    if isinstance(spec.map, PiecewiseDef):
        for br in spec.map.branches:
            out.append(f"branch = {br.guard} : {to_text(br.body)}")
        if spec.map.default is not None:
            out.append(f"default = {to_text(spec.map.default)}")
    else:
        out.append(f"T = {to_text(spec.map)}")
    out.append("")
    out.append("[params]")
    for key in ("alpha", "beta", "gamma"):
        v = getattr(spec, key)
        if v is not None:
            out.append(f"{key} = {_fmt(v)}")
    out.append("epsilon = " + ", ".join(_fmt(e) for e in spec.epsilons))
    out.append("")
    out.append("[run]")
    out.append(f"grid = {_fmt(spec.grid.h)}")
    out.append(f"max_points = {spec.grid.max_points}")
    out.append(f"budget = {spec.budget}")
    out.append(f"seed = {spec.seed}")
    if spec.x0 is not None:
        out.append(f"x0 = {_fmt(spec.x0)}")
    out.append(f"max_iter = {spec.max_iter}")
    out.append(f"divergence = {_fmt(spec.divergence_factor)}")
    return "\n".join(out) + "\n"


def spec_digest(spec: ProblemSpec) -> str:
    return hashlib.sha256(serialize_spec(spec).encode("utf-8")).hexdigest()


def bundled_spec_text(name: str) -> str:
    if name not in BUNDLED_SPECS:
        raise KeyError(f"no bundled spec named {name!r}; choose from {', '.join(BUNDLED_SPECS)}")
    return (resources.files("cyclic_afp") / "specs" / f"{name}.spec").read_text(encoding="utf-8")


def load_bundled(name: str) -> ProblemSpec:
    return parse_spec(bundled_spec_text(name))


def load_spec(path_or_name: str) -> ProblemSpec:
    """Load a spec from a file path, or by bundled name when no such file exists."""
    import os

    if not os.path.exists(path_or_name) and path_or_name in BUNDLED_SPECS:
        return load_bundled(path_or_name)
    with open(path_or_name, encoding="utf-8") as fh:
        return parse_spec(fh.read())
