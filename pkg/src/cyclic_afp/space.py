"""Point sets on the real line, G-metrics over them, and axiom checking."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import EmptyGridError, EvaluationFault, GridCapError, ParameterFault
from .expr import ExprAst, evaluate, to_text

__all__ = [
    "DEFAULT_TOL",
    "RealSubset",
    "CarrierSet",
    "GMetricDef",
    "GSpace",
    "GridPlan",
    "AxiomVerdict",
    "AxiomReport",
    "eval_g",
    "g_array",
    "derived_metric",
    "d_array",
    "check_axioms",
    "discretize",
]

DEFAULT_TOL = 1e-9
# grid coordinates are rounded so that k*h reproduces decimal steps exactly
GRID_DECIMALS = 12


@dataclass(frozen=True)
class GridPlan:
    h: float = 0.01
    max_points: int = 1_000_000

    def __post_init__(self):
        if not self.h > 0:
            raise ParameterFault(f"grid step must be positive, got {self.h}")
        if self.max_points < 1:
            raise ParameterFault(f"max_points must be positive, got {self.max_points}")


@dataclass(frozen=True)
class RealSubset:
    """One piece of a carrier set: an interval or a truncated index family."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    lo_open: bool = False
    hi_open: bool = False
    generator: Optional[ExprAst] = None
    k_min: int = 1
    k_max: int = 1000

    def __post_init__(self):
        if self.kind == "interval":
            if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
                raise ParameterFault("interval bounds must be finite")
            if self.lo > self.hi:
                raise ParameterFault(f"interval lower bound {self.lo} exceeds upper bound {self.hi}")
        elif self.kind == "family":
            if self.generator is None:
                raise ParameterFault("family needs a generator expression")
            if self.k_min < 1 or self.k_max < self.k_min:
                raise ParameterFault(f"bad index range {self.k_min}..{self.k_max}")
        else:
            raise ParameterFault(f"unknown subset kind {self.kind!r}")

    @classmethod
    def interval(cls, lo, hi, lo_open=False, hi_open=False):
        return cls("interval", float(lo), float(hi), bool(lo_open), bool(hi_open))

    @classmethod
    def family(cls, generator, k_min=1, k_max=1000):
        return cls("family", generator=generator, k_min=int(k_min), k_max=int(k_max))

    def __str__(self):
        if self.kind == "interval":
            return (
                f"{'(' if self.lo_open else '['}{_fmt(self.lo)}, "
                f"{_fmt(self.hi)}{')' if self.hi_open else ']'}"
            )
        return f"{{{to_text(self.generator)} : k = {self.k_min}..{self.k_max}}}"

    def contains(self, xs, tol=DEFAULT_TOL):
        xs = np.asarray(xs, dtype=float)
        if self.kind == "interval":
            above = xs > self.lo if self.lo_open else xs >= self.lo - tol
            below = xs < self.hi if self.hi_open else xs <= self.hi + tol
            return above & below
        flat = xs.reshape(-1)
        found = _nearest_gap(_sorted_values(self), flat) <= tol
        if _is_monotone(self) and not found.all():
            rest = ~found
            found[rest] = _monotone_member(self, flat[rest], tol)
        return found.reshape(xs.shape)

    def probe_points(self, count=12):
        if self.kind == "interval":
            pts = np.linspace(self.lo, self.hi, count)
            return pts[self.contains(pts)]
        return _family_values(self)[:count]


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e16 else repr(v)


@functools.lru_cache(maxsize=256)
def _family_values(subset: RealSubset) -> np.ndarray:
    ks = np.arange(subset.k_min, subset.k_max + 1, dtype=float)
    try:
        values = evaluate(subset.generator, {"k": ks})
    except EvaluationFault as exc:
        raise EvaluationFault(f"family {subset}: {exc}", exc.point) from None
    if not np.all(np.isfinite(values)):
        k = int(ks[~np.isfinite(values)][0])
        raise EvaluationFault(f"family {subset} produces a non-finite value at k = {k}", {"k": k})
    _, first = np.unique(values, return_index=True)
    values = values[np.sort(first)]
    order = np.argsort(-np.abs(values), kind="stable")
    out = values[order]
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=256)
def _sorted_values(subset: RealSubset) -> np.ndarray:
    out = np.sort(_family_values(subset))
    out.setflags(write=False)
    return out


def _nearest_gap(values, xs):
    if len(values) == 1:
        return np.abs(xs - values[0])
    pos = np.clip(np.searchsorted(values, xs), 1, len(values) - 1)
    return np.minimum(np.abs(xs - values[pos - 1]), np.abs(xs - values[pos]))


# Membership in a monotone family ignores the k_max truncation: the generator
# is inverted over real k in [k_min, _K_LIMIT] and the neighbouring integers
# are tested. Grids stay truncated.
_K_LIMIT = 1e12


@functools.lru_cache(maxsize=256)
def _is_monotone(subset: RealSubset) -> bool:
    ks = np.geomspace(subset.k_min, _K_LIMIT, 400)
    ks = np.unique(np.concatenate([ks, np.arange(subset.k_min, subset.k_min + 50, dtype=float)]))
    try:
        vals = evaluate(subset.generator, {"k": ks})
    except EvaluationFault:
        return False
    if not np.all(np.isfinite(vals)):
        return False
    steps = np.diff(vals)
    return bool(np.all(steps < 0) or np.all(steps > 0))


def _monotone_member(subset: RealSubset, xs, tol):
    gen = subset.generator
    lo = np.full(xs.shape, float(subset.k_min))
    hi = np.full(xs.shape, _K_LIMIT)
    increasing = evaluate(gen, {"k": _K_LIMIT}) > evaluate(gen, {"k": float(subset.k_min)})
    # integer bisection: afterwards x lies between g(lo) and g(hi) = g(lo + 1)
    while np.any(hi - lo > 1):
        mid = np.floor(0.5 * (lo + hi))
        g = evaluate(gen, {"k": mid})
        go_right = g < xs if increasing else g > xs
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    gap = np.minimum(np.abs(evaluate(gen, {"k": lo}) - xs), np.abs(evaluate(gen, {"k": hi}) - xs))
    return gap <= tol


def discretize(subset: RealSubset, plan: GridPlan) -> np.ndarray:
    """Grid points of one subset piece.

    Intervals give ``lo + k*h`` (skipping ``k = 0`` when the left end is
    open and dropping ``hi`` when the right end is open), ascending.
    Families give their generated values for ``k_min..k_max`` with duplicates
    removed, ordered by decreasing magnitude.
    """
    if subset.kind == "family":
        count = subset.k_max - subset.k_min + 1
        if count > plan.max_points:
            raise GridCapError(f"family {subset} has {count} points, cap is {plan.max_points}", count)
        return _family_values(subset).copy()

    lo, hi, h = subset.lo, subset.hi, plan.h
    k0 = 1 if subset.lo_open else 0
    k1 = int(np.floor((hi - lo) / h + 1e-9))
    count = max(k1 - k0 + 1, 0)
    if count > plan.max_points:
        raise GridCapError(f"interval {subset} has {count} grid points at h = {h}, cap is {plan.max_points}", count)
    pts = np.round(lo + np.arange(k0, k1 + 1) * h, GRID_DECIMALS)
    keep = pts < hi if subset.hi_open else pts <= hi
    if subset.lo_open:
        keep &= pts > lo
    pts = pts[keep]
    if pts.size == 0:
        raise EmptyGridError(f"interval {subset} has no grid points at h = {h}")
    return pts


@dataclass(frozen=True)
class CarrierSet:
    """A declared set X_i: the union of one or more subset pieces."""

    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ParameterFault("a carrier set needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    @classmethod
    def of(cls, *parts):
        return cls(tuple(parts))

    def __str__(self):
        return " | ".join(str(p) for p in self.parts)

    def grid(self, plan: GridPlan) -> np.ndarray:
        pieces = [discretize(p, plan) for p in self.parts]
        pts = np.unique(np.concatenate(pieces))
        if pts.size > plan.max_points:
            raise GridCapError(f"set {self} has {pts.size} grid points, cap is {plan.max_points}", pts.size)
        return pts

    def contains(self, xs, tol=DEFAULT_TOL):
        xs = np.asarray(xs, dtype=float)
        out = np.zeros(xs.shape, dtype=bool)
        for p in self.parts:
            out |= p.contains(xs, tol)
        return out

    def probe_points(self, count=12):
        return np.unique(np.concatenate([p.probe_points(count) for p in self.parts]))


@dataclass(frozen=True)
class GMetricDef:
    """Either ``builder`` (max or sum of pairwise distances, scaled) or ``custom``."""

    kind: str = "builder"
    shape: str = "max"
    scale: float = 0.5
    expr: Optional[ExprAst] = None

    def __post_init__(self):
        if self.kind == "builder":
            if self.shape not in ("max", "sum"):
                raise ParameterFault(f"unknown builder shape {self.shape!r}")
            if not self.scale > 0:
                raise ParameterFault(f"builder scale must be positive, got {self.scale}")
        elif self.kind == "custom":
            if self.expr is None:
                raise ParameterFault("custom G-metric needs an expression")
        else:
            raise ParameterFault(f"unknown G-metric kind {self.kind!r}")

    @classmethod
    def builder(cls, shape="max", scale=0.5):
        return cls("builder", shape, float(scale))

    @classmethod
    def custom(cls, expr):
        return cls("custom", expr=expr)

    def __str__(self):
        if self.kind == "builder":
            return f"{self.shape} {_fmt(self.scale)}"
        return f"custom {to_text(self.expr)}"

    def __call__(self, x, y, z):
        if self.kind == "builder":
            dxy, dyz, dxz = np.abs(x - y), np.abs(y - z), np.abs(x - z)
            if self.shape == "max":
                return self.scale * np.maximum(np.maximum(dxy, dyz), dxz)
            return self.scale * (dxy + dyz + dxz)
        try:
            return evaluate(self.expr, {"x": x, "y": y, "z": z})
        except EvaluationFault as exc:
            triple = exc.point and (exc.point.get("x"), exc.point.get("y"), exc.point.get("z"))
            raise EvaluationFault(f"G-metric evaluation failed at {triple}: {exc}", triple) from None


@dataclass(frozen=True)
class GSpace:
    subsets: tuple
    gmetric: GMetricDef = field(default_factory=GMetricDef)

    def __post_init__(self):
        object.__setattr__(self, "subsets", tuple(self.subsets))
        if not self.subsets:
            raise ParameterFault("a space needs at least one set")

    @property
    def m(self):
        return len(self.subsets)

    @cached_property
    def symmetric(self) -> bool:
        if self.gmetric.kind == "builder":
            return True
        pts = np.unique(np.concatenate([s.probe_points() for s in self.subsets]))
        x, y = pts[:, None], pts[None, :]
        return bool(np.all(np.abs(self.gmetric(x, y, y) - self.gmetric(y, x, x)) <= DEFAULT_TOL))

    def union_grid(self, plan: GridPlan) -> np.ndarray:
        return np.unique(np.concatenate([s.grid(plan) for s in self.subsets]))


def eval_g(space: GSpace, x: float, y: float, z: float) -> float:
    return float(space.gmetric(float(x), float(y), float(z)))


def g_array(space: GSpace, x, y, z):
    return np.asarray(space.gmetric(x, y, z), dtype=float)


def derived_metric(space: GSpace, x: float, y: float) -> float:
    return eval_g(space, x, y, y) + eval_g(space, y, x, x)


def d_array(space: GSpace, x, y):
    """Vectorised ``G(x,y,y) + G(y,x,x)``."""
    return g_array(space, x, y, y) + g_array(space, y, x, x)


@dataclass(frozen=True)
class AxiomVerdict:
    axiom: str
    passed: bool
    checked: int
    witness: Optional[tuple] = None
    detail: str = ""

    def to_dict(self):
        return {
            "axiom": self.axiom,
            "passed": self.passed,
            "checked": self.checked,
            "witness": list(self.witness) if self.witness is not None else None,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class AxiomReport:
    verdicts: tuple
    sample_size: int
    tol: float

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def __getitem__(self, axiom):
        for v in self.verdicts:
            if v.axiom == axiom:
                return v
        raise KeyError(axiom)

    def to_dict(self):
        return {
            "passed": self.passed,
            "sample_size": self.sample_size,
            "tol": self.tol,
            "axioms": [v.to_dict() for v in self.verdicts],
        }


def _first(mask):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0]) if len(idx) else None


def check_axioms(space: GSpace, sample, tol: float = DEFAULT_TOL) -> AxiomReport:
    """Exhaustively test G1-G5 over every ordered triple of ``sample``.

    The rectangle inequality additionally quantifies over every ``a`` in the
    sample, so the cost is O(n^4) comparisons; keep samples near 100 points.
    """
    pts = np.unique(np.asarray(sample, dtype=float))
    if pts.size < 2:
        raise ParameterFault("axiom check needs at least two distinct sample points")
    n = pts.size
    gt = np.broadcast_to(
        g_array(space, pts[:, None, None], pts[None, :, None], pts[None, None, :]), (n, n, n)
    )
    ii = np.arange(n)
    verdicts = []

    def verdict(name, bad, total, make_witness, detail):
        hit = _first(bad)
        if hit is None:
            verdicts.append(AxiomVerdict(name, True, total))
        else:
            w = make_witness(hit)
            verdicts.append(AxiomVerdict(name, False, total, w, detail(hit, w)))

    diag = gt[ii, ii, ii]
    verdict(
        "G1", diag > tol, n,
        lambda h: (float(pts[h[0]]),) * 3,
        lambda h, w: f"G{w} = {float(diag[h[0]])!r} != 0",
    )

    gxxy = gt[ii, ii, :]  # gxxy[i, j] = G(x_i, x_i, x_j)
    off = ~np.eye(n, dtype=bool)
    verdict(
        "G2", (gxxy <= 0) & off, n * (n - 1),
        lambda h: (float(pts[h[0]]), float(pts[h[0]]), float(pts[h[1]])),
        lambda h, w: f"G{w} = {float(gxxy[h])!r} is not positive",
    )

    # G3: G(x,x,y) <= G(x,y,z) whenever z != y
    bad3 = (gxxy[:, :, None] > gt + tol) & off[None, :, :]
    verdict(
        "G3", bad3, n * n * (n - 1),
        lambda h: tuple(float(pts[i]) for i in h),
        lambda h, w: f"G({w[0]}, {w[0]}, {w[1]}) = {float(gxxy[h[0], h[1]])!r} > G{w} = {float(gt[h])!r}",
    )

    bad4 = np.zeros((n, n, n), dtype=bool)
    for perm in itertools.permutations((0, 1, 2)):
        bad4 |= np.abs(gt - gt.transpose(perm)) > tol
    verdict(
        "G4", bad4, n ** 3,
        lambda h: tuple(float(pts[i]) for i in h),
        lambda h, w: "G is not symmetric in its arguments at " + str(w),
    )

    gxaa = gt[:, ii, ii]  # gxaa[i, a] = G(x_i, a, a)
    hit5 = None
    for a in range(n):
        bad = gt > gxaa[:, a][:, None, None] + gt[a][None, :, :] + tol
        h = _first(bad)
        if h is not None:
            hit5 = h + (a,)
            break
    if hit5 is None:
        verdicts.append(AxiomVerdict("G5", True, n ** 4))
    else:
        x, y, z, a = (float(pts[i]) for i in hit5)
        lhs = gt[hit5[:3]]
        rhs = gxaa[hit5[0], hit5[3]] + gt[hit5[3], hit5[1], hit5[2]]
        verdicts.append(
            AxiomVerdict(
                "G5", False, n ** 4, (x, y, z, a),
                f"G({x}, {y}, {z}) = {float(lhs)!r} > G(x,a,a) + G(a,y,z) = {float(rhs)!r} with a = {a}",
            )
        )
    return AxiomReport(tuple(verdicts), n, tol)
