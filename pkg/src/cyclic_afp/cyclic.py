"""Cyclical operators over X_1..X_m and their contraction classes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    EmptyDomainFault,
    EmptyGridError,
    EvaluationFault,
    ParameterFault,
    UnmatchedPointFault,
    UnsupportedClassFault,
)
from .expr import ExprAst, evaluate
from .space import DEFAULT_TOL, GridPlan, GSpace, d_array
from .speclang import IntervalGuard, PiecewiseDef, ProblemSpec, SetGuard

__all__ = [
    "ADMISSIBLE_MARGIN",
    "OperatorClass",
    "ClassParams",
    "CyclicMap",
    "CyclicityReport",
    "ClassResult",
    "ClassificationReport",
    "MohsenialhosseiniCheck",
    "apply_map",
    "verify_cyclicity",
    "pair_ratio",
    "empirical_constant",
    "fit_mohsenialhosseini",
    "verify_mohsenialhosseini",
    "contraction_rate",
    "classify",
]

ADMISSIBLE_MARGIN = 1e-6
DENOM_TOL = 1e-12


class OperatorClass(str, enum.Enum):
    GAlphaPlain = "GAlphaPlain"
    GMohseni = "GMohseni"
    GChatterjea = "GChatterjea"
    GMohsenialhosseini = "GMohsenialhosseini"
    GMohseniSemi = "GMohseniSemi"

    def __str__(self):
        return self.value

    @property
    def alpha_upper(self) -> float:
        return 1.0 if self in (OperatorClass.GAlphaPlain, OperatorClass.GMohsenialhosseini) else 0.5


RATIO_CLASSES = (
    OperatorClass.GAlphaPlain,
    OperatorClass.GMohseni,
    OperatorClass.GChatterjea,
    OperatorClass.GMohseniSemi,
)


@dataclass(frozen=True)
class ClassParams:
    alpha: float
    beta: float = 0.0
    gamma: float = 0.0

    @property
    def eta(self) -> float:
        if self.beta >= 1 or self.gamma >= 1:
            raise ParameterFault("eta is undefined for beta or gamma >= 1")
        return max(self.alpha, self.beta / (1 - self.beta), self.gamma / (1 - self.gamma))

    def to_dict(self):
        d = {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}
        if self.beta < 1 and self.gamma < 1:
            d["eta"] = self.eta
        return d


def check_params(cls: OperatorClass, params: ClassParams):
    """Raise ParameterFault unless ``params`` lie in the class's range."""
    a, b, g = params.alpha, params.beta, params.gamma
    if cls is OperatorClass.GMohsenialhosseini:
        if not (0 <= a < 1 and 0 <= b < 0.5 and 0 <= g < 0.5):
            raise ParameterFault(
                f"{cls} needs alpha in [0, 1), beta and gamma in [0, 1/2); got {a}, {b}, {g}"
            )
    elif not 0 < a < cls.alpha_upper:
        raise ParameterFault(f"{cls} needs alpha in (0, {cls.alpha_upper}); got {a}")


@dataclass(frozen=True)
class CyclicMap:
    domain: GSpace
    body: Union[ExprAst, PiecewiseDef]

    @classmethod
    def from_spec(cls, spec: ProblemSpec) -> "CyclicMap":
        return cls(GSpace(spec.subsets, spec.gmetric), spec.map)

    @property
    def m(self):
        return self.domain.m

    def _guard(self, guard, xs, index):
        if isinstance(guard, SetGuard):
            if index is not None:
                return np.full(xs.shape, guard.index == index)
            return self.domain.subsets[guard.index].contains(xs)
        return guard.interval.contains(xs, tol=0.0)

    def _eval_body(self, body, xs, strict):
        try:
            return evaluate(body, {"x": xs})
        except EvaluationFault as exc:
            if strict:
                raise
            out = np.full(xs.shape, np.nan)
            for n, x in enumerate(xs):
                try:
                    out[n] = evaluate(body, {"x": float(x)})
                except EvaluationFault:
                    pass
            return out

    def apply(self, xs, index: Optional[int] = None, strict: bool = True) -> np.ndarray:
        """Vectorised T. ``index`` is the 0-based set the points are taken from.

        With ``strict=False`` unmatched points and arithmetic faults become NaN.
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if not isinstance(self.body, PiecewiseDef):
            return self._eval_body(self.body, xs, strict)
        out = np.full(xs.shape, np.nan)
        done = np.zeros(xs.shape, dtype=bool)
        for br in self.body.branches:
            hit = self._guard(br.guard, xs, index) & ~done
            if hit.any():
                out[hit] = self._eval_body(br.body, xs[hit], strict)
                done |= hit
        if self.body.default is not None and not done.all():
            rest = ~done
            out[rest] = self._eval_body(self.body.default, xs[rest], strict)
            done[:] = True
        if strict and not done.all():
            x = float(xs[~done][0])
            raise UnmatchedPointFault(f"no branch of the map covers x = {x!r}", x)
        return out


def apply_map(map: CyclicMap, x: float, index: Optional[int] = None) -> float:
    return float(map.apply([x], index)[0])


@dataclass(frozen=True)
class CyclicityReport:
    passed: bool
    checked: int
    violations: tuple  # (source set, x, T(x) or None, target set), 1-based sets

    def to_dict(self):
        return {
            "passed": self.passed,
            "checked": self.checked,
            "violations": [
                {"set": s, "x": x, "tx": tx, "target": t} for s, x, tx, t in self.violations
            ],
        }


def _grids(map: CyclicMap, plan: GridPlan):
    try:
        return [s.grid(plan) for s in map.domain.subsets]
    except EmptyGridError as exc:
        raise EmptyDomainFault(str(exc)) from None


def verify_cyclicity(map: CyclicMap, plan: GridPlan = GridPlan(), tol: float = DEFAULT_TOL) -> CyclicityReport:
    violations = []
    checked = 0
    grids = _grids(map, plan)
    for i, pts in enumerate(grids):
        j = (i + 1) % map.m
        images = map.apply(pts, index=i, strict=False)
        ok = np.isfinite(images)
        ok[ok] = map.domain.subsets[j].contains(images[ok], tol)
        checked += pts.size
        for x, tx in zip(pts[~ok], images[~ok]):
            violations.append((i + 1, float(x), float(tx) if np.isfinite(tx) else None, j + 1))
    return CyclicityReport(not violations, checked, tuple(violations))


@dataclass
class _PairData:
    x: np.ndarray
    y: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    exhaustive: bool

    @property
    def size(self):
        return self.x.size


def _blocks(m, both_orientations):
    blocks = [(i, (i + 1) % m) for i in range(m)]
    if both_orientations:
        blocks += [(j, i) for i, j in blocks]
    seen, out = set(), []
    for b in blocks:
        if b not in seen:
            seen.add(b)
            out.append(b)
    return out


def _pairs(map: CyclicMap, plan: GridPlan, blocks, budget: int, seed: int) -> _PairData:
    if budget < 1:
        raise ParameterFault("budget must be at least 1")
    grids = _grids(map, plan)
    images = [map.apply(g, index=i) for i, g in enumerate(grids)]
    sizes = np.array([grids[i].size * grids[j].size for i, j in blocks], dtype=np.int64)
    total = int(sizes.sum())
    xs, ys, txs, tys = [], [], [], []
    if total <= budget:
        for i, j in blocks:
            a, b = np.meshgrid(np.arange(grids[i].size), np.arange(grids[j].size), indexing="ij")
            a, b = a.ravel(), b.ravel()
            xs.append(grids[i][a]); txs.append(images[i][a])
            ys.append(grids[j][b]); tys.append(images[j][b])
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, total, size=budget)
        starts = np.concatenate([[0], np.cumsum(sizes)])
        which = np.searchsorted(starts, picks, side="right") - 1
        for n, (i, j) in enumerate(blocks):
            local = picks[which == n] - starts[n]
            a, b = local // grids[j].size, local % grids[j].size
            xs.append(grids[i][a]); txs.append(images[i][a])
            ys.append(grids[j][b]); tys.append(images[j][b])
        exhaustive = False
    cat = np.concatenate
    return _PairData(cat(xs), cat(ys), cat(txs), cat(tys), exhaustive)


def _ratios(space: GSpace, cls: OperatorClass, x, y, tx, ty):
    num = d_array(space, tx, ty)
    if cls is OperatorClass.GAlphaPlain:
        den = d_array(space, x, y)
    elif cls is OperatorClass.GMohseni:
        den = d_array(space, x, y) + num
    elif cls is OperatorClass.GChatterjea:
        den = d_array(space, x, ty) + d_array(space, y, tx)
    elif cls is OperatorClass.GMohseniSemi:
        den = d_array(space, x, y) + d_array(space, x, tx)
    else:
        raise UnsupportedClassFault(f"{cls} has no single-ratio form; use verify_mohsenialhosseini")
    safe = den > DENOM_TOL
    out = np.zeros(np.shape(num))
    np.divide(num, den, out=out, where=safe)
    return out


def pair_ratio(space: GSpace, map: CyclicMap, cls: OperatorClass, x: float, y: float,
               x_index: Optional[int] = None, y_index: Optional[int] = None) -> float:
    cls = OperatorClass(cls)
    if cls is OperatorClass.GMohsenialhosseini:
        raise UnsupportedClassFault(f"{cls} has no single-ratio form; use verify_mohsenialhosseini")
    tx = map.apply([x], x_index)
    ty = map.apply([y], y_index)
    return float(_ratios(space, cls, np.array([x], float), np.array([y], float), tx, ty)[0])


def _argmax_lex(values, xs, ys):
    top = values.max()
    idx = np.flatnonzero(values == top)
    best = idx[np.lexsort((ys[idx], xs[idx]))[0]]
    return int(best)


@dataclass(frozen=True)
class ClassResult:
    cls: OperatorClass
    empirical_constant: float
    admissible: bool
    witness: tuple
    pairs_examined: int
    exhaustive: bool
    params: Optional[ClassParams] = None

    def to_dict(self):
        d = {
            "class": str(self.cls),
            "empirical_constant": self.empirical_constant,
            "admissible": self.admissible,
            "witness": list(self.witness),
            "pairs_examined": self.pairs_examined,
            "exhaustive": self.exhaustive,
        }
        if self.params is not None:
            d["params"] = self.params.to_dict()
        return d


def empirical_constant(space: GSpace, map: CyclicMap, cls: OperatorClass, budget: int = 1_000_000,
                       seed: int = 42, plan: GridPlan = GridPlan()) -> ClassResult:
    """Largest per-pair ratio of the class inequality over grid cross pairs.

    Pairs run over x in X_i, y in X_{i+1}; exhaustive when they number at most
    ``budget``, otherwise ``budget`` pairs drawn uniformly with ``seed``.
    """
    cls = OperatorClass(cls)
    if cls is OperatorClass.GMohsenialhosseini:
        return fit_mohsenialhosseini(space, map, budget, seed, plan)
    pairs = _pairs(map, plan, _blocks(map.m, cls is OperatorClass.GMohseniSemi), budget, seed)
    r = _ratios(space, cls, pairs.x, pairs.y, pairs.tx, pairs.ty)
    k = _argmax_lex(r, pairs.x, pairs.y)
    const = float(r[k])
    return ClassResult(
        cls, const, const < cls.alpha_upper - ADMISSIBLE_MARGIN,
        (float(pairs.x[k]), float(pairs.y[k])), pairs.size, pairs.exhaustive,
    )


def fit_mohsenialhosseini(space: GSpace, map: CyclicMap, budget: int = 1_000_000, seed: int = 42,
                          plan: GridPlan = GridPlan()) -> ClassResult:
    """Smallest eta = max(alpha, gamma/(1-gamma)) covering every sampled pair.

    The beta condition has the same form as the alpha condition with a tighter
    range, so beta is fixed at 0. Each pair needs either its bracketed ratio
    below alpha or its Chatterjea-type ratio below gamma; sweeping alpha over
    the sorted bracketed ratios gives the optimum in O(P log P).
    """
    pairs = _pairs(map, plan, _blocks(map.m, False), budget, seed)
    r1 = _ratios(space, OperatorClass.GMohseni, pairs.x, pairs.y, pairs.tx, pairs.ty)
    r3 = _ratios(space, OperatorClass.GChatterjea, pairs.x, pairs.y, pairs.tx, pairs.ty)
    order = np.argsort(-r1, kind="stable")
    r1s, r3s = r1[order], r3[order]
    alphas = np.concatenate([r1s, [0.0]])
    gammas = np.concatenate([[0.0], np.maximum.accumulate(r3s)])
    with np.errstate(divide="ignore"):
        etas = np.maximum(alphas, np.where(gammas < 1, gammas / (1 - gammas), np.inf))
    feasible = (alphas < 1 - ADMISSIBLE_MARGIN) & (gammas < 0.5 - ADMISSIBLE_MARGIN)
    if feasible.any():
        j = int(np.flatnonzero(feasible)[np.argmin(etas[feasible])])
        admissible = True
    else:
        j, admissible = 0, False
    alpha, gamma = float(alphas[j]), float(gammas[j])
    params = ClassParams(alpha, 0.0, gamma)
    # witness: the pair that pins whichever term attains eta
    if j > 0 and gamma / (1 - gamma) >= alpha:
        k = int(order[int(np.argmax(r3s[:j]))])
    else:
        k = int(order[min(j, r1s.size - 1)])
    return ClassResult(
        OperatorClass.GMohsenialhosseini, params.eta, admissible,
        (float(pairs.x[k]), float(pairs.y[k])), pairs.size, pairs.exhaustive, params,
    )


@dataclass(frozen=True)
class MohsenialhosseiniCheck:
    holds: bool
    eta: float
    failing_pairs: tuple
    rate_condition: bool  # 3*eta < 1
    pairs_examined: int

    def to_dict(self):
        return {
            "holds": self.holds,
            "eta": self.eta,
            "rate_condition": self.rate_condition,
            "pairs_examined": self.pairs_examined,
            "failing_pairs": [list(p) for p in self.failing_pairs],
        }


def verify_mohsenialhosseini(space: GSpace, map: CyclicMap, params: ClassParams, budget: int = 1_000_000,
                             seed: int = 42, plan: GridPlan = GridPlan(),
                             tol: float = DEFAULT_TOL, max_failures: int = 20) -> MohsenialhosseiniCheck:
    """Check that every cross pair satisfies at least one of the three inequalities."""
    check_params(OperatorClass.GMohsenialhosseini, params)
    pairs = _pairs(map, plan, _blocks(map.m, False), budget, seed)
    x, y, tx, ty = pairs.x, pairs.y, pairs.tx, pairs.ty
    lhs = d_array(space, tx, ty)
    bracket = d_array(space, x, y) + lhs
    cross = d_array(space, x, ty) + d_array(space, y, tx)
    ok = (lhs <= params.alpha * bracket + tol) | (lhs <= params.beta * bracket + tol) | (lhs <= params.gamma * cross + tol)
    bad = np.flatnonzero(~ok)
    failing = tuple((float(x[k]), float(y[k])) for k in bad[:max_failures])
    eta = params.eta
    return MohsenialhosseiniCheck(bool(ok.all()), eta, failing, 3 * eta < 1, pairs.size)


def contraction_rate(cls: OperatorClass, params: ClassParams) -> Optional[float]:
    """Geometric factor per step implied by the class, or None when it is >= 1."""
    cls = OperatorClass(cls)
    check_params(cls, params)
    a = params.alpha
    if cls is OperatorClass.GAlphaPlain:
        rate = a
    elif cls in (OperatorClass.GMohseni, OperatorClass.GChatterjea):
        rate = a / (1 - a)
    elif cls is OperatorClass.GMohseniSemi:
        rate = 2 * a
    else:
        rate = 3 * params.eta
    return rate if rate < 1 else None


@dataclass(frozen=True)
class ClassificationReport:
    results: dict = field(default_factory=dict)

    def __getitem__(self, cls):
        return self.results[OperatorClass(cls)]

    def to_dict(self):
        return {str(c): r.to_dict() for c, r in self.results.items()}


def classify(map: CyclicMap, plan: GridPlan = GridPlan(), budget: int = 1_000_000, seed: int = 42) -> ClassificationReport:
    space = map.domain
    return ClassificationReport({c: empirical_constant(space, map, c, budget, seed, plan) for c in OperatorClass})
