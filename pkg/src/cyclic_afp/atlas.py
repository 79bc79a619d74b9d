"""Epsilon-fixed-point sets on grids, their diameters, and the closed-form bounds."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cyclic import ClassParams, CyclicMap, OperatorClass, _grids, check_params
from .errors import EmptySetFault, ParameterFault, UnsupportedClassFault
from .space import GridPlan, GSpace, d_array, g_array

__all__ = [
    "FixedPointSet",
    "Diameters",
    "DiameterReport",
    "enumerate_fset",
    "set_diameter",
    "diameter_bound",
    "verify_diameter",
    "write_members_csv",
]

BOUND_TOL = 1e-9
DIAMETER_CLASSES = (OperatorClass.GMohseni, OperatorClass.GMohsenialhosseini, OperatorClass.GMohseniSemi)


@dataclass(frozen=True)
class FixedPointSet:
    epsilon: float
    members: tuple
    grid_size: int

    def __len__(self):
        return len(self.members)

    def to_dict(self, with_members=False):
        d = {
            "epsilon": self.epsilon,
            "grid_size": self.grid_size,
            "count": len(self.members),
            "min": self.members[0] if self.members else None,
            "max": self.members[-1] if self.members else None,
        }
        if with_members:
            d["members"] = list(self.members)
        return d


def enumerate_fset(space: GSpace, map: CyclicMap, epsilon: float, plan: GridPlan = GridPlan()) -> FixedPointSet:
    """All grid points x of the union with ``G(x,Tx,Tx) + G(Tx,x,x) < epsilon``.

    A point lying in several sets counts once; with set-guarded maps it is a
    member when it qualifies as a point of any set holding it.
    """
    if not epsilon > 0:
        raise ParameterFault(f"epsilon must be positive, got {epsilon}")
    grids = _grids(map, plan)
    found = []
    for i, pts in enumerate(grids):
        disp = d_array(space, pts, map.apply(pts, index=i))
        found.append(pts[disp < epsilon])
    members = np.unique(np.concatenate(found))
    grid_size = int(np.unique(np.concatenate(grids)).size)
    return FixedPointSet(float(epsilon), tuple(float(v) for v in members), grid_size)


class Diameters(NamedTuple):
    delta_triple: float
    delta_pair: float
    approximate: bool = False


def set_diameter(space: GSpace, fset: FixedPointSet, triple_budget: int = 1_000_000, seed: int = 42) -> Diameters:
    """Largest G over member triples and largest d_G over member pairs.

    Builder metrics on the line peak at the two extreme members, so only
    those are evaluated. Custom metrics are searched exhaustively when
    ``n**3 <= triple_budget``; otherwise ``triple_budget`` seeded random
    triples give a lower bound and the result is flagged approximate.
    """
    if not fset.members:
        raise EmptySetFault(f"F_eps is empty for epsilon = {fset.epsilon}")
    pts = np.asarray(fset.members, dtype=float)
    if pts.size == 1:
        return Diameters(0.0, 0.0)
    if space.gmetric.kind == "builder":
        lo, hi = pts.min(), pts.max()
        return Diameters(float(g_array(space, lo, hi, hi)), float(d_array(space, lo, hi)))

    n = pts.size
    pair = 0.0
    chunk = max(1, 1_000_000 // n)
    for s in range(0, n, chunk):
        pair = max(pair, float(d_array(space, pts[s:s + chunk, None], pts[None, :]).max()))
    if n ** 3 <= triple_budget:
        triple = 0.0
        chunk = max(1, triple_budget // (n * n))
        for s in range(0, n, chunk):
            block = g_array(space, pts[s:s + chunk, None, None], pts[None, :, None], pts[None, None, :])
            triple = max(triple, float(block.max()))
        return Diameters(triple, pair)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(3, triple_budget))
    triple = float(g_array(space, pts[idx[0]], pts[idx[1]], pts[idx[2]]).max())
    # triples of the form (x, y, y) are cheap to cover exactly
    for s in range(0, n, chunk):
        triple = max(triple, float(g_array(space, pts[s:s + chunk, None], pts[None, :], pts[None, :]).max()))
    return Diameters(triple, pair, True)


def diameter_bound(cls: OperatorClass, params: ClassParams, epsilon: float) -> float:
    cls = OperatorClass(cls)
    if cls not in DIAMETER_CLASSES:
        raise UnsupportedClassFault(f"no diameter bound is available for {cls}")
    if not epsilon > 0:
        raise ParameterFault(f"epsilon must be positive, got {epsilon}")
    check_params(cls, params)
    if cls is OperatorClass.GMohseni:
        a = params.alpha
        return 2 * epsilon * (1 + a) / (1 - 2 * a)
    if cls is OperatorClass.GMohsenialhosseini:
        eta = params.eta
        return 2 * epsilon * (1 + eta) / (1 - eta)
    a = params.alpha
    return epsilon * (2 + a) / (1 - a)


@dataclass(frozen=True)
class DiameterReport:
    cls: OperatorClass
    params: ClassParams
    epsilon: float
    members: int
    delta_triple: float
    delta_pair: float
    bound: float
    passed: bool
    empty: bool
    approximate: bool

    def to_dict(self):
        return {
            "class": str(self.cls),
            "params": self.params.to_dict(),
            "epsilon": self.epsilon,
            "members": self.members,
            "delta_triple": self.delta_triple,
            "delta_pair": self.delta_pair,
            "bound": self.bound,
            "pass": self.passed,
            "empty": self.empty,
            "approximate": self.approximate,
        }


def verify_diameter(space: GSpace, map: CyclicMap, cls: OperatorClass, params: ClassParams, epsilon: float,
                    plan: GridPlan = GridPlan(), triple_budget: int = 1_000_000, seed: int = 42) -> DiameterReport:
    """Measure both diameters of F_eps and compare them with the class bound.

    An empty F_eps passes vacuously and is flagged ``empty``.
    """
    cls = OperatorClass(cls)
    bound = diameter_bound(cls, params, epsilon)
    fset = enumerate_fset(space, map, epsilon, plan)
    if not fset.members:
        return DiameterReport(cls, params, epsilon, 0, 0.0, 0.0, bound, True, True, False)
    dt, dp, approx = set_diameter(space, fset, triple_budget, seed)
    passed = dt <= bound + BOUND_TOL and dp <= bound + BOUND_TOL
    return DiameterReport(cls, params, epsilon, len(fset), dt, dp, bound, passed, False, approx)


def write_members_csv(fsets, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["epsilon", "x"])
    for fs in fsets:
        for x in fs.members:
            w.writerow([repr(fs.epsilon), repr(x)])
