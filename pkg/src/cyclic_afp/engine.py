"""Picard iteration towards epsilon-fixed points and geometric iteration bounds."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cyclic import CyclicMap
from .errors import EvaluationFault, OrbitExitFault, ParameterFault, UnmatchedPointFault
from .expr import eval_expr
from .space import DEFAULT_TOL, GSpace, eval_g
from .speclang import PiecewiseDef

__all__ = [
    "SolveConfig",
    "IterationBound",
    "SolveTrace",
    "displacement",
    "picard_solve",
    "power_solve",
    "iteration_bound",
    "write_trace_csv",
]

HIT = "hit"
MAX_ITER = "max_iter"
DIVERGED = "diverged"


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float
    x0: float
    max_iter: int = 1_000_000
    divergence_factor: float = 1000.0
    start_set: Optional[int] = None  # 0-based; default is the first set holding x0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterFault(f"epsilon must be positive, got {self.epsilon}")
        if not np.isfinite(self.x0):
            raise ParameterFault(f"x0 must be finite, got {self.x0}")
        if self.max_iter < 1:
            raise ParameterFault("max_iter must be at least 1")
        if not self.divergence_factor > 1:
            raise ParameterFault("divergence_factor must exceed 1")


@dataclass(frozen=True)
class IterationBound:
    rate: float
    delta0: float
    epsilon: float
    n_star: int

    def to_dict(self):
        return {"rate": self.rate, "delta0": self.delta0, "epsilon": self.epsilon, "n_star": self.n_star}


@dataclass(frozen=True)
class SolveTrace:
    iterates: tuple
    displacements: tuple
    hit_index: Optional[int]
    decay_ratios: tuple
    outcome: str
    k: int = 1
    start_set: int = 0
    bound: Optional[IterationBound] = None

    @property
    def hit_point(self):
        return None if self.hit_index is None else self.iterates[self.hit_index]

    def summary(self):
        d = {
            "outcome": self.outcome,
            "k": self.k,
            "start_set": self.start_set + 1,
            "x0": self.iterates[0],
            "hit_index": self.hit_index,
            "hit_point": self.hit_point,
            "hit_displacement": None if self.hit_index is None else self.displacements[self.hit_index],
            "iterations": len(self.displacements),
            "delta0": self.displacements[0] if self.displacements else None,
            "max_decay_ratio": max(self.decay_ratios) if self.decay_ratios else None,
        }
        d["bound"] = self.bound.to_dict() if self.bound else None
        return d


def iteration_bound(delta0: float, epsilon: float, rate: float) -> IterationBound:
    """Smallest n with ``rate**n * delta0 < epsilon``, by repeated multiplication."""
    if not 0 < rate < 1:
        raise ParameterFault(f"rate must lie in (0, 1), got {rate}")
    if not epsilon > 0:
        raise ParameterFault(f"epsilon must be positive, got {epsilon}")
    if delta0 < 0:
        raise ParameterFault(f"delta0 must be nonnegative, got {delta0}")
    n, value = 0, delta0
    while not value < epsilon:
        value *= rate
        n += 1
    return IterationBound(rate, delta0, epsilon, n)


def _step(map: CyclicMap, x: float, index: int) -> float:
    if isinstance(map.body, PiecewiseDef):
        return float(map.apply([x], index)[0])
    return eval_expr(map.body, x)


def _pair_d(space: GSpace, a: float, b: float) -> float:
    return eval_g(space, a, b, b) + eval_g(space, b, a, a)


def displacement(space: GSpace, map: CyclicMap, x: float, index: Optional[int] = None) -> float:
    """``G(x,Tx,Tx) + G(Tx,x,x)``; ``index`` picks the set x is taken from."""
    return _pair_d(space, x, float(map.apply([x], index)[0]))


def _start_set(map: CyclicMap, x0: float, tol: float) -> int:
    for i, s in enumerate(map.domain.subsets):
        if s.contains(np.array([x0]), tol)[0]:
            return i
    raise ParameterFault(f"x0 = {x0!r} lies in none of the declared sets")


def _ratios(ds):
    return tuple(b / a if a > 0 else 0.0 for a, b in zip(ds, ds[1:]))


def _orbit(space: GSpace, map: CyclicMap, k: int, config: SolveConfig, rate: Optional[float]) -> SolveTrace:
    if k < 1:
        raise ParameterFault(f"k must be a positive integer, got {k}")
    start = config.start_set
    if start is None:
        start = _start_set(map, config.x0, config.tol)
    elif not 0 <= start < map.m:
        raise ParameterFault(f"start set {start + 1} is not declared")
    elif not map.domain.subsets[start].contains(np.array([config.x0]), config.tol)[0]:
        raise ParameterFault(f"x0 = {config.x0!r} is not in X{start + 1}")

    m = map.m
    xs = [float(config.x0)]
    ds = []

    def trace(hit, outcome):
        bound = None
        if rate is not None and ds:
            bound = iteration_bound(ds[0], config.epsilon, rate)
        return SolveTrace(tuple(xs), tuple(ds), hit, _ratios(ds), outcome, k, start, bound)

    def advance():
        n = len(xs) - 1
        i = (start + n) % m
        x = xs[-1]
        if n > 0 and not map.domain.subsets[i].contains(np.array([x]), config.tol)[0]:
            raise OrbitExitFault(
                f"iterate {n} (x = {x!r}) is not in X{i + 1}; the map is not cyclical along this orbit",
                x, n, trace(None, "left_domain"),
            )
        try:
            xs.append(_step(map, x, i))
        except UnmatchedPointFault as exc:
            raise UnmatchedPointFault(f"{exc} (iterate {n})", x, n) from None
        except EvaluationFault as exc:
            err = EvaluationFault(f"{exc} (iterate {n})", exc.point)
            err.index = n
            raise err from None

    n = 0
    while True:
        while len(xs) <= n + k:
            advance()
        d = _pair_d(space, xs[n], xs[n + k])
        ds.append(d)
        if d < config.epsilon:
            return trace(n, HIT)
        if d > config.divergence_factor * ds[0]:
            return trace(None, DIVERGED)
        if len(ds) >= config.max_iter:
            return trace(None, MAX_ITER)
        n += 1


def picard_solve(space: GSpace, map: CyclicMap, config: SolveConfig, rate: Optional[float] = None) -> SolveTrace:
    """Iterate ``x_{n+1} = T(x_n)`` until the displacement drops below epsilon.

    Stops on a hit, after ``max_iter`` displacements, or when a displacement
    exceeds ``divergence_factor`` times the first one. With ``rate`` given,
    the trace carries the matching :class:`IterationBound`.
    """
    return _orbit(space, map, 1, config, rate)


def power_solve(space: GSpace, map: CyclicMap, k: int, config: SolveConfig, rate: Optional[float] = None) -> SolveTrace:
    """Like :func:`picard_solve` but with displacement measured k steps apart,
    so a hit is an epsilon-fixed point of ``T^k``."""
    return _orbit(space, map, k, config, rate)


def write_trace_csv(trace: SolveTrace, fh) -> None:
    """Columns n, x_n, delta_n, ratio_n where ratio_n = delta_{n+1}/delta_n."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "x_n", "delta_n", "ratio_n"])
    for n, d in enumerate(trace.displacements):
        ratio = repr(trace.decay_ratios[n]) if n < len(trace.decay_ratios) else ""
        w.writerow([n, repr(trace.iterates[n]), repr(d), ratio])
