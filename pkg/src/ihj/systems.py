"""Constraint-defined submanifolds and zero-set sampling.

A submanifold is represented extensionally: a coordinate chart, a list of
constraint expressions, and whatever sample points satisfy them.  There is
no atlas machinery; every check downstream is pointwise or
constraint-algebraic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .expr import Expression, eval_jet1, parse
from .numerics import box_cloud, dedupe_rows, gauss_newton, svd_rank
from .spaces import CoordSystem


@dataclass(frozen=True)
class ImplicitSystem:
    """A submanifold of ``coords``-space cut out by constraint expressions.

    Constraints may mention auxiliary (existentially quantified) variables,
    e.g. fiber parameters that were not eliminated; those are listed in
    ``aux_vars`` and treated as extra unknowns when sampling.
    """

    coords: CoordSystem
    constraints: tuple[Expression, ...]
    label: str = ""
    aux_vars: tuple[str, ...] = ()

    def __post_init__(self):
        allowed = set(self.coords.coords) | set(self.aux_vars)
        for c in self.constraints:
            extra = [v for v in c.free_vars if v not in allowed]
            if extra:
                raise ValueError(
                    f"constraint {c} uses unknown variables {extra} "
                    f"(coords {self.coords.label}, aux {list(self.aux_vars)})")

    @property
    def unknowns(self) -> tuple[str, ...]:
        return self.coords.coords + self.aux_vars

    def residuals(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([c.eval(point) for c in self.constraints], dtype=float)

    def jacobian(self, point: Mapping[str, float],
                 wrt: Sequence[str] | None = None) -> np.ndarray:
        wrt = list(wrt) if wrt is not None else list(self.unknowns)
        if not self.constraints:
            return np.zeros((0, len(wrt)))
        return np.array([eval_jet1(c, point, wrt).grad for c in self.constraints])

    def with_constraints(self, extra: Sequence[Expression], label: str | None = None):
        return replace(self, constraints=self.constraints + tuple(extra),
                       label=self.label if label is None else label)


def parse_constraints(texts: Sequence[str]) -> tuple[Expression, ...]:
    return tuple(parse(t) for t in texts)


@dataclass
class SampleSet:
    """Zero-set samples plus bookkeeping from the projection."""

    points: list[dict[str, float]] = field(default_factory=list)
    attempted: int = 0
    max_residual: float = 0.0
    rank_values: list[int] = field(default_factory=list)

    @property
    def constant_rank(self) -> bool:
        return len(set(self.rank_values)) <= 1

    def __len__(self):
        return len(self.points)


def sample_zero_set(system: ImplicitSystem,
                    box: Sequence[tuple[float, float]] | tuple[float, float],
                    count: int,
                    rng: np.random.Generator | None = None,
                    tol: float = 1e-11,
                    oversample: int = 4,
                    tol_rank: float = 1e-8,
                    dedupe_tol: float = 0.0) -> SampleSet:
    """Project a cloud onto the constraint zero set by Gauss-Newton.

    ``box`` is either one (lo, hi) pair applied to every unknown or a
    per-unknown sequence.  A Halton cloud is used when no generator is
    given, so results are deterministic.
    """
    unknowns = list(system.unknowns)
    d = len(unknowns)
    if isinstance(box, tuple) and len(box) == 2 and np.isscalar(box[0]):
        boxes = [(float(box[0]), float(box[1]))] * d
    else:
        boxes = [(float(lo), float(hi)) for lo, hi in box]
        if len(boxes) != d:
            raise ValueError(f"need {d} box entries, got {len(boxes)}")

    if not system.constraints:
        cloud = box_cloud(boxes, count, rng)
        out = SampleSet(points=[dict(zip(unknowns, row)) for row in cloud],
                        attempted=count)
        out.rank_values = [0] * len(out.points)
        return out

    def residual(vec: np.ndarray) -> np.ndarray:
        return system.residuals(dict(zip(unknowns, vec)))

    def jac(vec: np.ndarray) -> np.ndarray:
        return system.jacobian(dict(zip(unknowns, vec)))

    cloud = box_cloud(boxes, count * oversample, rng)
    out = SampleSet(attempted=count * oversample)
    accepted: list[np.ndarray] = []
    for start in cloud:
        if len(accepted) >= count:
            break
        x, ok, rnorm = gauss_newton(residual, jac, start, tol=tol)
        if not ok:
            continue
        if dedupe_tol > 0 and len(dedupe_rows(np.array(accepted + [x]), dedupe_tol)) == len(accepted):
            continue
        accepted.append(x)
        out.max_residual = max(out.max_residual, rnorm)
        point = dict(zip(unknowns, x))
        out.points.append(point)
        rank, _ = svd_rank(system.jacobian(point), tol_rank)
        out.rank_values.append(rank)
    return out


def vanishes_on_samples(expr: Expression, points: Sequence[Mapping[str, float]],
                        tol: float = 1e-9) -> bool:
    """Operational redundancy test: the expression vanishes on the sampled
    zero set, relative to its own scale there (value plus gradient norm,
    so a flat-but-offset expression is still seen as nonzero)."""
    if not points:
        return False
    worst = 0.0
    scale = 0.0
    for p in points:
        v = abs(expr.eval(p))
        worst = max(worst, v)
        names = [nm for nm in expr.free_vars if nm in p]
        if names:
            g = eval_jet1(expr, p, names).grad
            scale = max(scale, float(np.linalg.norm(g, ord=np.inf)))
    return worst <= tol * (1.0 + scale)
