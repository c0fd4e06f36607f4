"""Implicit differential equations on a manifold M and their integrable part.

An implicit first-order equation is a submanifold E of TM.  For systems
whose velocity dependence is affine, the projection to M and the tangency
intersections E^{k+1} = E^k cap T(tau(E^k)) are computed exactly by
expression-level row reduction; general systems get a pointwise
diagnostic mode instead.  All rank and dimension statements are relative
to the sampled region and reports say so.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .diagnostics import CheckResult, DiagnosticsReport
from .expr import (Expression, Node, Num, add, differentiate, div, eval_jet1,
                   evaluate, free_vars, mul, neg, sub, substitute, to_str, var)
from .numerics import box_cloud, nullspace, svd_rank
from .spaces import CoordSystem
from .systems import ImplicitSystem, sample_zero_set, vanishes_on_samples

__all__ = [
    "AffineRow", "EliminationResult", "decompose_affine", "affine_eliminate",
    "AffineIDE", "project_to_base", "tangent_constraints",
    "IterationRecord", "AlgorithmTrace", "run_integrability",
    "pointwise_integrability", "NotVelocityAffine",
]


class NotVelocityAffine(ValueError):
    """A velocity relation is not affine in the velocity variables."""


# --- affine rows and expression-level elimination ---------------------------

@dataclass(frozen=True)
class AffineRow:
    """A relation c0(x) + sum_j c_j(x) v_j = 0, affine in the chosen vars."""

    coeffs: tuple[Node, ...]
    rest: Node


def decompose_affine(expr: Expression, lin_vars: Sequence[str]) -> AffineRow | None:
    """Split an expression affinely over ``lin_vars``; None if not affine."""
    lin_vars = list(lin_vars)
    coeffs = []
    for v in lin_vars:
        c = differentiate(expr.root, v)
        if any(name in lin_vars for name in free_vars(c)):
            return None
        coeffs.append(c)
    rest = substitute(expr.root, {v: 0.0 for v in lin_vars})
    return AffineRow(tuple(coeffs), rest)


@dataclass
class EliminationResult:
    solved: list[tuple[str, Node]] = field(default_factory=list)
    base_constraints: list[Node] = field(default_factory=list)
    free_vars: list[str] = field(default_factory=list)
    stratified: bool = False
    contradiction: bool = False
    notes: list[str] = field(default_factory=list)


def _maxabs(node: Node, points: Sequence[Mapping[str, float]]) -> float:
    return max((abs(evaluate(node, p)) for p in points), default=0.0)


def _minabs(node: Node, points: Sequence[Mapping[str, float]]) -> float:
    return min((abs(evaluate(node, p)) for p in points), default=0.0)


def affine_eliminate(rows: Sequence[AffineRow], lin_vars: Sequence[str],
                     points: Sequence[Mapping[str, float]],
                     zero_tol: float = 1e-9) -> EliminationResult:
    """Gaussian elimination with expression coefficients.

    Pivots are chosen by the largest worst-case magnitude over the sample
    points; a coefficient is treated as zero when it vanishes on all of
    them.  Rows whose velocity coefficients all vanish contribute their
    remainder as a base constraint.  A coefficient that vanishes at some
    samples but not others marks the system as stratified.
    """
    lin_vars = list(lin_vars)
    work = [{"coeffs": list(r.coeffs), "rest": r.rest, "scale": 1.0} for r in rows]
    for w in work:
        w["scale"] = max(1.0, _maxabs(w["rest"], points),
                         *(_maxabs(c, points) for c in w["coeffs"]))
    result = EliminationResult()
    pivots: list[tuple[int, int, dict]] = []
    active = list(range(len(work)))
    used_cols: set[int] = set()

    while True:
        best = None
        for r in active:
            row = work[r]
            for j, c in enumerate(row["coeffs"]):
                if j in used_cols:
                    continue
                lo = _minabs(c, points)
                hi = _maxabs(c, points)
                if lo <= zero_tol * row["scale"] < hi / 1000.0:
                    result.stratified = True
                if lo <= zero_tol * row["scale"]:
                    continue
                if best is None or lo > best[0]:
                    best = (lo, r, j)
        if best is None:
            break
        _, r, j = best
        row = work[r]
        pivots.append((r, j, {"coeffs": list(row["coeffs"]), "rest": row["rest"]}))
        used_cols.add(j)
        active.remove(r)
        for k in active:
            other = work[k]
            ckj = other["coeffs"][j]
            if _maxabs(ckj, points) <= zero_tol * other["scale"]:
                other["coeffs"][j] = Num(0.0)
                continue
            factor = div(ckj, row["coeffs"][j])
            for l in range(len(lin_vars)):
                if l == j:
                    other["coeffs"][l] = Num(0.0)
                else:
                    other["coeffs"][l] = sub(other["coeffs"][l],
                                             mul(factor, row["coeffs"][l]))
            other["rest"] = sub(other["rest"], mul(factor, row["rest"]))
            other["scale"] = max(other["scale"], _maxabs(other["rest"], points),
                                 *(_maxabs(c, points) for c in other["coeffs"]))

    for r in active:
        row = work[r]
        rest = row["rest"]
        if _maxabs(rest, points) <= zero_tol * row["scale"]:
            continue
        if not free_vars(rest):
            result.contradiction = True
            result.notes.append(
                f"inconsistent relation {to_str(rest)} = 0 on the sampled region")
        result.base_constraints.append(rest)

    solved: dict[str, Node] = {}
    for r, j, snapshot in reversed(pivots):
        expr: Node = snapshot["rest"]
        for l, c in enumerate(snapshot["coeffs"]):
            if l == j:
                continue
            expr = add(expr, mul(c, var(lin_vars[l])))
        sol = neg(div(expr, snapshot["coeffs"][j]))
        sol = substitute(sol, solved)
        solved[lin_vars[j]] = sol
    result.solved = [(v, solved[v]) for v in lin_vars if v in solved]
    result.free_vars = [v for i, v in enumerate(lin_vars) if i not in used_cols]
    return result


# --- velocity-affine implicit differential equations -------------------------

@dataclass(frozen=True)
class AffineIDE:
    """Base constraints f(x) = 0 plus velocity relations affine in xd."""

    coords: CoordSystem          # TM chart: x..., xd...
    base_constraints: tuple[Expression, ...]
    velocity_rows: tuple[Expression, ...]

    @property
    def m(self) -> int:
        return self.coords.dim // 2

    @property
    def x_vars(self) -> tuple[str, ...]:
        return self.coords.coords[:self.m]

    @property
    def xd_vars(self) -> tuple[str, ...]:
        return self.coords.coords[self.m:]

    @classmethod
    def from_system(cls, system: ImplicitSystem) -> "AffineIDE":
        m = system.coords.dim // 2
        x_vars = system.coords.coords[:m]
        xd_vars = system.coords.coords[m:]
        base, vel = [], []
        for c in system.constraints:
            if any(v in xd_vars for v in c.free_vars):
                if decompose_affine(c, xd_vars) is None:
                    raise NotVelocityAffine(
                        f"constraint {c} is not affine in {list(xd_vars)}")
                vel.append(c)
            else:
                base.append(c)
        return cls(system.coords, tuple(base), tuple(vel))

    def as_system(self, label: str = "") -> ImplicitSystem:
        return ImplicitSystem(self.coords, self.base_constraints + self.velocity_rows,
                              label=label)


def _coeff_points(affine: AffineIDE, box, count: int = 48):
    boxes = [box] * affine.m if np.isscalar(box[0]) else list(box)
    cloud = box_cloud(boxes, count)
    return [dict(zip(affine.x_vars, row)) for row in cloud]


def project_to_base(affine: AffineIDE, box=(-2.0, 2.0), zero_tol: float = 1e-9):
    """Constraints of C = tau(E): the declared base constraints plus the
    solvability conditions of the affine velocity system.

    Returns (constraints, EliminationResult)."""
    points = _coeff_points(affine, box)
    rows = []
    for c in affine.velocity_rows:
        row = decompose_affine(c, affine.xd_vars)
        if row is None:
            raise NotVelocityAffine(f"constraint {c} is not affine in velocities")
        rows.append(row)
    elim = affine_eliminate(rows, affine.xd_vars, points, zero_tol)
    constraints = list(affine.base_constraints)
    constraints += [Expression.from_node(n) for n in elim.base_constraints]
    return constraints, elim


def tangent_constraints(constraints: Sequence[Expression],
                        x_vars: Sequence[str],
                        xd_vars: Sequence[str]) -> list[Expression]:
    """For each g(x) = 0 emit g(x) = 0 and <grad g(x), xd> = 0."""
    out: list[Expression] = []
    for g in constraints:
        out.append(g)
        acc: Node = Num(0.0)
        for xv, xdv in zip(x_vars, xd_vars):
            acc = add(acc, mul(differentiate(g.root, xv), var(xdv)))
        out.append(Expression.from_node(acc))
    return out


# --- the integrability algorithm ---------------------------------------------

@dataclass
class IterationRecord:
    level: int
    e_constraints: tuple[str, ...]
    c_constraints: tuple[str, ...]
    dim_E: int | None = None
    dim_C: int | None = None
    new_constraints: tuple[str, ...] = ()
    stratified: bool = False


@dataclass
class AlgorithmTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    stabilized_at: int | None = None
    empty_from: int | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def final(self) -> IterationRecord | None:
        return self.iterations[-1] if self.iterations else None


def _sample_affine(affine: AffineIDE, box, count: int, rng: np.random.Generator,
                   tol: float = 1e-10, base_override=None):
    """Sample the zero set of an affine system: project x onto the base
    constraints (by default, the projected ones, so the velocity system is
    solvable there), then solve it and spread along its nullspace."""
    base = tuple(base_override) if base_override is not None else affine.base_constraints
    base_sys = ImplicitSystem(CoordSystem("M", affine.x_vars), base)
    xs = sample_zero_set(base_sys, box, count, rng, tol=tol)
    rows = [decompose_affine(c, affine.xd_vars) for c in affine.velocity_rows]
    points = []
    for xpt in xs.points:
        k = len(rows)
        m = affine.m
        A = np.zeros((k, m))
        b = np.zeros(k)
        for i, row in enumerate(rows):
            A[i] = [evaluate(c, xpt) for c in row.coeffs]
            b[i] = -evaluate(row.rest, xpt)
        if k:
            xd, *_ = np.linalg.lstsq(A, b, rcond=None)
            if np.linalg.norm(A @ xd - b, ord=np.inf) > 1e-8 * (1 + np.abs(b).max()):
                continue  # velocity system unsolvable at this base point
            null = nullspace(A)
        else:
            xd = np.zeros(m)
            null = np.eye(m)
        spread = null @ rng.uniform(-1.5, 1.5, null.shape[1]) if null.shape[1] else 0.0
        full = dict(xpt)
        full.update(zip(affine.xd_vars, xd + spread))
        points.append(full)
    return points


def _dims(affine: AffineIDE, c_constraints, points, tol_rank=1e-8):
    if not points:
        return None, None
    x_vars, xd_vars = affine.x_vars, affine.xd_vars
    m = affine.m
    dim_C, dim_E = [], []
    rows = [decompose_affine(c, xd_vars) for c in affine.velocity_rows]
    for p in points:
        if c_constraints:
            jac = np.array([eval_jet1(c, p, list(x_vars)).grad for c in c_constraints])
            rank_c, _ = svd_rank(jac, tol_rank)
        else:
            rank_c = 0
        A = np.array([[evaluate(cf, p) for cf in r.coeffs] for r in rows]) \
            if rows else np.zeros((0, m))
        rank_a, _ = svd_rank(A, tol_rank)
        dim_C.append(m - rank_c)
        dim_E.append((m - rank_c) + (m - rank_a))
    return int(np.median(dim_E)), int(np.median(dim_C))


def run_integrability(affine: AffineIDE, box=(-2.0, 2.0), max_iter: int = 10,
                      sample_count: int = 200, seed: int = 0,
                      tol: float = 1e-9) -> AlgorithmTrace:
    """Iterate E^{k+1} = E^k cap T(tau(E^k)) until the constraint sets
    stabilize on the sampled region."""
    trace = AlgorithmTrace()
    rng = np.random.default_rng(seed)
    current = affine
    for level in range(max_iter + 1):
        c_constraints, elim = project_to_base(current, box=box, zero_tol=tol)
        record = IterationRecord(
            level=level,
            e_constraints=tuple(str(c) for c in
                                current.base_constraints + current.velocity_rows),
            c_constraints=tuple(str(c) for c in c_constraints),
            stratified=elim.stratified,
        )
        if elim.stratified:
            trace.notes.append(
                f"level {level}: stratified system (pivot rank changes across "
                "the sampled region); exact mode restricted to the generic stratum")
        if elim.contradiction:
            trace.iterations.append(record)
            trace.empty_from = level
            trace.notes.append("no integrable part on sampled region")
            return trace

        # sample E^k over C^k so the velocity system is solvable at every base point
        e_samples = _sample_affine(current, box, sample_count, rng,
                                   base_override=c_constraints)
        if not e_samples:
            trace.iterations.append(record)
            trace.empty_from = level
            trace.notes.append("no integrable part on sampled region")
            return trace

        candidates = tangent_constraints(c_constraints, current.x_vars,
                                         current.xd_vars)
        fresh: list[Expression] = []
        for cand in candidates:
            if vanishes_on_samples(cand, e_samples, tol):
                continue
            if any(str(cand) == str(f) for f in fresh):
                continue
            fresh.append(cand)
        record.dim_E, record.dim_C = _dims(current, c_constraints, e_samples)
        record.new_constraints = tuple(str(c) for c in fresh)
        trace.iterations.append(record)
        if not fresh:
            trace.stabilized_at = level
            return trace
        new_base = [c for c in fresh if not any(v in current.xd_vars
                                                for v in c.free_vars)]
        new_vel = [c for c in fresh if any(v in current.xd_vars
                                           for v in c.free_vars)]
        current = AffineIDE(current.coords,
                            current.base_constraints + tuple(new_base),
                            current.velocity_rows + tuple(new_vel))
    trace.notes.append(f"did not stabilize within {max_iter} iterations")
    return trace


# --- pointwise mode -----------------------------------------------------------

def pointwise_integrability(system: ImplicitSystem,
                            points: Sequence[Mapping[str, float]],
                            tol_rank: float = 1e-8,
                            flag_tol: float = 1e-6) -> DiagnosticsReport:
    """At each sampled point of E, estimate the tangent of the base
    projection from the locally eliminable constraint structure and test
    whether the point's own velocity lies in it."""
    report = DiagnosticsReport("pointwise integrability")
    m = system.coords.dim // 2
    x_vars = system.coords.coords[:m]
    xd_vars = system.coords.coords[m:]
    flagged: list[dict] = []
    indeterminate: list[dict] = []
    ok = 0
    for p in points:
        try:
            jac = system.jacobian(p, wrt=list(x_vars) + list(xd_vars))
            j_x, j_xd = jac[:, :m], jac[:, m:]
            scale = np.linalg.svd(jac, compute_uv=False)
            sigma = scale[0] if scale.size else 0.0
            u, s, vh = np.linalg.svd(j_xd) if j_xd.size else (np.eye(jac.shape[0]),
                                                              np.zeros(0), None)
            thresh = tol_rank * max(sigma, s[0] if s.size else 0.0)
            rank = int(np.sum(s > thresh)) if s.size else 0
            u2 = u[:, rank:]
            base_grads = u2.T @ j_x
            xd = np.array([p[v] for v in xd_vars])
            defect = float(np.linalg.norm(base_grads @ xd, ord=np.inf)) \
                if base_grads.size else 0.0
            norm = 1.0 + float(np.linalg.norm(base_grads, ord=np.inf)
                               * np.linalg.norm(xd, ord=np.inf)) if base_grads.size else 1.0
        except np.linalg.LinAlgError:
            indeterminate.append(dict(p))
            continue
        if defect > flag_tol * norm:
            entry = dict(p)
            entry["_defect"] = defect
            flagged.append(entry)
        else:
            ok += 1
    check = CheckResult("velocity lies in tangent of base projection",
                        passed=not flagged,
                        max_residual=max((f["_defect"] for f in flagged), default=0.0),
                        samples_used=len(points))
    check.details["flagged"] = flagged
    check.details["indeterminate"] = indeterminate
    check.details["ok"] = ok
    report.add(check)
    if indeterminate:
        report.note(f"{len(indeterminate)} points indeterminate (rank estimation failed)")
    return report
