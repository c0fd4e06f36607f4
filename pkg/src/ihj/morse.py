"""Morse families over T*Q (or Q) and the implicit dynamics they generate.

A family F(base, fiber) generates a constraint submanifold of TT*Q:

    qd_i = dF/dp_i,   pd_i = -dF/dq_i,   dF/dfiber_a = 0.

The family is a Morse family when the fiber-derivative map has full rank
along its critical set; that rank test, fiber-equation solving, and the
Poisson-bracket test for Lagrangian submanifolds all live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .diagnostics import CheckResult, DiagnosticsReport
from .expr import (Expression, Num, add, differentiate, eval_jet1, eval_jet2,
                   mul, sub, var)
from .geometry import poisson_bracket
from .ide import affine_eliminate, decompose_affine
from .numerics import box_cloud, dedupe_rows, gauss_newton, svd_rank
from .spaces import CoordSystem, PhaseSpace, names
from .systems import ImplicitSystem, sample_zero_set

__all__ = [
    "MorseFamily", "RankReport", "FiberSolution", "EPoint",
    "hamiltonian_family", "dirac_family",
    "critical_residual", "morse_rank_check", "generate_E",
    "generate_lagrangian", "solve_fiber", "sample_critical_points",
    "lagrangian_closure_check",
]


@dataclass(frozen=True)
class MorseFamily:
    """A generating family on a fibered bundle over T*Q (or over Q).

    ``fiber_vars`` default to lam1..lamk but may use other names; the
    velocity-identified families of Lagrangian dynamics use qd1..qdn, in
    which case the fiber variables coincide with coordinates of TT*Q.
    """

    space: PhaseSpace
    fiber_vars: tuple[str, ...]
    generator: Expression
    base: str = "T*Q"

    def __post_init__(self):
        if self.base not in ("T*Q", "Q"):
            raise ValueError("base must be 'T*Q' or 'Q'")
        allowed = set(self.base_vars) | set(self.fiber_vars)
        extra = [v for v in self.generator.free_vars if v not in allowed]
        if extra:
            raise ValueError(f"generator uses variables {extra} outside "
                             f"base {list(self.base_vars)} + fiber {list(self.fiber_vars)}")

    @property
    def k(self) -> int:
        return len(self.fiber_vars)

    @property
    def base_vars(self) -> tuple[str, ...]:
        if self.base == "T*Q":
            return self.space.q + self.space.p
        return self.space.q

    @property
    def total_vars(self) -> tuple[str, ...]:
        return self.base_vars + self.fiber_vars

    def fiber_residual_expressions(self) -> tuple[Expression, ...]:
        return tuple(Expression.from_node(differentiate(self.generator.root, v))
                     for v in self.fiber_vars)


def hamiltonian_family(space: PhaseSpace, hamiltonian: Expression) -> MorseFamily:
    """The fiberless case: an ordinary Hamiltonian on T*Q."""
    return MorseFamily(space, (), hamiltonian)


def dirac_family(space: PhaseSpace, hamiltonian: Expression,
                 constraints: Sequence[Expression]) -> MorseFamily:
    """Constrained Hamiltonian system: F = H + sum_a lam_a Phi^a on
    T*Q x R^k."""
    base = set(space.q + space.p)
    for c in [hamiltonian, *constraints]:
        extra = [v for v in c.free_vars if v not in base]
        if extra:
            raise ValueError(f"{c} must depend only on (q, p); found {extra}")
    k = len(constraints)
    lam = names("lam", k)
    node = hamiltonian.root
    for a, phi in enumerate(constraints):
        node = add(node, mul(var(lam[a]), phi.root))
    return MorseFamily(space, lam, Expression.from_node(node))


def critical_residual(mf: MorseFamily, x: Mapping[str, float]) -> np.ndarray:
    """(dF/dfiber_1, ..., dF/dfiber_k) at x; empty for fiberless families."""
    if mf.k == 0:
        return np.zeros(0)
    return eval_jet1(mf.generator, x, mf.fiber_vars).grad


@dataclass(frozen=True)
class RankReport:
    """Outcome of the maximal-rank test for a generating family.

    ``rank`` is the numerical rank of the k x (dim base + k) matrix of
    fiber-derivative gradients [d2F/dfiber dbase | d2F/dfiber dfiber];
    the family is a Morse family at the point when it equals k.  The rank
    of the base-indexed second-derivative block is kept as a diagnostic.
    """

    rank: int
    maximal: bool
    singular_values: np.ndarray
    k: int
    base_dim: int
    base_block_rank: int
    critical_defect: float


def morse_rank_check(mf: MorseFamily, x: Mapping[str, float],
                     tol_rank: float = 1e-8,
                     tol_crit: float = 1e-9,
                     require_critical: bool = True) -> RankReport:
    """Test the rank condition at a point of the critical set.

    The tested matrix is the Jacobian of the fiber-derivative map
    fiber_a -> dF/dfiber_a with respect to all variables: full rank k
    makes the critical set a submanifold of base dimension and the
    generated set an (immersed) Lagrangian submanifold.
    """
    defect = float(np.max(np.abs(critical_residual(mf, x)), initial=0.0))
    if require_critical and defect > tol_crit:
        raise ValueError(
            f"point is not in the critical set (|dF/dfiber| = {defect:.3e} > {tol_crit})")
    total = list(mf.total_vars)
    jet = eval_jet2(mf.generator, x, total)
    hess = jet.hess
    nb = len(mf.base_vars)
    fiber_rows = hess[nb:, :]
    rank, svals = svd_rank(fiber_rows, tol_rank)
    base_rows_rank, _ = svd_rank(hess[:nb, :], tol_rank)
    return RankReport(rank=rank, maximal=(rank == mf.k),
                      singular_values=svals, k=mf.k, base_dim=nb,
                      base_block_rank=base_rows_rank, critical_defect=defect)


def generate_E(mf: MorseFamily, eliminate_fibers: bool = False) -> ImplicitSystem:
    """Materialise the generated dynamics on TT*Q as constraint expressions:

        {qd_i - dF/dp_i, pd_i + dF/dq_i, dF/dfiber_a}.

    Constraints that simplify to zero (velocity-identified fibers) are
    dropped.  Fiber variables that are not TT*Q coordinates stay as
    auxiliary unknowns unless ``eliminate_fibers`` removes them by affine
    elimination.
    """
    if mf.base != "T*Q":
        raise ValueError("generated dynamics on TT*Q needs a family over T*Q")
    space = mf.space
    tt = space.tangent_cotangent
    root = mf.generator.root
    constraints: list[Expression] = []
    for i in range(1, space.n + 1):
        c = sub(var(f"qd{i}"), differentiate(root, f"p{i}"))
        if c != Num(0.0):
            constraints.append(Expression.from_node(c))
    for i in range(1, space.n + 1):
        c = add(var(f"pd{i}"), differentiate(root, f"q{i}"))
        if c != Num(0.0):
            constraints.append(Expression.from_node(c))
    for v in mf.fiber_vars:
        c = differentiate(root, v)
        if c != Num(0.0):
            constraints.append(Expression.from_node(c))
    aux = tuple(v for v in mf.fiber_vars if v not in tt.coords)
    label = "generated dynamics"
    if aux and eliminate_fibers:
        rows = [decompose_affine(c, aux) for c in constraints]
        if all(r is not None for r in rows):
            points = [dict(zip(tt.coords, row))
                      for row in box_cloud([(-2.0, 2.0)] * tt.dim, 32)]
            elim = affine_eliminate(rows, aux, points)
            constraints = [Expression.from_node(n) for n in elim.base_constraints]
            aux = ()
            label = "generated dynamics (fibers eliminated)"
    return ImplicitSystem(tt, tuple(constraints), label=label, aux_vars=aux)


def generate_lagrangian(mf: MorseFamily) -> ImplicitSystem:
    """For a family over Q: the generated Lagrangian submanifold of T*Q,
    {p_i - dW/dq_i = 0, dW/dfiber_a = 0}."""
    if mf.base != "Q":
        raise ValueError("expected a family over Q")
    space = mf.space
    root = mf.generator.root
    constraints = []
    for i in range(1, space.n + 1):
        c = sub(var(f"p{i}"), differentiate(root, f"q{i}"))
        if c != Num(0.0):
            constraints.append(Expression.from_node(c))
    for v in mf.fiber_vars:
        c = differentiate(root, v)
        if c != Num(0.0):
            constraints.append(Expression.from_node(c))
    aux = tuple(v for v in mf.fiber_vars if v not in space.cotangent.coords)
    return ImplicitSystem(space.cotangent, tuple(constraints),
                          label="generated Lagrangian submanifold", aux_vars=aux)


@dataclass(frozen=True)
class FiberSolution:
    lam: np.ndarray
    residual: float
    converged: bool
    isolated: bool
    hessian_singular_values: np.ndarray


def solve_fiber(mf: MorseFamily, base_point: Mapping[str, float],
                lam0: Sequence[float] | None = None,
                tol: float = 1e-11, max_iter: int = 60,
                multistart: int = 0, lam_box=(-2.0, 2.0),
                tol_rank: float = 1e-8,
                dedupe_tol: float = 1e-6) -> list[FiberSolution]:
    """Damped Newton on dF/dfiber = 0 over a fixed base point.

    Starts from lam0 (default 0) plus an optional deterministic multistart
    grid.  Roots with a singular fiber Hessian are families, not isolated
    points; they are returned flagged, one representative per start.
    """
    k = mf.k
    if k == 0:
        return [FiberSolution(np.zeros(0), 0.0, True, True, np.zeros(0))]
    fiber = list(mf.fiber_vars)

    def fill(lam):
        p = dict(base_point)
        p.update(zip(fiber, lam))
        return p

    def residual(lam):
        return eval_jet1(mf.generator, fill(lam), fiber).grad

    def jac(lam):
        return eval_jet2(mf.generator, fill(lam), fiber).hess

    starts = [np.zeros(k) if lam0 is None else np.asarray(lam0, dtype=float)]
    if multistart > 0:
        starts += list(box_cloud([lam_box] * k, multistart))
    found: list[FiberSolution] = []
    reps: list[np.ndarray] = []
    for s in starts:
        lam, ok, rnorm = gauss_newton(residual, jac, s, tol=tol,
                                      max_iter=max_iter)
        if not ok:
            continue
        if any(np.linalg.norm(lam - r, ord=np.inf) <= dedupe_tol for r in reps):
            continue
        hess = jac(lam)
        rank, svals = svd_rank(hess, tol_rank)
        reps.append(lam)
        found.append(FiberSolution(lam, rnorm, True, rank == k, svals))
    return found


@dataclass(frozen=True)
class EPoint:
    """A point of the generated dynamics: base, fiber, and the velocities
    qd = dF/dp, pd = -dF/dq the family assigns there."""

    q: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    qd: np.ndarray
    pd: np.ndarray
    point: dict[str, float]


def epoint(mf: MorseFamily, base_point: Mapping[str, float],
           lam: Sequence[float]) -> EPoint:
    space = mf.space
    full = dict(base_point)
    full.update(zip(mf.fiber_vars, (float(v) for v in lam)))
    gq = eval_jet1(mf.generator, full, space.q).grad
    gp = eval_jet1(mf.generator, full, space.p).grad
    qd, pd = gp, -gq
    for i in range(space.n):
        full[f"qd{i + 1}"] = float(qd[i])
        full[f"pd{i + 1}"] = float(pd[i])
    return EPoint(
        q=np.array([base_point[v] for v in space.q], dtype=float),
        p=np.array([base_point[v] for v in space.p], dtype=float),
        lam=np.asarray(list(lam), dtype=float),
        qd=qd, pd=pd, point=full)


def sample_critical_points(mf: MorseFamily, box=(-2.0, 2.0), count: int = 50,
                           rng: np.random.Generator | None = None,
                           tol: float = 1e-11) -> list[EPoint]:
    """Points of the critical set (with their generated velocities),
    obtained by Gauss-Newton projection of a cloud over base x fiber."""
    chart = CoordSystem("critical", mf.base_vars + mf.fiber_vars)
    system = ImplicitSystem(chart, mf.fiber_residual_expressions(),
                            label="critical set")
    samples = sample_zero_set(system, box, count, rng, tol=tol)
    out = []
    for pt in samples.points:
        lam = [pt[v] for v in mf.fiber_vars]
        out.append(epoint(mf, pt, lam))
    return out


def lagrangian_closure_check(space: PhaseSpace, system: ImplicitSystem,
                             points: Sequence[Mapping[str, float]],
                             tol: float = 1e-9) -> DiagnosticsReport:
    """Test whether a constraint submanifold of TT*Q is Lagrangian:
    2n constraints whose pairwise Poisson brackets vanish on it."""
    report = DiagnosticsReport(f"Lagrangian closure: {system.label or 'system'}")
    n2 = 2 * space.n
    count = len(system.constraints)
    report.add(CheckResult("constraint count equals 2n", passed=(count == n2),
                           details={"count": count, "expected": n2}))

    accepted = []
    rejected = 0
    for p in points:
        res = system.residuals(p)
        if res.size and np.max(np.abs(res)) > 10 * tol:
            rejected += 1
            continue
        accepted.append(p)
    if rejected:
        report.note(f"rejected {rejected} points violating the constraints")

    worst = 0.0
    worst_pair = None
    worst_point = None
    cons = system.constraints
    for p in accepted:
        for a in range(len(cons)):
            for b in range(a + 1, len(cons)):
                val = abs(poisson_bracket(space, cons[a], cons[b], p))
                if val > worst:
                    worst, worst_pair, worst_point = val, (a, b), p
    check = CheckResult("pairwise Poisson brackets vanish",
                        passed=(worst <= tol and bool(accepted)),
                        max_residual=worst,
                        worst_point=dict(worst_point) if worst_point else None,
                        samples_used=len(accepted))
    if worst_pair is not None:
        check.details["worst_pair"] = [str(cons[worst_pair[0]]), str(cons[worst_pair[1]])]
    if not accepted:
        check.note("no admissible points supplied")
    report.add(check)
    return report
