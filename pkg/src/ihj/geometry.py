"""Symplectic structures on TT*Q and the two wings of the Tulczyjew triple.

Everything is concrete and coordinate-based: the lifted symplectic pairing
and its two potential one-forms, the Poisson bracket it induces, and the
canonical maps to T*T*Q and T*TQ stored as exact signed index permutations
so pullback identities hold to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .expr import Expression, eval_jet1, eval_jet2
from .spaces import PhaseSpace


@dataclass(frozen=True)
class TangentVectorAtPoint:
    """A tangent vector: base point plus components in coordinate order."""

    base: dict[str, float]
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components",
                           np.asarray(self.components, dtype=float))


def _check_pair(space: PhaseSpace, u: TangentVectorAtPoint, w: TangentVectorAtPoint):
    dim = 4 * space.n
    if u.components.shape != (dim,) or w.components.shape != (dim,):
        raise ValueError(f"expected {dim}-component vectors on TT*Q")
    if u.base != w.base:
        raise ValueError("tangent vectors must share the same base point")


def _blocks(space: PhaseSpace, vec: np.ndarray):
    n = space.n
    return vec[0:n], vec[n:2 * n], vec[2 * n:3 * n], vec[3 * n:4 * n]


def omega_T_pair(space: PhaseSpace, u: TangentVectorAtPoint,
                 w: TangentVectorAtPoint) -> float:
    """Lifted symplectic pairing on TT*Q: (dpd ^ dq + dp ^ dqd)(u, w).

    Accumulated as sum_i (t1-t2)+(t3-t4) so that swapping the arguments
    negates every partial sum exactly: antisymmetry holds in floats.
    """
    _check_pair(space, u, w)
    uq, up, uqd, upd = _blocks(space, u.components)
    wq, wp, wqd, wpd = _blocks(space, w.components)
    total = 0.0
    for i in range(space.n):
        total += (upd[i] * wq[i] - uq[i] * wpd[i]) + (up[i] * wqd[i] - uqd[i] * wp[i])
    return total


def omega_cotangent_pair(n: int, u: np.ndarray, w: np.ndarray) -> float:
    """Canonical pairing dq ^ dalpha + dp ^ dbeta on T*T*Q components."""
    u, w = np.asarray(u, float), np.asarray(w, float)
    total = 0.0
    for i in range(n):
        a, b = i, 2 * n + i
        total += u[a] * w[b] - u[b] * w[a]
        a, b = n + i, 3 * n + i
        total += u[a] * w[b] - u[b] * w[a]
    return total


def omega_tangent_pair(n: int, u: np.ndarray, w: np.ndarray) -> float:
    """Pairing da ^ dq + db ^ dqd on T*TQ components.

    Orientation constraint: chosen so that the velocity-wing pullback
    through :func:`alpha_map` reproduces :func:`omega_T_pair` exactly
    (with the opposite orientation it reproduces its negative).
    """
    u, w = np.asarray(u, float), np.asarray(w, float)
    total = 0.0
    for i in range(n):
        a, q = 2 * n + i, i
        total += u[a] * w[q] - u[q] * w[a]
        b, qd = 3 * n + i, n + i
        total += u[b] * w[qd] - u[qd] * w[b]
    return total


# --- Tulczyjew maps ----------------------------------------------------------

def beta_map(space: PhaseSpace, point: Mapping[str, float]) -> dict[str, float]:
    """TT*Q -> T*T*Q: (q, p, qd, pd) -> (q, p, alpha=-pd, beta=qd)."""
    n = space.n
    out: dict[str, float] = {}
    for i in range(1, n + 1):
        out[f"q{i}"] = float(point[f"q{i}"])
        out[f"p{i}"] = float(point[f"p{i}"])
        out[f"alpha{i}"] = -float(point[f"pd{i}"])
        out[f"beta{i}"] = float(point[f"qd{i}"])
    return out


def beta_map_inverse(space: PhaseSpace, point: Mapping[str, float]) -> dict[str, float]:
    n = space.n
    out: dict[str, float] = {}
    for i in range(1, n + 1):
        out[f"q{i}"] = float(point[f"q{i}"])
        out[f"p{i}"] = float(point[f"p{i}"])
        out[f"qd{i}"] = float(point[f"beta{i}"])
        out[f"pd{i}"] = -float(point[f"alpha{i}"])
    return out


def alpha_map(space: PhaseSpace, point: Mapping[str, float]) -> dict[str, float]:
    """TT*Q -> T*TQ: (q, p, qd, pd) -> (q, qd, a=pd, b=p)."""
    n = space.n
    out: dict[str, float] = {}
    for i in range(1, n + 1):
        out[f"q{i}"] = float(point[f"q{i}"])
        out[f"qd{i}"] = float(point[f"qd{i}"])
        out[f"a{i}"] = float(point[f"pd{i}"])
        out[f"b{i}"] = float(point[f"p{i}"])
    return out


def alpha_map_inverse(space: PhaseSpace, point: Mapping[str, float]) -> dict[str, float]:
    n = space.n
    out: dict[str, float] = {}
    for i in range(1, n + 1):
        out[f"q{i}"] = float(point[f"q{i}"])
        out[f"qd{i}"] = float(point[f"qd{i}"])
        out[f"p{i}"] = float(point[f"b{i}"])
        out[f"pd{i}"] = float(point[f"a{i}"])
    return out


def beta_differential(space: PhaseSpace) -> np.ndarray:
    """Constant Jacobian of beta_map in block coordinate order."""
    n = space.n
    mat = np.zeros((4 * n, 4 * n))
    eye = np.eye(n)
    mat[0:n, 0:n] = eye                      # q -> q
    mat[n:2 * n, n:2 * n] = eye              # p -> p
    mat[2 * n:3 * n, 3 * n:4 * n] = -eye     # alpha = -pd
    mat[3 * n:4 * n, 2 * n:3 * n] = eye      # beta = qd
    return mat


def alpha_differential(space: PhaseSpace) -> np.ndarray:
    n = space.n
    mat = np.zeros((4 * n, 4 * n))
    eye = np.eye(n)
    mat[0:n, 0:n] = eye                      # q -> q
    mat[n:2 * n, 2 * n:3 * n] = eye          # qd slot reads qd
    mat[2 * n:3 * n, 3 * n:4 * n] = eye      # a = pd
    mat[3 * n:4 * n, n:2 * n] = eye          # b = p
    return mat


# --- potential one-forms -----------------------------------------------------

def theta_forms(space: PhaseSpace, v: TangentVectorAtPoint) -> tuple[float, float]:
    """Evaluate the two potentials of the lifted form on a tangent vector:
    theta1 = pd dq - qd dp and theta2 = pd dq + p dqd."""
    dim = 4 * space.n
    if v.components.shape != (dim,):
        raise ValueError(f"expected {dim}-component vector on TT*Q")
    vq, vp, vqd, _ = _blocks(space, v.components)
    base = v.base
    t1 = 0.0
    t2 = 0.0
    for i in range(1, space.n + 1):
        pd_i = float(base[f"pd{i}"])
        qd_i = float(base[f"qd{i}"])
        p_i = float(base[f"p{i}"])
        t1 += pd_i * vq[i - 1] - qd_i * vp[i - 1]
        t2 += pd_i * vq[i - 1] + p_i * vqd[i - 1]
    return t1, t2


def theta1_coefficients(space: PhaseSpace, x: np.ndarray) -> np.ndarray:
    n = space.n
    c = np.zeros(4 * n)
    c[0:n] = x[3 * n:4 * n]        # pd on dq
    c[n:2 * n] = -x[2 * n:3 * n]   # -qd on dp
    return c


def theta2_coefficients(space: PhaseSpace, x: np.ndarray) -> np.ndarray:
    n = space.n
    c = np.zeros(4 * n)
    c[0:n] = x[3 * n:4 * n]        # pd on dq
    c[2 * n:3 * n] = x[n:2 * n]    # p on dqd
    return c


def fd_exterior_derivative(coeffs: Callable[[np.ndarray], np.ndarray],
                           x: np.ndarray, u: np.ndarray, w: np.ndarray,
                           h: float = 1e-5) -> float:
    """Central-difference evaluation of (d theta)(u, w) for a one-form given
    by its coefficient functions."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    jac = np.zeros((d, d))
    for k in range(d):
        step = np.zeros(d)
        step[k] = h
        jac[:, k] = (coeffs(x + step) - coeffs(x - step)) / (2 * h)
    return float((jac @ u) @ w - (jac @ w) @ u)


# --- Poisson bracket ---------------------------------------------------------

_BLOCK = ("q", "p", "qd", "pd")


def _tt_coords(space: PhaseSpace) -> list[str]:
    return list(space.tangent_cotangent.coords)


def poisson_bracket(space: PhaseSpace, f: Expression, g: Expression,
                    x: Mapping[str, float]) -> float:
    """Tulczyjew bracket at a point of TT*Q:

        {f,g} = sum_i df/dpd_i dg/dq_i - dg/dpd_i df/dq_i
                      + df/dp_i dg/dqd_i - dg/dp_i df/dqd_i

    Per-index grouping keeps antisymmetry exact in floating point.
    """
    coords = _tt_coords(space)
    jf = eval_jet1(f, x, coords)
    jg = eval_jet1(g, x, coords)
    n = space.n
    fq, fp, fqd, fpd = _blocks(space, jf.grad)
    gq, gp, gqd, gpd = _blocks(space, jg.grad)
    total = 0.0
    for i in range(n):
        total += (fpd[i] * gq[i] - gpd[i] * fq[i]) + (fp[i] * gqd[i] - gp[i] * fqd[i])
    return total


def poisson_bracket_with_gradient(space: PhaseSpace, g: Expression, h: Expression,
                                  x: Mapping[str, float]):
    """Value and exact gradient of the map y -> {g,h}(y), assembled from the
    second-order jets of g and h (no finite differences)."""
    coords = _tt_coords(space)
    jg = eval_jet2(g, x, coords)
    jh = eval_jet2(h, x, coords)
    n = space.n
    Hg, Hh = jg.hess, jh.hess
    gg, gh = jg.grad, jh.grad
    iq = slice(0, n)
    ip = slice(n, 2 * n)
    iqd = slice(2 * n, 3 * n)
    ipd = slice(3 * n, 4 * n)
    value = 0.0
    for i in range(n):
        value += (gg[ipd][i] * gh[iq][i] - gh[ipd][i] * gg[iq][i]) \
            + (gg[ip][i] * gh[iqd][i] - gh[ip][i] * gg[iqd][i])
    grad = (Hg[ipd].T @ gh[iq] + Hh[iq].T @ gg[ipd]
            - Hh[ipd].T @ gg[iq] - Hg[iq].T @ gh[ipd]
            + Hg[ip].T @ gh[iqd] + Hh[iqd].T @ gg[ip]
            - Hh[ip].T @ gg[iqd] - Hg[iqd].T @ gh[ip])
    return value, grad


def jacobi_defect(space: PhaseSpace, f: Expression, g: Expression, h: Expression,
                  x: Mapping[str, float]) -> float:
    """{f,{g,h}} + {g,{h,f}} + {h,{f,g}} at x, with the nested brackets and
    their gradients computed from jets."""
    coords = _tt_coords(space)
    n = space.n

    def outer(a: Expression, inner_pair):
        value_inner, grad_inner = inner_pair
        ja = eval_jet1(a, x, coords)
        aq, ap, aqd, apd = _blocks(space, ja.grad)
        bq, bp, bqd, bpd = _blocks(space, grad_inner)
        total = 0.0
        for i in range(n):
            total += (apd[i] * bq[i] - bpd[i] * aq[i]) + (ap[i] * bqd[i] - bp[i] * aqd[i])
        return total

    return (outer(f, poisson_bracket_with_gradient(space, g, h, x))
            + outer(g, poisson_bracket_with_gradient(space, h, f, x))
            + outer(h, poisson_bracket_with_gradient(space, f, g, x)))
