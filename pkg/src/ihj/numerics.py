"""Small dense linear algebra and sampling utilities shared by all modules."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DEFAULT_TOL_RANK = 1e-8

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59,
           61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113)


def svd_rank(mat: np.ndarray, tol_rank: float = DEFAULT_TOL_RANK):
    """Numerical rank: count of singular values > tol_rank * sigma_max.

    Returns (rank, singular values) so borderline decisions stay visible.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0, s
    return int(np.sum(s > tol_rank * s[0])), s


def nullspace(mat: np.ndarray, tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    """Orthonormal basis (columns) of the right nullspace."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return np.eye(mat.shape[1])
    u, s, vh = np.linalg.svd(mat)
    if s.size and s[0] > 0.0:
        rank = int(np.sum(s > tol_rank * s[0]))
    else:
        rank = 0
    return vh[rank:].T


def left_nullspace(mat: np.ndarray, tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    return nullspace(np.asarray(mat, dtype=float).T, tol_rank)


def halton(count: int, dim: int, skip: int = 20) -> np.ndarray:
    """Low-discrepancy Halton points in [0,1)^dim (deterministic)."""
    if dim > len(_PRIMES):
        raise ValueError(f"halton supports up to {len(_PRIMES)} dimensions")
    out = np.empty((count, dim))
    for j in range(dim):
        base = _PRIMES[j]
        for i in range(count):
            n = i + skip + 1
            f, r = 1.0, 0.0
            while n > 0:
                f /= base
                r += f * (n % base)
                n //= base
            out[i, j] = r
    return out


def scale_to_box(unit: np.ndarray, box: Sequence[tuple[float, float]]) -> np.ndarray:
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    return lo + unit * (hi - lo)


def box_cloud(box: Sequence[tuple[float, float]], count: int,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Points in a box: Halton if no generator is given, else uniform."""
    if rng is None:
        return scale_to_box(halton(count, len(box)), box)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    return rng.uniform(lo, hi, size=(count, len(box)))


def gauss_newton(residual: Callable[[np.ndarray], np.ndarray],
                 jacobian: Callable[[np.ndarray], np.ndarray],
                 x0: np.ndarray,
                 tol: float = 1e-12,
                 max_iter: int = 60,
                 max_halvings: int = 20):
    """Damped Gauss-Newton with minimum-norm steps.

    Handles square, over- and under-determined systems; singular Jacobians
    get the least-squares (pseudo-inverse) step.  Returns
    (x, converged, residual_norm).
    """
    x = np.asarray(x0, dtype=float).copy()
    try:
        r = residual(x)
    except Exception:
        return x, False, np.inf
    if r.size == 0:
        return x, True, 0.0
    rnorm = float(np.linalg.norm(r, ord=np.inf))
    for _ in range(max_iter):
        if rnorm <= tol:
            return x, True, rnorm
        jac = jacobian(x)
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        if not np.all(np.isfinite(step)):
            return x, False, rnorm
        scale = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + scale * step
            try:
                r_new = residual(x_new)
            except Exception:
                scale *= 0.5
                continue
            rn = float(np.linalg.norm(r_new, ord=np.inf))
            if rn < rnorm or rn <= tol:
                x, r, rnorm = x_new, r_new, rn
                break
            scale *= 0.5
        else:
            return x, rnorm <= tol, rnorm
    return x, rnorm <= tol, rnorm


def dedupe_rows(rows: np.ndarray, tol: float) -> np.ndarray:
    """Keep one representative per cluster of rows closer than tol."""
    kept: list[np.ndarray] = []
    for row in rows:
        if all(np.linalg.norm(row - k, ord=np.inf) > tol for k in kept):
            kept.append(row)
    return np.array(kept) if kept else np.zeros((0, rows.shape[1] if rows.ndim > 1 else 0))


def format_float(v: float) -> str:
    """Deterministic short float formatting for reports."""
    if v != v:
        return "nan"
    if v in (np.inf, -np.inf):
        return "inf" if v > 0 else "-inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.12g}"
