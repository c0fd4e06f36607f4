"""Coordinate tables for the bundles the library works on.

The global naming convention is fixed so expressions, constraints and
reports are unambiguous everywhere: positions q1..qn, momenta p1..pn,
velocities qd1..qdn, momentum velocities pd1..pdn, fiber parameters
lam1..lamk and mu1..muk, second-copy positions qb1..qbn with multipliers
nu1..nul, and x1..xm / xd1..xdm on a generic manifold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


def names(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(1, n + 1))


@dataclass(frozen=True)
class CoordSystem:
    """An ordered coordinate chart; half the bookkeeping in this library is
    moving between dict points (for expressions) and arrays (for numerics)."""

    label: str
    coords: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.coords)

    def to_array(self, point: Mapping[str, float]) -> np.ndarray:
        return np.array([point[c] for c in self.coords], dtype=float)

    def to_point(self, values: Sequence[float]) -> dict[str, float]:
        if len(values) != len(self.coords):
            raise ValueError(
                f"{self.label}: expected {len(self.coords)} components, got {len(values)}")
        return dict(zip(self.coords, (float(v) for v in values)))

    def index(self, name: str) -> int:
        return self.coords.index(name)


@dataclass(frozen=True)
class PhaseSpace:
    """Coordinate tables derived from a configuration space of dimension n:
    T*Q (q,p), TT*Q (q,p,qd,pd), T*T*Q (q,p,alpha,beta), T*TQ (q,qd,a,b)."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("configuration dimension must be positive")

    @property
    def q(self):
        return names("q", self.n)

    @property
    def p(self):
        return names("p", self.n)

    @property
    def qd(self):
        return names("qd", self.n)

    @property
    def pd(self):
        return names("pd", self.n)

    @property
    def config(self) -> CoordSystem:
        return CoordSystem("Q", self.q)

    @property
    def tangent(self) -> CoordSystem:
        return CoordSystem("TQ", self.q + self.qd)

    @property
    def cotangent(self) -> CoordSystem:
        return CoordSystem("T*Q", self.q + self.p)

    @property
    def tangent_cotangent(self) -> CoordSystem:
        return CoordSystem("TT*Q", self.q + self.p + self.qd + self.pd)

    @property
    def cotangent_cotangent(self) -> CoordSystem:
        return CoordSystem("T*T*Q", self.q + self.p + names("alpha", self.n) + names("beta", self.n))

    @property
    def cotangent_tangent(self) -> CoordSystem:
        return CoordSystem("T*TQ", self.q + self.qd + names("a", self.n) + names("b", self.n))


def generic_tangent(m: int, prefix: str = "x") -> CoordSystem:
    """TM over an m-dimensional manifold with coordinates x1..xm."""
    return CoordSystem("TM", names(prefix, m) + names(prefix + "d", m))


def generic_base(m: int, prefix: str = "x") -> CoordSystem:
    return CoordSystem("M", names(prefix, m))
