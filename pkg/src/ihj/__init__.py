"""Implicit Hamiltonian systems toolkit.

Represents implicit dynamics as constraint submanifolds of iterated
tangent/cotangent bundles generated by Morse families, and mechanises the
checkable procedures around them: rank tests, Poisson-bracket Lagrangian
tests, integrability extraction, implicit Hamilton-Jacobi verification and
search, complete-solution checks, and the Gotay-Nester constraint
algorithm for degenerate Lagrangians.
"""

from .expr import (  # noqa: F401
    DomainError,
    Expression,
    ExprSyntaxError,
    Jet1,
    Jet2,
    eval_jet1,
    eval_jet2,
    finite_diff_grad,
    finite_diff_hess,
    parse,
)

__version__ = "0.1.0"
