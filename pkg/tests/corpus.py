"""Shared expression corpus and sampling helpers for the test suite.

Every expression is paired with a box per variable inside which it is
smooth (denominators bounded away from zero, log/sqrt arguments positive),
so derivative oracles can probe freely.
"""

import numpy as np

from ihj.expr import parse

# (text, {var: (lo, hi)})
CORPUS = [
    ("q1^2 + q2", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("p1*qd1 - (1/2)*(qd1 + qd2)^2", {"p1": (-2, 2), "qd1": (-2, 2), "qd2": (-2, 2)}),
    ("p1*qd1 + p2*qd2 - (1/2)*qd1^2 - q2*q1^2",
     {"p1": (-2, 2), "p2": (-2, 2), "qd1": (-2, 2), "qd2": (-2, 2),
      "q1": (-2, 2), "q2": (-2, 2)}),
    ("(1/2)*(p1^2 + q1^2)", {"p1": (-2, 2), "q1": (-2, 2)}),
    ("q1*q2*q3", {"q1": (-2, 2), "q2": (-2, 2), "q3": (-2, 2)}),
    ("q1^3 - 3*q1*q2^2", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("sin(q1)", {"q1": (-2, 2)}),
    ("cos(q1*q2)", {"q1": (-1.5, 1.5), "q2": (-1.5, 1.5)}),
    ("exp(q1 - q2)", {"q1": (-1, 1), "q2": (-1, 1)}),
    ("ln(4 + q1^2)", {"q1": (-2, 2)}),
    ("sqrt(5 + q1)", {"q1": (-2, 2)}),
    ("1/(4 + q1^2)", {"q1": (-2, 2)}),
    ("q1/(3 + q2)", {"q1": (-2, 2), "q2": (-0.5, 2)}),
    ("(q1 + q2)^4", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("q1^-2", {"q1": (0.5, 2)}),
    ("(2 + q1^2)^-1", {"q1": (-2, 2)}),
    ("sin(q1)*cos(q2)", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("exp(q1)*sin(q2)", {"q1": (-1, 1), "q2": (-2, 2)}),
    ("ln(exp(q1) + exp(q2))", {"q1": (-1, 1), "q2": (-1, 1)}),
    ("sqrt(2 + sin(q1))", {"q1": (-2, 2)}),
    ("q1*exp(-q1^2)", {"q1": (-2, 2)}),
    ("(q1 - q2)/(4 + q1^2 + q2^2)", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("p1^2*q1 - p2*q2^3", {"p1": (-2, 2), "p2": (-2, 2), "q1": (-2, 2), "q2": (-2, 2)}),
    ("qd1*pd1 + qd2*pd2", {"qd1": (-2, 2), "qd2": (-2, 2), "pd1": (-2, 2), "pd2": (-2, 2)}),
    ("-(1/2)*(qd1 + qd2)^2 + p3*qd3",
     {"qd1": (-2, 2), "qd2": (-2, 2), "qd3": (-2, 2), "p3": (-2, 2)}),
    ("lam1*(p1 + q1*p2)", {"lam1": (-2, 2), "p1": (-2, 2), "p2": (-2, 2), "q1": (-2, 2)}),
    ("(1 + q1^2)*(1 + q2^2)", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("sin(q1 + q2)/(3 + cos(q1))", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("q1^5 - q2^5", {"q1": (-1.5, 1.5), "q2": (-1.5, 1.5)}),
    ("exp(sin(q1))", {"q1": (-2, 2)}),
    ("ln(2 + q1^2)*sqrt(3 + q2)", {"q1": (-2, 2), "q2": (-2, 2)}),
    ("(p1 + 2*p2 - q1)^2/(5 + q2^2)",
     {"p1": (-2, 2), "p2": (-2, 2), "q1": (-2, 2), "q2": (-2, 2)}),
]


def corpus_expressions():
    return [(parse(text), boxes) for text, boxes in CORPUS]


def sample_points(boxes, count, rng):
    """Uniform points inside the per-variable boxes."""
    names = list(boxes)
    lows = np.array([boxes[n][0] for n in names], dtype=float)
    highs = np.array([boxes[n][1] for n in names], dtype=float)
    pts = rng.uniform(lows, highs, size=(count, len(names)))
    return [dict(zip(names, row)) for row in pts]


def random_polynomial(rng, names, degree=3, terms=5):
    """Random polynomial expression text over the given variables."""
    parts = []
    for _ in range(terms):
        coeff = rng.uniform(-2, 2)
        exps = rng.integers(0, degree + 1, size=len(names))
        while exps.sum() > degree:
            exps[rng.integers(0, len(names))] = 0
        factors = [f"{coeff:.6f}"]
        for name, k in zip(names, exps):
            if k == 1:
                factors.append(name)
            elif k > 1:
                factors.append(f"{name}^{k}")
        parts.append("*".join(factors))
    return " + ".join(parts)
