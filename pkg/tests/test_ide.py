import numpy as np
import pytest

from ihj.expr import parse
from ihj.ide import (
    AffineIDE, NotVelocityAffine, affine_eliminate, decompose_affine,
    pointwise_integrability, project_to_base, run_integrability,
    tangent_constraints,
)
from ihj.spaces import CoordSystem, generic_tangent, names
from ihj.systems import ImplicitSystem, sample_zero_set


def make_system(m, texts, prefix="x"):
    return ImplicitSystem(generic_tangent(m, prefix), tuple(parse(t) for t in texts))


def rs_system(hx="x1", hp="x2"):
    """Partly redundant copy of a Hamiltonian flow on (x, p, r, s):
    r = p, s = 0, rd = -dH/dx, sd = xd - dH/dp."""
    return make_system(4, [
        "x3 - x2",
        "x4",
        f"xd3 + {hx}",
        f"xd4 - xd1 + {hp}",
    ])


def zero_set_residuals(constraints, points):
    return max(abs(c.eval(p)) for c in constraints for p in points)


# --- affine decomposition and elimination ------------------------------------

def test_decompose_affine():
    from ihj.expr import to_str
    row = decompose_affine(parse("x1 + 2*x2*xd1 - xd2"), ["xd1", "xd2"])
    assert to_str(row.rest) == "x1"
    assert to_str(row.coeffs[0]) == "2 * x2"
    assert to_str(row.coeffs[1]) == "-1"


def test_decompose_rejects_nonaffine():
    assert decompose_affine(parse("xd1^2 - x1"), ["xd1"]) is None
    assert decompose_affine(parse("xd1*xd2"), ["xd1", "xd2"]) is None


def test_eliminate_finds_solvability_conditions():
    rows = [decompose_affine(parse(t), ["xd1", "xd2"])
            for t in ("xd1 - x1", "xd1 - x2")]
    pts = [{"x1": 0.3, "x2": 1.7}, {"x1": -1.1, "x2": 0.4}]
    res = affine_eliminate(rows, ["xd1", "xd2"], pts)
    assert len(res.base_constraints) == 1
    got = res.base_constraints[0]
    assert abs(parse("x1 - x2").eval(pts[0])) == pytest.approx(
        abs(__import__("ihj.expr", fromlist=["evaluate"]).evaluate(got, pts[0])))
    assert res.free_vars == ["xd2"]
    solved = dict(res.solved)
    assert "xd1" in solved


def test_eliminate_detects_contradiction():
    rows = [decompose_affine(parse(t), ["xd1"]) for t in ("xd1 - 1", "xd1")]
    res = affine_eliminate(rows, ["xd1"], [{"x1": 0.0}])
    assert res.contradiction


# --- projection and tangency --------------------------------------------------

def test_project_to_base_rs_example():
    affine = AffineIDE.from_system(rs_system())
    constraints, elim = project_to_base(affine)
    # projection adds nothing beyond r = p and s = 0
    assert [str(c) for c in constraints] == ["x3 - x2", "x4"]
    assert not elim.stratified


def test_project_explicit_ode_has_no_base_constraints():
    affine = AffineIDE.from_system(make_system(2, ["xd1 - x2", "xd2 + x1"]))
    constraints, _ = project_to_base(affine)
    assert constraints == []


def test_project_zero_row_gives_base_constraint():
    affine = AffineIDE.from_system(make_system(1, ["xd1", "x1"]))
    constraints, _ = project_to_base(affine)
    assert [str(c) for c in constraints] == ["x1"]


def test_tangent_constraints():
    out = tangent_constraints([parse("x3 - x2"), parse("x4")],
                              names("x", 4), names("xd", 4))
    assert [str(c) for c in out] == ["x3 - x2", "xd3 - xd2", "x4", "xd4"]
    out = tangent_constraints([parse("x1^2 - 1")], names("x", 1), names("xd", 1))
    assert str(out[1]) == "2 * x1 * xd1"
    assert tangent_constraints([], names("x", 2), names("xd", 2)) == []


# --- the integrability algorithm ----------------------------------------------

def test_integrability_rs_example_stabilizes_at_one():
    affine = AffineIDE.from_system(rs_system())
    trace = run_integrability(affine, seed=3)
    assert trace.stabilized_at == 1
    assert trace.empty_from is None
    # final constraint set has the same zero set as
    # {xd1 = x2, xd3 = xd2 = -x1, x3 = x2, x4 = 0, xd4 = 0}
    expected = [parse(t) for t in
                ("xd1 - x2", "xd2 + x1", "xd3 + x1", "x3 - x2", "x4", "xd4")]
    final = [parse(t) for t in trace.final.e_constraints]
    final_sys = ImplicitSystem(generic_tangent(4), tuple(final))
    samples = sample_zero_set(final_sys, (-2, 2), 60, np.random.default_rng(0))
    assert len(samples) >= 30
    assert zero_set_residuals(expected, samples.points) < 1e-9
    exp_sys = ImplicitSystem(generic_tangent(4), tuple(expected))
    samples2 = sample_zero_set(exp_sys, (-2, 2), 60, np.random.default_rng(1))
    assert zero_set_residuals(final, samples2.points) < 1e-9


def test_integrability_monotone_and_idempotent():
    affine = AffineIDE.from_system(rs_system())
    trace = run_integrability(affine, seed=5)
    texts = [set(rec.e_constraints) for rec in trace.iterations]
    for earlier, later in zip(texts, texts[1:]):
        assert earlier <= later
    # one more iteration from the fixed point produces nothing new
    final = AffineIDE.from_system(
        ImplicitSystem(generic_tangent(4),
                       tuple(parse(t) for t in trace.final.e_constraints)))
    again = run_integrability(final, seed=6)
    assert again.stabilized_at == 0


def test_integrability_explicit_ode_stabilizes_immediately():
    affine = AffineIDE.from_system(make_system(2, ["xd1 - x2", "xd2 + x1"]))
    trace = run_integrability(affine, seed=0)
    assert trace.stabilized_at == 0


def test_integrability_contradiction_reports_empty():
    affine = AffineIDE.from_system(make_system(1, ["x1", "xd1 - 1"]))
    trace = run_integrability(affine, seed=0)
    assert trace.stabilized_at is None
    assert trace.empty_from is not None
    assert any("no integrable part" in n for n in trace.notes)


def test_from_system_rejects_nonaffine_velocity():
    with pytest.raises(NotVelocityAffine):
        AffineIDE.from_system(make_system(1, ["xd1^2 - x1"]))


# --- pointwise mode ------------------------------------------------------------

def nonintegrable_system(k=1.0):
    # single constraint q^2 + p^2 + (qd+1)^2 + pd^2 = k on T(T*R)
    coords = CoordSystem("TM", ("q1", "p1", "qd1", "pd1"))
    return ImplicitSystem(coords, (parse(f"q1^2 + p1^2 + (qd1 + 1)^2 + pd1^2 - {k}"),))


def test_pointwise_flags_boundary_of_nonintegrable_example():
    k = 1.0
    sys = nonintegrable_system(k)
    rng = np.random.default_rng(11)
    bad, good = [], []
    for _ in range(100):
        theta = rng.uniform(0, 2 * np.pi)
        q, p = np.sqrt(k) * np.cos(theta), np.sqrt(k) * np.sin(theta)
        if abs(q) < 1e-2:
            continue
        bad.append({"q1": q, "p1": p, "qd1": -1.0, "pd1": 0.0})
    for _ in range(100):
        q, p = rng.uniform(-0.5, 0.5, 2)
        rem = k - q * q - p * p
        ang = rng.uniform(0, 2 * np.pi)
        qd = -1.0 + np.sqrt(rem) * np.cos(ang)
        pd = np.sqrt(rem) * np.sin(ang)
        good.append({"q1": q, "p1": p, "qd1": qd, "pd1": pd})
    report = pointwise_integrability(sys, bad + good)
    flagged = report.checks[0].details["flagged"]
    flagged_keys = {(round(f["q1"], 12), round(f["p1"], 12)) for f in flagged}
    for b in bad:
        assert (round(b["q1"], 12), round(b["p1"], 12)) in flagged_keys
    for g in good:
        assert (round(g["q1"], 12), round(g["p1"], 12)) not in flagged_keys


def test_pointwise_does_not_flag_affine_fixed_point():
    affine = AffineIDE.from_system(rs_system())
    trace = run_integrability(affine, seed=9)
    final = ImplicitSystem(generic_tangent(4),
                           tuple(parse(t) for t in trace.final.e_constraints))
    samples = sample_zero_set(final, (-2, 2), 40, np.random.default_rng(2))
    report = pointwise_integrability(final, samples.points)
    assert report.passed
