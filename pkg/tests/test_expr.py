import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ihj.expr import (
    Add, Call, Div, DomainError, ExprSyntaxError, Mul, Neg, Num, Pow, Sub,
    Var, differentiate, eval_jet1, eval_jet2, evaluate, finite_diff_grad,
    finite_diff_hess, parse, substitute, to_str,
)

from corpus import corpus_expressions, sample_points


def test_parse_free_vars_in_order_of_appearance():
    e = parse("p1*qd1 - (1/2)*(qd1 + qd2)^2")
    assert e.free_vars == ("p1", "qd1", "qd2")


def test_parse_constant():
    e = parse("0")
    assert e.free_vars == ()
    assert e.eval({}) == 0.0


def test_parse_error_carries_location():
    with pytest.raises(ExprSyntaxError) as err:
        parse("q1*(")
    assert err.value.col == 4
    assert err.value.line == 1


def test_parse_unknown_function():
    with pytest.raises(ExprSyntaxError) as err:
        parse("q1 + foo(q2)")
    assert "foo" in str(err.value)


@pytest.mark.parametrize("text", ["q1^1.5", "q1^q2", "q1^(2)"])
def test_parse_non_integer_exponent(text):
    with pytest.raises(ExprSyntaxError) as err:
        parse(text)
    assert "exponent" in str(err.value) or "integer" in str(err.value)


def test_comments_and_whitespace():
    e = parse("q1 # position\n + q2")
    assert e.eval({"q1": 1, "q2": 2}) == 3.0


def test_eval_basic():
    assert parse("q1^2 + q2").eval({"q1": 2, "q2": 1}) == 5.0
    assert parse("sin(0)").eval({}) == 0.0


def test_eval_domain_errors():
    with pytest.raises(DomainError):
        parse("1/q1").eval({"q1": 0.0})
    with pytest.raises(DomainError):
        parse("ln(q1)").eval({"q1": -1.0})
    with pytest.raises(DomainError):
        parse("sqrt(q1)").eval({"q1": -4.0})


def test_jet2_quadratic_form():
    e = parse("(qd1 + qd2)^2/2")
    j = e.jet2({"qd1": 1.0, "qd2": 2.0}, ("qd1", "qd2"))
    assert j.value == 4.5
    np.testing.assert_allclose(j.grad, [3.0, 3.0])
    np.testing.assert_allclose(j.hess, [[1.0, 1.0], [1.0, 1.0]])


def test_jet2_bilinear():
    e = parse("p1*qd1")
    j = e.jet2({"p1": 2.0, "qd1": 3.0}, ("p1", "qd1"))
    np.testing.assert_allclose(j.grad, [3.0, 2.0])
    np.testing.assert_allclose(j.hess, [[0.0, 1.0], [1.0, 0.0]])


def test_jet2_empty_active_set_degenerates_to_eval():
    e = parse("q1^2 + sin(q2)")
    j = e.jet2({"q1": 2.0, "q2": 0.5}, ())
    assert j.value == e.eval({"q1": 2.0, "q2": 0.5})
    assert j.grad.shape == (0,)
    assert j.hess.shape == (0, 0)


def test_finite_diff_simple():
    e = parse("q1^2")
    g = finite_diff_grad(e, {"q1": 1.0}, ("q1",), 1e-5)
    assert abs(g[0] - 2.0) < 1e-9
    e = parse("exp(q1)")
    g = finite_diff_grad(e, {"q1": 0.0}, ("q1",), 1e-5)
    assert abs(g[0] - 1.0) < 1e-9


def test_jets_match_finite_differences_on_corpus():
    rng = np.random.default_rng(20240811)
    for e, boxes in corpus_expressions():
        active = list(boxes)
        for x in sample_points(boxes, 8, rng):
            j = eval_jet2(e, x, active)
            fd_g = finite_diff_grad(e, x, active)
            err_g = np.abs(j.grad - fd_g) / (1.0 + np.abs(j.grad))
            assert err_g.max() < 1e-6, (str(e), x)
            fd_h = finite_diff_hess(e, x, active)
            err_h = np.abs(j.hess - fd_h) / (1.0 + np.abs(j.hess))
            assert err_h.max() < 1e-6, (str(e), x)
            j1 = eval_jet1(e, x, active)
            assert j1.value == j.value
            np.testing.assert_array_equal(j1.grad, j.grad)


def test_hessian_exactly_symmetric():
    rng = np.random.default_rng(7)
    for e, boxes in corpus_expressions():
        active = list(boxes)
        for x in sample_points(boxes, 3, rng):
            h = eval_jet2(e, x, active).hess
            assert (h == h.T).all()


def test_structural_derivative_matches_jets():
    rng = np.random.default_rng(99)
    for e, boxes in corpus_expressions():
        active = list(boxes)
        for x in sample_points(boxes, 5, rng):
            j = eval_jet1(e, x, active)
            for i, name in enumerate(active):
                d = differentiate(e.root, name)
                assert abs(evaluate(d, x) - j.grad[i]) < 1e-12 * (1 + abs(j.grad[i]))


def test_substitute_composes():
    e = parse("p1^2 + q1")
    composed = e.subs({"p1": parse("q1 + q2").root})
    assert composed.eval({"q1": 1.0, "q2": 2.0}) == 10.0
    assert "p1" not in composed.free_vars


def test_substitution_simplifies_cancelling_terms():
    e = parse("(1/2)*(qd1 + qd2)^2")
    h = e.subs({"qd1": parse("p1 - qd2").root}).subs({"qd2": 0.0})
    assert h.free_vars == ("p1",)
    assert h.eval({"p1": 3.0}) == 4.5


def test_print_parse_round_trip_on_corpus():
    for e, _ in corpus_expressions():
        printed = str(e)
        again = parse(printed)
        assert again.root == e.root, printed
        assert str(again) == printed


_names = st.sampled_from(["q1", "q2", "p1", "qd1", "x3"])
_numbers = st.one_of(
    st.integers(min_value=0, max_value=99).map(float),
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False),
)


def _asts(depth):
    if depth == 0:
        return st.one_of(_numbers.map(Num), _names.map(Var))
    sub_ast = _asts(depth - 1)
    return st.one_of(
        _numbers.map(Num),
        _names.map(Var),
        sub_ast.map(Neg),
        st.tuples(sub_ast, sub_ast).map(lambda t: Add(*t)),
        st.tuples(sub_ast, sub_ast).map(lambda t: Sub(*t)),
        st.tuples(sub_ast, sub_ast).map(lambda t: Mul(*t)),
        st.tuples(sub_ast, sub_ast).map(lambda t: Div(*t)),
        st.tuples(sub_ast, st.integers(min_value=-4, max_value=4)).map(lambda t: Pow(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "ln", "sqrt"]), sub_ast)
        .map(lambda t: Call(*t)),
    )


@settings(max_examples=300, deadline=None)
@given(_asts(4))
def test_print_parse_round_trip_on_random_asts(node):
    printed = to_str(node)
    assert parse(printed).root == node


def test_derivative_of_functions():
    x = {"q1": 0.7}
    for text, dtext in [
        ("sin(q1)", "cos(q1)"),
        ("cos(q1)", "-sin(q1)"),
        ("exp(q1)", "exp(q1)"),
        ("ln(q1)", "1/q1"),
        ("sqrt(q1)", "1/(2*sqrt(q1))"),
    ]:
        d = differentiate(parse(text).root, "q1")
        assert abs(evaluate(d, x) - parse(dtext).eval(x)) < 1e-15


def test_jet_pow_at_zero_base():
    j = eval_jet2(parse("q1^2"), {"q1": 0.0}, ("q1",))
    assert j.value == 0.0 and j.grad[0] == 0.0 and j.hess[0, 0] == 2.0
    with pytest.raises(DomainError):
        eval_jet2(parse("q1^-1"), {"q1": 0.0}, ("q1",))
