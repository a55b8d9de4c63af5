import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochfi.expr import (
    Binary,
    Const,
    DomainError,
    ExprSyntaxError,
    Unary,
    UnboundVariableError,
    UnknownIdentifierError,
    Var,
    add,
    compile_vector,
    differentiate,
    evaluate,
    mul,
    parse,
    simplify,
    to_string,
    variables_for,
)

V2 = variables_for(2)


def test_parse_example_structure():
    e = parse("x2*exp(-2*x1)", V2)
    assert e == Binary("mul", Var("x2"), Unary("exp", Binary("mul", Const(-2.0), Var("x1"))))


def test_parse_constant():
    assert parse("0", V2) == Const(0.0)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x1 +", V2)
    assert info.value.position == 4
    assert "offset 4" in str(info.value)


def test_unknown_identifier_named():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("x3 + 1", V2)
    assert "x3" in str(info.value)


@pytest.mark.parametrize("src", ["x1 ** 2", "x1 ^ 2"])
def test_power_spellings(src):
    assert evaluate(parse(src, V2), {"x1": 3.0}) == 9.0


def test_evaluate_examples():
    e = parse("x2*exp(-2*x1)", V2)
    assert evaluate(e, {"x1": 0.0, "x2": 1.0}) == 1.0
    assert evaluate(e, {"x1": 0.5, "x2": 2.0}) == pytest.approx(0.735758882, abs=1e-9)


def test_domain_errors_name_node():
    with pytest.raises(DomainError) as info:
        evaluate(parse("ln(x1)", V2), {"x1": 0.0})
    assert "ln" in str(info.value)
    with pytest.raises(DomainError):
        evaluate(parse("1/x1", V2), {"x1": 0.0})
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x1)", V2), {"x1": -1.0})


def test_unbound_variable():
    with pytest.raises(UnboundVariableError):
        evaluate(parse("x1 + x2", V2), {"x1": 1.0})


def _fd(e, point, name, h=1e-6):
    hi = dict(point, **{name: point[name] + h})
    lo = dict(point, **{name: point[name] - h})
    return (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1, 1), st.floats(0.5, 2))
def test_derivatives_match_finite_differences(x1, x2):
    e = parse("x2*exp(-2*x1)", V2)
    p = {"t": 0.0, "x1": x1, "x2": x2}
    d1 = evaluate(differentiate(e, "x1"), p)
    d2 = evaluate(differentiate(e, "x2"), p)
    assert d1 == pytest.approx(-2 * x2 * math.exp(-2 * x1), rel=1e-12)
    assert d1 == pytest.approx(_fd(e, p, "x1"), rel=1e-6, abs=1e-8)
    assert d2 == pytest.approx(math.exp(-2 * x1), rel=1e-12)


def test_time_derivative_zero():
    assert simplify(differentiate(parse("x2*exp(-2*x1)", V2), "t")) == Const(0.0)


def test_simplify_examples():
    x1 = Var("x1")
    assert simplify(Binary("mul", Const(0.0), Unary("exp", x1))) == Const(0.0)
    assert simplify(Binary("add", x1, Const(0.0))) == x1
    assert simplify(Binary("mul", Const(2.0), Const(3.0))) == Const(6.0)
    assert add(x1, Const(0.0)) == x1
    assert mul(Const(2.0), Const(3.0)) == Const(6.0)


SOURCES = [
    "x2*exp(-2*x1)",
    "x1 - x2 - (x1 - x2)",
    "-(x1^2) + sin(x2)/(1 + x1*x1)",
    "2^-1 * cos(t - x1) - -x2",
    "sqrt(1 + x1^2) * ln(2 + x2^2) / 3",
    "x1/x2/2",
    "(x1 + x2)^3 - t*x1",
]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SOURCES), st.floats(-2, 2), st.floats(0.1, 3), st.floats(0, 1))
def test_print_parse_round_trip(src, x1, x2, t):
    e = parse(src, V2)
    p = {"t": t, "x1": x1, "x2": x2}
    again = parse(to_string(e), V2)
    assert evaluate(again, p) == pytest.approx(evaluate(e, p), rel=1e-12, abs=1e-12)
    assert evaluate(simplify(e), p) == pytest.approx(evaluate(e, p), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SOURCES), st.floats(-2, 2), st.floats(0.1, 3), st.floats(0, 1))
def test_compiled_matches_evaluate(src, x1, x2, t):
    e = parse(src, V2)
    f = compile_vector([e], 2)
    assert f(t, [x1, x2])[0] == pytest.approx(evaluate(e, {"t": t, "x1": x1, "x2": x2}), rel=1e-14, abs=1e-14)


def test_compiled_domain_error():
    f = compile_vector([parse("ln(x1)", V2)], 2)
    with pytest.raises(DomainError):
        f(0.0, [0.0, 1.0])


def test_gamma_variable():
    e = parse("gamma*x1", variables_for(2))
    assert compile_vector([e], 2)(0.0, [2.0, 0.0], 0.5)[0] == 1.0
