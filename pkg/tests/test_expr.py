import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from charred import expr as ex

# -- strategies

_leaf = st.one_of(
    st.sampled_from([ex.Var("x"), ex.Var("t"), ex.Var("u")]),
    st.floats(-5, 5, allow_nan=False).map(lambda v: ex.Const(round(v, 3))),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(["+", "-", "*"]), children, children).map(lambda p: ex.Binary(*p)),
        st.tuples(st.sampled_from(["exp", "sin", "cos", "arctan"]), children).map(lambda p: ex.Unary(*p)),
        children.map(lambda c: ex.Unary("neg", c)),
        st.tuples(children, st.integers(2, 3)).map(lambda p: ex.Binary("^", p[0], ex.Const(float(p[1])))),
    )


smooth_exprs = st.recursive(_leaf, _extend, max_leaves=8)
points = st.fixed_dictionaries({v: st.floats(-1, 1) for v in ("x", "t", "u")})


def _safe_eval(e, b):
    try:
        v = ex.evaluate(e, b)
    except (ex.DomainError, OverflowError):
        return None
    return v if math.isfinite(v) and abs(v) < 1e6 else None


# -- parsing and printing

@pytest.mark.parametrize("text, value", [
    ("1 + 2*3", 7.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("(1 - 4)/2", -1.5),
    ("e", math.e),
    ("2*pi", 2 * math.pi),
    ("ln(exp(1.5))", 1.5),
    ("1.5e2 + 0.5", 150.5),
])
def test_constant_evaluation(text, value):
    assert ex.evaluate(ex.parse(text), {}) == pytest.approx(value, rel=1e-15)


def test_arcos_alias_reads_as_arccos():
    assert ex.parse("arcos(0.5)") == ex.parse("arccos(0.5)")


@pytest.mark.parametrize("bad", ["1+", "(x", "x y", "foo(1)", "2**", ""])
def test_parse_errors(bad):
    with pytest.raises(ex.ParseError):
        ex.parse(bad)


def test_unbound_variable():
    with pytest.raises(ex.UnboundVariableError):
        ex.evaluate(ex.parse("x + 1"), {})


@pytest.mark.parametrize("text", ["ln(-1)", "sqrt(-4)", "1/0", "arccos(2)"])
def test_domain_errors(text):
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse(text), {})


def test_variables():
    assert ex.variables(ex.parse("x^2*exp(-t) + sin(u)")) == {"x", "t", "u"}


@settings(max_examples=200, deadline=None)
@given(smooth_exprs, points)
def test_print_parse_round_trip(e, b):
    # "-1" parses as negation of 1, so compare printed form and value
    text = ex.to_string(e)
    back = ex.parse(text)
    assert ex.to_string(back) == text
    v = _safe_eval(e, b)
    assume(v is not None)
    assert ex.evaluate(back, b) == pytest.approx(v, rel=1e-12, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(smooth_exprs, points)
def test_compiled_matches_interpreter(e, b):
    v = _safe_eval(e, b)
    assume(v is not None)
    f = ex.compile_numpy(e, ("x", "t", "u"))
    got = float(np.asarray(f(np.float64(b["x"]), np.float64(b["t"]), np.float64(b["u"]))))
    assert got == pytest.approx(v, rel=1e-12, abs=1e-12)


# -- differentiation

@settings(max_examples=150, deadline=None)
@given(smooth_exprs, points, st.sampled_from(["x", "t", "u"]))
def test_derivative_matches_central_difference(e, b, var):
    d = _safe_eval(ex.differentiate(e, var), b)
    h = 1e-5
    up = _safe_eval(e, {**b, var: b[var] + h})
    dn = _safe_eval(e, {**b, var: b[var] - h})
    assume(d is not None and up is not None and dn is not None)
    fd = (up - dn) / (2 * h)
    assert d == pytest.approx(fd, rel=1e-5, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(smooth_exprs)
def test_derivative_of_absent_variable_is_zero(e):
    assume("s" not in ex.variables(e))
    assert ex.differentiate(e, "s") == ex.Const(0.0)


@pytest.mark.parametrize("text, var, expected", [
    ("x^3", "x", "3 * x^2"),
    ("exp(2*t)", "t", "2 * exp(2 * t)"),
    ("ln(u)", "u", "1 / u"),
])
def test_simple_derivatives(text, var, expected):
    d = ex.differentiate(ex.parse(text), var)
    for v in (0.3, 1.7):
        assert ex.evaluate(d, {var: v}) == pytest.approx(ex.evaluate(ex.parse(expected), {var: v}))


# -- polynomial profile

@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=1, max_size=5), st.floats(-2, 2))
def test_polynomial_profile_recovers_coefficients(coeffs, s):
    assume(coeffs[-1] != 0)
    text = " + ".join(f"({c})*s^{i}" for i, c in enumerate(coeffs))
    prof = ex.polynomial_profile(ex.parse(text), "s")
    assert prof is not None
    degree, found = prof
    assert degree == len(coeffs) - 1
    assert np.allclose(found[: len(coeffs)], coeffs)
    assert np.polynomial.polynomial.polyval(s, found) == pytest.approx(
        np.polynomial.polynomial.polyval(s, coeffs), abs=1e-9)


@pytest.mark.parametrize("text", ["exp(s)", "1/s", "s^0.5", "sin(s)"])
def test_non_polynomials(text):
    assert ex.polynomial_profile(ex.parse(text), "s") is None


def test_other_variables_disqualify_a_polynomial():
    # numeric coefficients only: anything mentioning w is not a profile in s
    assert ex.polynomial_profile(ex.parse("(s*w)^2 + s"), "s") is None
    assert ex.polynomial_profile(ex.parse("(2*s)^2 + 1"), "s") == (2, [1.0, 0.0, 4.0])
