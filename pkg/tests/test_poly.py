import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from stratcheck.poly import (
    JetMismatchError,
    MapGerm,
    ParseError,
    PolyArray,
    Polynomial,
    evaluate,
    format_poly,
    gradient,
    jet,
    jet_mismatches,
    parse,
    residuals,
)

coeffs = st.floats(-5, 5, allow_nan=False).filter(lambda c: abs(c) > 1e-3)


@st.composite
def polynomials(draw, nvars=None, max_degree=4, constant=True):
    n = draw(st.integers(1, 3)) if nvars is None else nvars
    exps = st.tuples(*[st.integers(0, max_degree) for _ in range(n)]).filter(
        lambda e: sum(e) <= max_degree and (constant or sum(e) > 0)
    )
    terms = draw(st.dictionaries(exps, coeffs, max_size=6))
    return Polynomial(terms, n)


def to_sympy(p: Polynomial):
    xs = sympy.symbols(f"x1:{p.nvars + 1}")
    expr = sympy.Integer(0)
    for e, c in p.items():
        expr += sympy.Float(c, 30) * sympy.Mul(*[x**k for x, k in zip(xs, e)])
    return sympy.expand(expr), xs


def close_to_sympy(p: Polynomial, expr, xs, tol=1e-9):
    poly = sympy.Poly(expr, *xs) if expr != 0 else None
    want = {} if poly is None else {m: float(c) for m, c in zip(poly.monoms(), poly.coeffs())}
    got = dict(p.terms)
    for k in set(want) | set(got):
        a, b = got.get(k, 0.0), want.get(k, 0.0)
        assert abs(a - b) <= tol * max(1.0, abs(b)), (k, a, b)


# construction and arithmetic


def test_zero_coefficients_are_dropped_and_order_is_canonical():
    p = Polynomial({(0, 1): 2.0, (2, 0): 0.0, (1, 1): -1.0, (3, 0): 1.0}, 2)
    assert list(p.terms) == [(3, 0), (1, 1), (0, 1)]
    assert p.degree == 3 and p.min_degree == 1


def test_zero_polynomial():
    z = Polynomial.zero(3)
    assert z.is_zero() and format_poly(z) == "0"
    assert evaluate(z, np.ones(3)) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_arithmetic_matches_sympy(data):
    n = data.draw(st.integers(1, 3))
    a = data.draw(polynomials(nvars=n, max_degree=3))
    b = data.draw(polynomials(nvars=n, max_degree=3))
    ea, xs = to_sympy(a)
    eb, _ = to_sympy(b)
    close_to_sympy(a + b, sympy.expand(ea + eb), xs)
    close_to_sympy(a - b, sympy.expand(ea - eb), xs)
    close_to_sympy(a * b, sympy.expand(ea * eb), xs)
    close_to_sympy(a**2, sympy.expand(ea**2), xs)


@settings(max_examples=60, deadline=None)
@given(polynomials(max_degree=5))
def test_derivative_matches_sympy(p):
    expr, xs = to_sympy(p)
    for i, d in enumerate(gradient(p)):
        close_to_sympy(d, sympy.expand(sympy.diff(expr, xs[i])), xs)


@settings(max_examples=60, deadline=None)
@given(polynomials(max_degree=4), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_evaluation_matches_sympy(p, pt):
    expr, xs = to_sympy(p)
    x = np.array(pt[: p.nvars])
    want = float(expr.subs(dict(zip(xs, x)))) if expr != 0 else 0.0
    assert evaluate(p, x) == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_batched_evaluation_shapes():
    p = parse("x1^2 - 3*x1*x2 + x2", 2)
    x = np.random.default_rng(0).standard_normal((4, 5, 2))
    v = p(x)
    assert v.shape == (4, 5)
    assert np.allclose(v, x[..., 0] ** 2 - 3 * x[..., 0] * x[..., 1] + x[..., 1])
    with pytest.raises(ValueError):
        p(np.ones(3))


def test_poly_array_matches_individual_evaluation():
    polys = [parse(s, 3) for s in ("x1", "x2^2*x3", "-x1*x3 + 2", "0")]
    arr = PolyArray(polys, shape=(2, 2))
    x = np.random.default_rng(1).standard_normal((7, 3))
    out = arr(x)
    assert out.shape == (7, 2, 2)
    for k, p in enumerate(polys):
        assert np.allclose(out[:, k // 2, k % 2], evaluate(p, x))


def test_truncate_and_extend():
    p = parse("x1 + x1*x2 + x2^3", 2)
    assert p.truncate(2) == parse("x1 + x1*x2", 2)
    q = p.extend(3)
    assert q.nvars == 3 and q(np.array([1.0, 2.0, 99.0])) == p(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        p.extend(1)


def test_power_rejects_negative_exponent():
    with pytest.raises(ValueError):
        parse("x1", 1) ** -1


# parsing


@pytest.mark.parametrize(
    "text, expected",
    [
        ("x1^2+x2^2", {(2, 0): 1.0, (0, 2): 1.0}),
        ("-x1 + 2.5e-1*x2", {(1, 0): -1.0, (0, 1): 0.25}),
        ("(x1 - x2)^2", {(2, 0): 1.0, (1, 1): -2.0, (0, 2): 1.0}),
        ("x1*x1*x2", {(2, 1): 1.0}),
        ("3", {(0, 0): 3.0}),
        ("x1 - x1", {}),
        ("-(x2)^2", {(0, 2): -1.0}),
    ],
)
def test_parse_examples(text, expected):
    assert parse(text, 2) == Polynomial(expected, 2)


@pytest.mark.parametrize(
    "text, position",
    [
        ("x1^2+*x2", 5),
        ("x1^", 3),
        ("x3", 0),
        ("x1 + y", 5),
        ("(x1 + x2", 8),
        ("x1^-2", 3),
        ("x1^2.5", 3),
        ("", 0),
        ("x1 x2", 3),
        ("t*x1", 0),
    ],
)
def test_parse_errors_carry_position(text, position):
    with pytest.raises(ParseError) as err:
        parse(text, 2)
    assert err.value.position == position
    assert f"position {position}" in str(err.value)


def test_parse_with_t():
    p = parse("x1^2 + t*x1^3", 2, allow_t=True)
    assert p.nvars == 3
    assert p.terms == {(3, 0, 1): 1.0, (2, 0, 0): 1.0}


@settings(max_examples=100, deadline=None)
@given(polynomials(max_degree=5))
def test_format_parse_round_trip(p):
    assert parse(format_poly(p), p.nvars) == p


def test_parse_agrees_with_sympy_on_nested_expression():
    text = "(x1 + 2*x2)^3 - x1*(x2 - 1)^2 + 0.5"
    expr = sympy.expand(sympy.sympify(text.replace("^", "**")))
    xs = sympy.symbols("x1:3")
    close_to_sympy(parse(text, 2), expr, xs)


# map germs and jets


def test_germ_validation():
    with pytest.raises(ValueError, match="vanish"):
        MapGerm.from_texts(["x1 + 1"], 2)
    with pytest.raises(ValueError, match="n >= p"):
        MapGerm.from_texts(["x1", "x1^2", "x1^3"], 2)
    with pytest.raises(ValueError):
        MapGerm((), 2)


def test_germ_json_round_trip():
    f = MapGerm.from_texts(["x1 - 0.1*x2^2", "x2*x3"], 3)
    assert MapGerm.from_json(f.to_json()) == f
    with pytest.raises(ValueError):
        MapGerm.from_json({"components": ["x1"]})


def test_germ_values_and_jacobian():
    f = MapGerm.from_texts(["x1^2 - x2^2", "x1*x2"], 2)
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    assert np.allclose(f(x), [[-3.0, 2.0], [-0.75, -0.5]])
    jac = f.jacobian(x)
    assert jac.shape == (2, 2, 2)
    assert np.allclose(jac[0], [[2.0, -4.0], [2.0, 1.0]])


def test_jet_and_residuals():
    f = MapGerm.from_texts(["x1^2 - x2^2 + x1^3"], 2)
    g = MapGerm.from_texts(["x1^2 - x2^2 + x2^4"], 2)
    assert jet(f, 2) == MapGerm.from_texts(["x1^2 - x2^2"], 2)
    rf, rg = residuals(f, g, 2)
    assert rf == MapGerm.from_texts(["x1^3"], 2)
    assert rg == MapGerm.from_texts(["x2^4"], 2)
    with pytest.raises(ValueError):
        jet(f, 0)


def test_jet_mismatch_lists_offending_monomial():
    f = MapGerm.from_texts(["x1^2 - x2^2"], 2)
    g = MapGerm.from_texts(["x1^2 - x2^2 + 3*x1*x2"], 2)
    assert jet_mismatches(f, g, 2) == [(0, (1, 1), 0.0, 3.0)]
    with pytest.raises(JetMismatchError, match=r"x1\*x2"):
        residuals(f, g, 2)
    assert jet_mismatches(f, g, 1) == []
