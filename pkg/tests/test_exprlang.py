"""Expression language: parsing, evaluation, symbolic differentiation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cycleperturb.exprlang import (ParseError, compile_expr, diff, evaluate,
                                   parse, to_string)

EXPRS = [
    "x1 + x2",
    "x1*x2 - 3.5",
    "x1^2 + x2^3",
    "sin(x1)*cos(x2)",
    "exp(-x1^2)",
    "sqrt(x1^2 + x2^2 + 1)",
    "x2 - x1*(x1^2 + x2^2 - 1)",
    "sin(t)*x1 + cos(t/2)*x2",
    "(x1 + 2)*(x2 - 1)/(x1^2 + 4)",
    "-x1 - x2*(x1^2 + x2^2 - 1)",
]


def _bindings(rng):
    return {"x1": rng.uniform(-2, 2), "x2": rng.uniform(-2, 2),
            "t": rng.uniform(0, 10)}


def _py_eval(src, b):
    src = src.replace("^", "**")
    return eval(src, {"sin": math.sin, "cos": math.cos, "exp": math.exp,
                      "sqrt": math.sqrt, "abs": abs}, dict(b))


@pytest.mark.parametrize("src", EXPRS)
def test_evaluate_matches_python(src):
    rng = np.random.default_rng(0)
    e = parse(src)
    for _ in range(50):
        b = _bindings(rng)
        assert evaluate(e, b) == pytest.approx(_py_eval(src, b), rel=1e-12)


@pytest.mark.parametrize("src", EXPRS)
def test_roundtrip_through_to_string(src):
    rng = np.random.default_rng(1)
    e = parse(src)
    e2 = parse(to_string(e))
    for _ in range(20):
        b = _bindings(rng)
        assert evaluate(e2, b) == pytest.approx(evaluate(e, b), rel=1e-12)


@pytest.mark.parametrize("src", EXPRS)
@pytest.mark.parametrize("var", ["x1", "x2"])
def test_derivative_matches_finite_differences(src, var):
    rng = np.random.default_rng(2)
    e = parse(src)
    de = diff(e, var)
    h = 1e-6
    for _ in range(30):
        b = _bindings(rng)
        lo, hi = dict(b), dict(b)
        lo[var] -= h
        hi[var] += h
        fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
        scale = max(1.0, abs(fd))
        assert abs(evaluate(de, b) - fd) <= 1e-5 * scale


def test_compile_matches_evaluate_vectorized():
    rng = np.random.default_rng(3)
    e = parse("sin(t)*x1 + x2^2 - a", {"t", "x1", "x2", "a"})
    fn = compile_expr(e, ("t", "x1", "x2"), {"a": 0.25})
    t = rng.uniform(0, 5, 64)
    x1 = rng.uniform(-1, 1, 64)
    x2 = rng.uniform(-1, 1, 64)
    out = fn(t, x1, x2)
    for i in range(64):
        ref = evaluate(e, {"t": t[i], "x1": x1[i], "x2": x2[i], "a": 0.25})
        assert out[i] == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("bad", ["x1 +", "sin()", "x3", "1..2", "(x1", "x1^"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse(bad, {"x1", "x2", "t"})


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
@settings(max_examples=100, deadline=None)
def test_literal_roundtrip(x):
    e = parse(repr(abs(x)))
    assert evaluate(e, {}) == abs(x)


@given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3))
@settings(max_examples=100, deadline=None)
def test_fuzz_polynomial_identity(a, b):
    # (x1 + x2)^2 == x1^2 + 2 x1 x2 + x2^2 under parsing/evaluation
    lhs = evaluate(parse("(x1 + x2)^2"), {"x1": a, "x2": b})
    rhs = evaluate(parse("x1^2 + 2*x1*x2 + x2^2"), {"x1": a, "x2": b})
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
