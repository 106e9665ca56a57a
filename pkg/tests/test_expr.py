import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgl.expr import ExpressionError, compile_expression


def test_arithmetic_and_functions():
    e = compile_expression("2^3 + max(x1, x2) - abs(-1) + exp(0) * cos(0)", 2)
    assert e(0.0, np.array([1.0, 4.0])) == pytest.approx(8 + 4 - 1 + 1)


def test_time_only_expression_broadcasts():
    e = compile_expression("0.45 - 0.02*t", 0)
    out = e(np.array([0.0, 1.0, 3.0]))
    np.testing.assert_allclose(out, [0.45, 0.43, 0.39])


def test_number_source():
    e = compile_expression(1.5, 2)
    assert e(0.0, np.zeros((3, 2))).tolist() == [1.5, 1.5, 1.5]


def test_constants():
    assert float(compile_expression("pi + e", 0)(0.0)) == pytest.approx(math.pi + math.e)


@pytest.mark.parametrize("bad", [
    "__import__('os')", "x3", "y", "lambda: 1", "x1 if x1 else 0", "foo(1)",
    "min(1)", "exp(1, 2)", "'a'", "x1 < 2", "(",
])
def test_rejects_outside_grammar(bad):
    with pytest.raises(ExpressionError):
        compile_expression(bad, 2)


def test_state_required():
    e = compile_expression("x1 + t", 1)
    with pytest.raises(ExpressionError):
        e(0.0)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_matches_python(a, b):
    e = compile_expression("x1*x2 - 3*x1 + sin(x2)/2", 2)
    assert float(e(0.0, np.array([a, b]))) == pytest.approx(a * b - 3 * a + math.sin(b) / 2, abs=1e-12)
