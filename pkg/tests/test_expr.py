import numpy as np
import pytest

from artifact.builtin_examples import hyperbolic_paraboloid
from artifact.expr import ExpressionError, parse_field


def test_paraboloid_expression_matches_builtin():
    S = hyperbolic_paraboloid(1)
    X = np.random.default_rng(0).normal(size=(5, 3))
    for text in ("t - (x^2 - y^2)/4", "x3 - (x1**2 - x2**2) / 4", "-(x*x - y*y)/4 + t"):
        f = parse_field(text, 3)
        np.testing.assert_allclose(f(X), S.f(X), atol=1e-15)
        a, b = f.jet(X, 3), S.f.jet(X, 3)
        for s1, s2 in zip(a.slots(), b.slots()):
            np.testing.assert_allclose(s1, s2, atol=1e-15)


def test_sqrt_constants_and_powers():
    f = parse_field("x3 - sqrt(1 + x1^2) * pi + e^0 + x2^1.5", 3)
    X = np.array([[2.0, 4.0, 1.0]])
    assert f(X)[0] == pytest.approx(1 - np.sqrt(5) * np.pi + 1 + 8)
    J = f.jet(X, 1)
    assert J.d1[0, 0] == pytest.approx(-np.pi * 2 / np.sqrt(5))
    assert J.d1[0, 1] == pytest.approx(1.5 * 2)


def test_coordinate_aliases_only_in_three_dimensions():
    with pytest.raises(ExpressionError):
        parse_field("x + t", 5)
    assert parse_field("x5 - x1*x2", 5)(np.ones((1, 5)))[0] == 0


@pytest.mark.parametrize("text", ["__import__('os')", "x1.real", "x1 < 2", "sqrt(x1, x2)", "z + 1",
                                  "x1 +", "lambda: 1", "[x1]", "True"])
def test_rejected_expressions(text):
    with pytest.raises(ExpressionError):
        parse_field(text, 3)
