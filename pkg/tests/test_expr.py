import numpy as np
import pytest

from hessquo.expr import Expression, ExpressionError


def test_arithmetic_and_power_caret():
    e = Expression("2*x1^2 - x2/4 + 1", ("x1", "x2"))
    assert float(e(x1=3.0, x2=2.0)) == 18.5


def test_functions_and_constants():
    e = Expression("sin(pi*x1) + sqrt(abs(z)) + exp(0) + cos(0)", ("x1", "z"))
    assert float(e(x1=0.5, z=-4.0)) == pytest.approx(5.0)


def test_variadic_max_min():
    e = Expression("max(x1, 0.2, z) - min(x1, z)", ("x1", "z"))
    np.testing.assert_allclose(e(x1=np.array([0.0, 1.0]), z=np.array([0.1, -1.0])), [0.2, 2.0])


def test_broadcasts_constant_expressions():
    e = Expression("3", ("x1", "x2"))
    out = e(x1=np.zeros(4), x2=np.zeros(4))
    assert out.shape == (4,) and np.all(out == 3.0)
    out[0] = 7.0
    assert np.all(e(x1=np.zeros(4), x2=np.zeros(4)) == 3.0)


@pytest.mark.parametrize(
    "text",
    [
        "x1 +",
        "__import__('os')",
        "x1.real",
        "y + 1",
        "log(x1)",
        "max(x1)",
        "sin(x1, x1)",
        "'a'",
        "True",
        "x1 if x1 else 0",
        "[x1]",
        "x1 // 2",
        "sin(x=x1)",
    ],
)
def test_rejected_expressions(text):
    with pytest.raises(ExpressionError):
        Expression(text, ("x1",))


def test_missing_variable_at_call():
    with pytest.raises(ExpressionError, match="missing"):
        Expression("x1 + x2", ("x1", "x2"))(x1=1.0)


def test_non_string_rejected():
    with pytest.raises(ExpressionError):
        Expression(3.0, ("x1",))


def test_domain_errors_give_nan_not_warnings():
    e = Expression("sqrt(x1) + 1/x1", ("x1",))
    with np.errstate(all="raise"):
        out = e(x1=np.array([-1.0, 0.0, 4.0]))
    assert np.isnan(out[0]) and np.isinf(out[1]) and out[2] == 2.25
