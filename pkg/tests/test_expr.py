import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benney import expr as ex


def test_parse_variable():
    e = ex.parse("g", ["g"])
    assert e.root == ex.Var("g")


def test_parse_structure():
    e = ex.parse("g^2 + ln(t+g)", ["g", "t"])
    assert isinstance(e.root, ex.Binary) and e.root.op == "+"
    assert isinstance(e.root.left, ex.Binary) and e.root.left.op == "^"
    assert isinstance(e.root.right, ex.Unary) and e.root.right.op == "ln"


def test_syntax_error_offset():
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse("2*(1+", [])
    assert info.value.position == 5


def test_unknown_variable():
    with pytest.raises(ex.ExprError):
        ex.parse("g + z", ["g"])


def test_empty_source():
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse("   ", [])


@pytest.mark.parametrize(
    "src, value",
    [
        ("2^3^2", 64.0),  # left-associative
        ("-2^2", -4.0),  # ^ binds tighter than unary minus
        ("8/4/2", 1.0),
        ("1-2-3", -4.0),
        ("2*(3+4)", 14.0),
        ("-(-3)", 3.0),
    ],
)
def test_precedence(src, value):
    assert ex.parse(src)() == value


def test_eval_examples():
    assert ex.parse("g^2", ["g"])(g=3) == 9
    assert ex.parse("ln(t+g)", ["t", "g"])(t=1, g=1) == 0.6931471805599453


def test_domain_errors():
    with pytest.raises(ex.ExprDomainError):
        ex.parse("1/g", ["g"])(g=0)
    with pytest.raises(ex.ExprDomainError):
        ex.parse("ln(g)", ["g"])(g=-1.0)
    with pytest.raises(ex.ExprDomainError):
        ex.parse("sqrt(g)", ["g"])(g=np.array([1.0, -1.0]))


def test_unbound_variable():
    with pytest.raises(ex.ExprError):
        ex.parse("g+t", ["g", "t"])(g=1.0)


def test_array_evaluation():
    g = np.linspace(0, 1, 5)
    np.testing.assert_allclose(ex.parse("g*exp(g)", ["g"])(g=g), g * np.exp(g))


def test_differentiate_examples():
    d = ex.differentiate(ex.parse("g^2", ["g"]), "g")
    assert d(g=1.5) == pytest.approx(3.0)
    d = ex.differentiate(ex.parse("ln(t+g)", ["t", "g"]), "g")
    assert d(t=1.0, g=0.5) == pytest.approx(1 / 1.5)
    d = ex.differentiate(ex.parse("g*ln(t+g)", ["t", "g"]), "g")
    assert d(t=1.0, g=1.0) == pytest.approx(math.log(2) + 0.5, abs=1e-12)


def test_differentiate_undeclared():
    with pytest.raises(ex.ExprError):
        ex.differentiate(ex.parse("g", ["g"]), "t")


PRESET_EXPRESSIONS = [
    ("exp(lam) + 0.2*sin(xi)", ("xi", "lam")),
    ("g", ("g",)),
    ("0", ("g",)),
    ("g^2 + ln(t+g)", ("g", "t")),
    ("sqrt(1+g^2)*cos(g)/(2+g)", ("g",)),
]


@pytest.mark.parametrize("src, names", PRESET_EXPRESSIONS)
def test_derivative_matches_central_difference(src, names):
    rng = np.random.default_rng(7)
    f = ex.parse(src, names)
    for var in names:
        d = ex.differentiate(f, var)
        for _ in range(100):
            b = {n: float(rng.uniform(0.1, 1.0)) for n in names}
            h = 1e-5
            hi, lo = dict(b), dict(b)
            hi[var] += h
            lo[var] -= h
            fd = (f(**hi) - f(**lo)) / (2 * h)
            val = float(d(**b))
            assert abs(val - fd) <= 1e-6 * (1 + abs(val))


def test_fuzz_random_bytes_never_crash():
    rng = random.Random(1234)
    alphabet = "0123456789.+-*/^()eglnxpsqrtcoi \t,#@"
    for _ in range(10_000):
        n = rng.randint(0, 24)
        if rng.random() < 0.5:
            s = "".join(rng.choice(alphabet) for _ in range(n))
        else:
            s = bytes(rng.randint(0, 255) for _ in range(n)).decode("latin-1")
        try:
            e = ex.parse(s, ["g", "x"])
        except ex.ExprError:
            continue
        try:
            e(g=0.5, x=0.25)
        except (ex.ExprError, OverflowError):
            pass


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_arithmetic_matches_python(a, b):
    e = ex.parse("a*b + a - b/2", ["a", "b"])
    assert e(a=a, b=b) == pytest.approx(a * b + a - b / 2, rel=1e-12, abs=1e-9)


def test_constant_and_str_roundtrip():
    c = ex.constant(2.5, ["g"])
    assert c(g=1.0) == 2.5
    e = ex.parse("(g+1)*2^g", ["g"])
    again = ex.parse(str(e), ["g"])
    assert again(g=0.7) == pytest.approx(e(g=0.7), rel=1e-15)
