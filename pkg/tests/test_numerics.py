import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benney.numerics import (
    BracketError,
    DomainError,
    GridSpec,
    NonFiniteError,
    SingularJacobianError,
    Tolerance,
    find_root,
    find_root_batch,
    fd_partial,
    fit_order,
    integrate,
    integrate_batch,
    is_nested,
    newton2d,
    newton2d_batch,
    rk4_step,
)


# --- grids and tolerances --------------------------------------------------


def test_tolerance_invariants():
    with pytest.raises(ValueError):
        Tolerance(abs=0.0)
    with pytest.raises(ValueError):
        Tolerance(rel=-1.0)
    with pytest.raises(ValueError):
        Tolerance(max_iterations=0)


def test_grid_invariants():
    with pytest.raises(ValueError):
        GridSpec.make(t=(0, 1, 1))
    with pytest.raises(ValueError):
        GridSpec.make(t=(1, 0, 3))
    g = GridSpec.make(t=(0, 1, 5), x=(-1, 1, 9))
    assert g.spacing("t") == 0.25 and g.spacing("x") == 0.25
    assert g.shape == (5, 9)
    assert is_nested([g, g.refine(), g.refine(4)])
    assert not is_nested([g, g.with_divisions(6)])


# --- quadrature ------------------------------------------------------------


def test_integrate_examples():
    assert integrate(lambda x: x, 0, 1) == pytest.approx(0.5, abs=1e-14)
    val = integrate(lambda g: g * math.log1p(g), 0, 1, Tolerance(1e-14, 1e-14))
    assert val == pytest.approx(0.25, abs=1e-13)
    assert integrate(lambda x: 1.0, 2, 2) == 0.0


@pytest.mark.parametrize("f", [math.sin, math.exp, lambda x: 1 / (1 + x * x), lambda x: x**5 - x])
def test_integrate_antisymmetric(f):
    a, b = -0.3, 1.7
    assert integrate(f, a, b) + integrate(f, b, a) == pytest.approx(0.0, abs=1e-14)


def test_integrate_nonfinite():
    with pytest.raises(NonFiniteError):
        integrate(lambda x: 1 / x if x != 0 else float("inf"), -1, 1, vectorized=False)


def test_integrate_batch_matches_scalar():
    a = np.array([0.0, 0.5, 1.0])
    b = np.array([1.0, 2.0, 1.5])
    out = integrate_batch(lambda x, i: np.exp(x), a, b, Tolerance(1e-13, 1e-13))
    np.testing.assert_allclose(out, np.exp(b) - np.exp(a), rtol=1e-12)


# --- roots -----------------------------------------------------------------


def test_find_root_examples():
    assert find_root(lambda x: x + 2, -3, 0) == pytest.approx(-2, abs=1e-10)
    assert find_root(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), abs=1e-10)
    with pytest.raises(BracketError):
        find_root(lambda x: 1.0, 0, 1)


def test_random_monotone_cubics():
    rng = np.random.default_rng(11)
    tol = Tolerance(1e-12, 0.0)
    for _ in range(50):
        a, b, c = rng.uniform(0.1, 2.0, 3)
        d = rng.uniform(-3, 3)
        f = lambda x: a * x**3 + b * x**2 / 10 + c * x + d  # noqa: E731
        xs = np.linspace(-10, 10, 2001)
        assert np.all(np.diff(f(xs)) > 0)
        r = find_root(f, -10, 10, tol)
        assert -10 <= r <= 10
        assert abs(f(r)) <= 1e-10


def test_find_root_batch_vectorized():
    c = np.linspace(0.5, 3.0, 20)
    r = find_root_batch(lambda x, i: x * x - c[i], 0.0, 2.0, fprime=lambda x, i: 2 * x, size=c.size)
    np.testing.assert_allclose(r, np.sqrt(c), rtol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5))
def test_find_root_stays_in_bracket(shift):
    r = find_root(lambda x: math.tanh(x - shift), -10, 10)
    assert -10 <= r <= 10
    assert abs(r - shift) < 1e-8


# --- Newton ----------------------------------------------------------------


def test_newton2d_examples():
    p, q = newton2d(lambda p, q: (p - 1, q + 2), (0, 0))
    assert (p, q) == pytest.approx((1, -2), abs=1e-10)
    p, q = newton2d(lambda p, q: (p * p + q * q - 1, p - q), (1, 0))
    assert (p, q) == pytest.approx((math.sqrt(0.5), math.sqrt(0.5)), abs=1e-10)
    with pytest.raises(SingularJacobianError):
        newton2d(lambda p, q: (p - q, 2 * p - 2 * q), (0.3, 0.1))


def test_newton2d_batch():
    r = np.linspace(0.5, 2, 7)
    F = lambda p, q, i: (p * p + q * q - r[i] ** 2, p - q)  # noqa: E731
    p, q = newton2d_batch(F, np.ones(7), np.zeros(7))
    np.testing.assert_allclose(p, r / math.sqrt(2), rtol=1e-12)
    np.testing.assert_allclose(q, r / math.sqrt(2), rtol=1e-12)


# --- finite differences ----------------------------------------------------


def test_fd_examples():
    assert fd_partial(np.sin, (0.0,), 0, 1e-3) == pytest.approx(1.0, abs=1e-6)
    assert fd_partial(lambda x: x * x, (3.0,), 0, 0.1) == pytest.approx(6.0, abs=1e-12)
    assert fd_partial(lambda x: x**3, (2.0,), 0, 1e-2, order=2) == pytest.approx(12.0, abs=1e-5)


def test_fd_sampled_edges_and_errors():
    x = np.linspace(0, 1, 11)
    arr = x**2
    assert fd_partial(arr, (0,), 0, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert fd_partial(arr, (10,), 0, 0.1) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(DomainError):
        fd_partial(arr, (11,), 0, 0.1)


@pytest.mark.parametrize("f, df", [(np.sin, np.cos), (np.exp, np.exp), (lambda x: x**4 - x, lambda x: 4 * x**3 - 1)])
def test_fd_order(f, df):
    hs = [0.1, 0.05, 0.025, 0.0125]
    errs = [abs(fd_partial(f, (0.7,), 0, h) - df(0.7)) for h in hs]
    assert fit_order(hs, errs) >= 1.9


# --- RK4 -------------------------------------------------------------------


def test_rk4_examples():
    assert rk4_step(1.0, lambda t, y: y, 0.0, 0.1) == pytest.approx(math.exp(0.1), abs=1e-7)
    y = np.array([1.0, -2.0])
    np.testing.assert_array_equal(rk4_step(y, lambda t, y: 0 * y, 0.0, 0.3), y)
    assert rk4_step(2.0, lambda t, y: 1.0, 0.0, 0.5) == 2.5
    with pytest.raises(NonFiniteError):
        rk4_step(1.0, lambda t, y: float("nan"), 0.0, 0.1)


def test_rk4_global_order():
    errs, dts = [], [0.1, 0.05, 0.025]
    for dt in dts:
        y, t = 1.0, 0.0
        for _ in range(round(1 / dt)):
            y = rk4_step(y, lambda t, y: y, t, dt)
            t += dt
        errs.append(abs(y - math.e))
    assert fit_order(dts, errs) >= 3.9
