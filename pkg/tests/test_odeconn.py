import numpy as np
import pytest

from benney import expr as ex
from benney.families import LambdaFamily, RationalParams, rational_family
from benney.numerics import GridSpec, fit_order
from benney.odeconn import OdeConnError, XField, build_f, invert_to_X, jacobian_check, qtt_check

from conftest import ODE_BOX, ODE_F_RANGE, ODE_LADDER as LADDER


def _lam_family(src):
    names = ["t", "x", "g"]
    e = ex.parse(src, names)

    def wrap(f):
        return lambda t, x, g: f(t=t, x=x, g=g) + 0 * (t + x + g)

    d = {v: ex.differentiate(e, v) for v in names}
    return LambdaFamily(
        wrap(e), 0.0, 1.0, lam_t=wrap(d["t"]), lam_x=wrap(d["x"]), lam_g=wrap(d["g"]),
        lam_gx=wrap(ex.differentiate(d["g"], "x")),
    )


@pytest.fixture(scope="module")
def ode_family():
    return rational_family(RationalParams.from_strings("g", "0"), ODE_BOX)


@pytest.fixture(scope="module")
def ode_ladder(ode_family):
    out = {}
    for quad in ("gauss", "trapezoid"):
        rows = []
        for n in LADDER:
            ff = build_f(ode_family, ODE_BOX.with_divisions(n), center=True, quadrature=quad, probes=3)
            Xf = invert_to_X(ff, f_range=ODE_F_RANGE)
            q = qtt_check(Xf)
            rows.append({
                "consistency": ff.report["f_t-lam*lam_g"].linf,
                "jacobian": jacobian_check(Xf, probes=3)["jacobian"].linf,
                "qtt_a": q["qtt_a"].linf,
                "qtt_b": q["qtt_b"].linf,
                "roundtrip": Xf.roundtrip,
            })
        out[quad] = rows
    return out


HS = [1.0 / n for n in LADDER]


# --- build_f ---------------------------------------------------------------


def test_linear_family_f_closed_form():
    fam = _lam_family("g + t")
    grid = GridSpec.make(t=(0, 1, 9), x=(-1, 1, 9), g=(0, 1, 5))
    ff = build_f(fam, grid)
    T, X, G = grid.mesh()
    np.testing.assert_allclose(ff.f, X + 1 + G * T + T**2 / 2, atol=1e-14)
    assert ff.report["f_t-lam*lam_g"].linf <= 1e-12
    assert ff.report["f_x-lam_g"].linf <= 1e-12


def test_g_independent_family_is_degenerate():
    ff = build_f(_lam_family("t"), GridSpec.make(t=(0, 1, 5), x=(-1, 1, 5), g=(0, 1, 5)))
    assert ff.degenerate
    with pytest.raises(OdeConnError):
        invert_to_X(ff)


def test_build_f_rejects_invalid_region(ode_family):
    with pytest.raises(OdeConnError):
        build_f(ode_family, GridSpec.make(t=(-1.0, 1.0, 5), x=(-3, -1, 5), g=(0.4, 0.6, 5)))


def test_rational_consistency_order(ode_ladder):
    c = [r["consistency"] for r in ode_ladder["gauss"]]
    assert fit_order(HS, c) >= 1.9


# --- invert_to_X -----------------------------------------------------------


def test_linear_inversion():
    grid = GridSpec.make(t=(0, 1, 9), x=(-1, 1, 17), g=(0, 1, 5))
    Xf = invert_to_X(build_f(_lam_family("g + t"), grid))
    T, F, G = Xf.grid.mesh()
    np.testing.assert_allclose(Xf.X, F - 1 - G * T - T**2 / 2, atol=1e-13)


def test_identity_inversion():
    # lam = g at t = 0 gives f = x + 1 on the first slab
    grid = GridSpec.make(t=(0, 0.5, 3), x=(-1, 1, 9), g=(0, 1, 3))
    Xf = invert_to_X(build_f(_lam_family("g"), grid))
    T, F, G = Xf.grid.mesh()
    np.testing.assert_allclose(Xf.X[0], (F - 1)[0], atol=1e-13)


def test_inversion_round_trip(ode_ladder):
    assert all(r["roundtrip"] <= 1e-9 for rows in ode_ladder.values() for r in rows)


def test_non_monotone_slice_rejected():
    fam = _lam_family("g * x")  # lam_g = x changes sign at 0
    with pytest.raises(OdeConnError):
        invert_to_X(build_f(fam, GridSpec.make(t=(0, 1, 5), x=(-1, 1, 5), g=(0, 1, 5))))


def test_f_range_outside_common_interval(ode_family):
    ff = build_f(ode_family, ODE_BOX.with_divisions(8), center=True)
    with pytest.raises(OdeConnError):
        invert_to_X(ff, f_range=(-10.0, 10.0))


# --- jacobian_check --------------------------------------------------------


def test_jacobian_exact_linear_field():
    grid = GridSpec.make(t=(0, 1, 9), f=(-1, 1, 9), g=(0, 1, 9))
    rep = jacobian_check(XField.from_callable(lambda t, f, g: f - g * t - t**2 / 2, grid))
    assert rep["jacobian"].linf <= 1e-12
    assert not rep.degenerate


def test_jacobian_degenerate_control():
    grid = GridSpec.make(t=(0, 1, 9), f=(-1, 1, 9), g=(0, 1, 9))
    rep = jacobian_check(XField.from_callable(lambda t, f, g: f, grid))
    assert rep["jacobian"].linf == pytest.approx(1.0)
    assert rep.degenerate


def test_rational_jacobian_order(ode_ladder):
    j = [r["jacobian"] for r in ode_ladder["gauss"]]
    assert fit_order(HS, j) >= 1.9


# --- qtt_check -------------------------------------------------------------


def _analytic_qtt(fn, n):
    grid = GridSpec.make(t=(0, 1, n + 1), f=(-1, 1, n + 1), g=(0, 1, n + 1))
    return qtt_check(XField.from_callable(fn, grid))


def test_qtt_linear_field_both_spreads_vanish():
    for n in (8, 16, 32):
        q = _analytic_qtt(lambda t, f, g: f - g * t - t**2 / 2, n)
        assert q["qtt_a"].linf <= 1e-9
        assert q["qtt_b"].linf <= 1e-9


def test_qtt_cosh_control_keeps_b():
    a, b = [], []
    for n in (8, 16, 32):
        q = _analytic_qtt(lambda t, f, g: f * np.cosh(t), n)
        a.append(q["qtt_a"].linf)
        b.append(q["qtt_b"].linf)
    assert min(b) >= 0.1
    assert a[-1] <= a[0] and a[-1] <= 1e-2


def test_rational_qtt_collapses_to_t_only(ode_ladder):
    # Gauss-Legendre f: the difference X_tt is t-only up to roundoff, which
    # 1/dt^2 amplifies as the ladder refines
    for r in ode_ladder["gauss"]:
        assert r["qtt_a"] <= 1e-8 and r["qtt_b"] <= 1e-8
    # trapezoidal f: the spreads are truncation and decay at second order
    b = [r["qtt_b"] for r in ode_ladder["trapezoid"]]
    a = [r["qtt_a"] for r in ode_ladder["trapezoid"]]
    assert all(y < x for x, y in zip(b, b[1:])) and fit_order(HS, b) >= 1.9
    assert all(y < x for x, y in zip(a, a[1:]))


def test_qtt_needs_matched_pairs():
    grid = GridSpec.make(t=(0, 1, 5), f=(-1, 1, 3), g=(0, 1, 3))
    with pytest.raises(OdeConnError):
        qtt_check(XField.from_callable(lambda t, f, g: f + 10 * g, grid))


def test_xfield_csv_dump(tmp_path):
    from benney.odeconn import write_xfield_csv

    grid = GridSpec.make(t=(0, 1, 3), f=(-1, 1, 3), g=(0, 1, 2))
    Xf = XField.from_callable(lambda t, f, g: f - g * t, grid)
    path = tmp_path / "x.csv"
    write_xfield_csv(Xf, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,f,g,X" and len(lines) == 1 + 18
    t, f, g, X = map(float, lines[-1].split(","))
    assert X == f - g * t
