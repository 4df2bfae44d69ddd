import math

import numpy as np
import pytest

from benney import expr as ex
from benney.families import (
    BracketFailure,
    CollapseError,
    FamilyError,
    LambdaFamily,
    RangeError,
    RationalParams,
    const_family,
    freestream_family,
    invert_lambda_to_G,
    rational_family,
    theta_constant,
    theta_separable,
    theta_sigma,
    theta_sum,
)
from benney.numerics import GridSpec, fit_order

from conftest import RATIONAL_DOMAIN


# --- free streaming --------------------------------------------------------


def test_freestream_identity_level_set():
    out = freestream_family(ex.parse("lam", ["xi", "lam"]), 1.0, GridSpec.make(t=(0, 1, 3), x=(0, 1, 3)))
    np.testing.assert_allclose(out.pair.nu(np.array([0.0, 1.0, 0.3]), np.array([0.0, 2.0, -1.0])), 1.0, atol=1e-13)
    assert out.pair.mu is None


def test_freestream_linear_level_set_at_t0():
    out = freestream_family(ex.parse("xi+lam", ["xi", "lam"]), 0.0)
    assert out.pair.nu(0.0, 0.3) == pytest.approx(-0.3, abs=1e-13)


def test_freestream_g_is_transported_initial_data():
    G0 = ex.parse("exp(lam) + 0.2*sin(xi)", ["xi", "lam"])
    out = freestream_family(G0, 1.0)
    t, x, lam = 0.7, 0.2, -0.3
    assert out.G.G(t, x, lam) == pytest.approx(math.exp(lam) + 0.2 * math.sin(x + lam * t), rel=1e-14)
    nu = out.pair.nu(t, x)
    assert out.G.G(t, x, nu) == pytest.approx(1.0, abs=1e-12)


def test_freestream_bracket_failure_reports_location():
    with pytest.raises(BracketFailure) as info:
        freestream_family(ex.parse("exp(lam)", ["xi", "lam"]), -1.0, GridSpec.make(t=(0, 1, 2), x=(0, 1, 2)))
    assert info.value.location is not None


# --- constant G hodograph --------------------------------------------------


def test_const_sigma_inversion_at_unit_point():
    out = const_family(theta_sigma(2.0), GridSpec.make(t=(0.5, 2, 9), x=(-1, 1, 9)))
    nu, mu = out.pair(1.0, 0.0)
    assert mu == pytest.approx(0.5, abs=1e-12)
    assert nu == pytest.approx(-0.5, abs=1e-12)


def test_const_sigma_closed_forms(const_outputs):
    t, x = np.meshgrid(np.linspace(1, 2, 9), np.linspace(-1, 1, 9), indexing="ij")
    nu, mu = const_outputs.pair(t, x)
    np.testing.assert_allclose(nu, -(x + 0.5) / t, atol=1e-12)
    np.testing.assert_allclose(mu, (0.5 - x) / t, atol=1e-12)
    assert const_outputs.G.constant == -0.25


def test_const_theta_constant_collapses():
    with pytest.raises(CollapseError):
        const_family(theta_constant(2.0), GridSpec.make(t=(1, 2, 5), x=(-1, 1, 5)))


def _forced_monge_residual(out, A, s_h, h):
    t, x = np.meshgrid(np.linspace(1.2, 1.8, 5), np.linspace(-0.6, 0.6, 5), indexing="ij")
    nu, mu = out.pair.nu, out.pair.mu

    def d(f, dt, dx):
        return (f(t + dt, x + dx) - f(t - dt, x - dx)) / (2 * h)

    mut, mux, nut, nux = d(mu, h, 0), d(mu, 0, h), d(nu, h, 0), d(nu, 0, h)
    hx = -s_h * (mux - nux) / (2 * A)
    return max(np.max(np.abs(mut - mu(t, x) * mux - hx)), np.max(np.abs(nut - nu(t, x) * nux - hx)))


def test_const_forced_monge_pair_converges():
    A = 1.0
    theta = theta_sum(theta_sigma(A), theta_separable(1.0, A, (0.15, 0.7), 1000, s_h=-1), 0.05)
    out = const_family(theta, GridSpec.make(t=(1, 2, 9), x=(-1, 1, 9)))
    hs = [0.02, 0.01, 0.005]
    res = [_forced_monge_residual(out, A, -1, h) for h in hs]
    assert fit_order(hs, res) >= 1.9


def test_const_forced_monge_plus_sign_coefficient_stalls():
    # theta seeded with the s_h = +1 coefficient does not solve the s_h = -1 pair
    A = 1.0
    theta = theta_sum(theta_sigma(A), theta_separable(1.0, A, (0.15, 0.7), 1000, s_h=1), 0.05)
    out = const_family(theta, GridSpec.make(t=(1, 2, 9), x=(-1, 1, 9)))
    res = [_forced_monge_residual(out, A, -1, h) for h in (0.02, 0.01, 0.005)]
    assert min(res) > 1e-2


def test_const_forced_monge_mismatched_sign_fails():
    A = 1.0
    theta = theta_sum(theta_sigma(A), theta_separable(1.0, A, (0.15, 0.7), 1000, s_h=-1), 0.05)
    out = const_family(theta, GridSpec.make(t=(1, 2, 9), x=(-1, 1, 9)))
    assert _forced_monge_residual(out, A, 1, 0.005) > 1e-2


# --- theta seeds -----------------------------------------------------------


def test_separable_k_zero_is_constant():
    th = theta_separable(0.0, 2.0, (2.0, 3.0), 200)
    R = np.linspace(2, 3, 11)
    np.testing.assert_allclose(th.theta(0.3 + 0 * R, R), 1.0, atol=1e-14)


def test_separable_infinite_A_is_cosh():
    th = theta_separable(1.3, math.inf, (1.0, 2.0), 1000)
    R = np.linspace(1, 2, 21)
    np.testing.assert_allclose(th.rho(R), np.cosh(1.3 * (R - 1.0)), atol=1e-6)


def test_separable_plus_sign_coefficient_residual():
    # the coefficient (1 - 1/(AR)) pairs with s_h = +1
    th = theta_separable(1.0, 1.0, (2.0, 3.0), 1000, s_h=1)
    R = np.linspace(2.0, 3.0, 101)
    mid = 0.5 * (R[1:] + R[:-1])
    h = 1e-3
    d2 = (th.rho(mid + h) - 2 * th.rho(mid) + th.rho(mid - h)) / h**2
    assert np.max(np.abs(d2 - (1 - 1 / mid) * th.rho(mid))) <= 1e-6


def test_separable_rejects_bad_ranges():
    with pytest.raises(FamilyError):
        theta_separable(1.0, 1.0, (0.0, 1.0))
    with pytest.raises(FamilyError):
        theta_separable(1.0, 1.0, (0.5, 2.0), s_h=1)  # crosses R = 1/A
    with pytest.raises(FamilyError):
        theta_separable(1.0, 1.0, (-2.0, -0.5), s_h=-1)  # crosses R = -1/A
    with pytest.raises(FamilyError):
        theta_separable(1.0, 1.0, (1.0, 2.0), steps=50)


# --- rational family -------------------------------------------------------


def test_rational_phi_values(rational, rational_flipped):
    P, Pt, Ptt = rational.phi(np.array([1.0]))
    assert P[0] == pytest.approx(0.25, abs=1e-13)
    assert Pt[0] == pytest.approx(1 - math.log(2), abs=1e-13)
    P2, Pt2, _ = rational_flipped.phi(np.array([1.0]))
    assert P2[0] == pytest.approx(-0.25, abs=1e-13)
    assert Pt2[0] == pytest.approx(-(1 - math.log(2)), abs=1e-13)


def test_rational_rejects_nonpositive_denominator():
    with pytest.raises(FamilyError):
        rational_family(RationalParams.from_strings("g", "0"), GridSpec.make(t=(-0.5, 1, 3), x=(0, 1, 3)))
    with pytest.raises(FamilyError):
        RationalParams.from_strings("g", "0", g_lo=1.0, g_hi=0.5)


@pytest.mark.parametrize("name", ["t", "x", "g", "gx"])
def test_rational_partials_match_fd(rational, name):
    rng = np.random.default_rng(3)
    t = rng.uniform(0.6, 1.9, 200)
    x = rng.uniform(-2.0, -1.5, 200)
    g = rng.uniform(0.05, 0.95, 200)
    analytic = rational.partial(name, t, x, g)
    if name == "gx":
        h = 1e-5
        fd = (rational.partial("g", t, x + h, g) - rational.partial("g", t, x - h, g)) / (2 * h)
    else:
        fd = LambdaFamily(rational.lam, 0.0, 1.0).partial(name, t, x, g)
    np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-8)


def test_rational_valid_on_preset_box(rational):
    t, x = RATIONAL_DOMAIN.subgrid("t", "x").mesh()
    assert np.all(rational.is_valid(t, x))


def test_inversion_round_trip(rational):
    rng = np.random.default_rng(5)
    for _ in range(100):
        t, x, g = rng.uniform(0.5, 2.0), rng.uniform(-2.0, -1.5), rng.uniform(0.0, 1.0)
        lam = float(rational.lam(t, x, g))
        assert invert_lambda_to_G(rational, t, x, lam) == pytest.approx(g, abs=1e-10)


def test_inversion_monotone_scan(rational):
    gs = np.linspace(0, 1, 101)
    lam = rational.lam(1.0 + 0 * gs, -1.7 + 0 * gs, gs)
    assert np.all(np.diff(lam) > 0) or np.all(np.diff(lam) < 0)


def test_inversion_outside_range(rational):
    nu, mu = rational.boundary_pair()(1.0, -1.7)
    beyond = max(nu, mu) + 0.1
    with pytest.raises(RangeError):
        invert_lambda_to_G(rational, 1.0, -1.7, beyond)
