import numpy as np
import pytest

from benney import expr as ex
from benney.families import freestream_family
from benney.numerics import GridSpec
from benney.reconstruction import SignConvention, make_fields
from benney.verifier import (
    ResidualReport,
    benney_residual,
    convergence_order,
    cr_residual,
    entry_passes,
    hj_residual,
    hxx_from_h,
    kinetic_residual,
    ladder_levels,
    monge_residual,
    probe_points,
    substituted_residual,
)

from conftest import CONST_DOMAIN, RATIONAL_DOMAIN

SIGNS = SignConvention(-1, 1)
LADDER = (32, 64, 128)


# --- helpers ----------------------------------------------------------------


def test_probe_points_are_shared_by_the_ladder():
    base = GridSpec.make(t=(1, 2, 5), x=(-1, 1, 5))
    pts = probe_points(base, 3)
    for g in ladder_levels(base, LADDER):
        for axis, p in zip(g.axes, pts):
            k = (p - axis.min) / ((axis.max - axis.min) / (axis.count - 1))
            np.testing.assert_allclose(k, np.rint(k), atol=1e-9)
            assert np.all((k > 0.5) & (k < axis.count - 1.5))


def test_report_aggregates_and_masks():
    rep = ResidualReport()
    e = rep.add("r", [1.0, -3.0, np.nan])
    assert (e.linf, e.samples, e.masked) == (3.0, 2, 1)
    assert rep.masked_fraction == pytest.approx(1 / 3)
    assert "r" in rep.table() and rep.to_dict()["r"]["linf"] == 3.0


def test_convergence_order_statuses():
    base = GridSpec.make(t=(0, 1, 3))
    levels = ladder_levels(base, (4, 8, 16))

    def make(values):
        it = iter(values)

        def check(g):
            r = ResidualReport()
            r.add("x", [next(it)])
            return r

        return check

    fitted = convergence_order(make([1e-2, 2.5e-3, 6.25e-4]), levels)["x"]
    assert fitted.status == "fitted" and fitted.order == pytest.approx(2.0)
    assert entry_passes(fitted, 1.9)
    exact = convergence_order(make([1e-14, 1e-13, 1e-12]), levels)["x"]
    assert exact.status == "exact" and entry_passes(exact, 1.9)
    bad = convergence_order(make([1e-3, 2e-3, 1e-3]), levels)["x"]
    assert bad.status == "non-monotone" and bad.order is None and not entry_passes(bad, 1.9)
    with pytest.raises(ValueError):
        convergence_order(make([1, 1]), levels[:2])
    with pytest.raises(ValueError):
        convergence_order(make([1, 1, 1]), [base.with_divisions(n) for n in (4, 6, 8)])


def test_hxx_from_h_is_central_difference():
    Hxx = hxx_from_h(lambda t, x: x**3, 0.1)
    assert Hxx(0.0, 1.0) == pytest.approx(3.01)


# --- residuals on the constant-G hodograph ---------------------------------


def _ladder(check, base):
    return convergence_order(check, ladder_levels(base, LADDER))


def test_const_benney_residual_converges(const_outputs):
    f = make_fields(const_outputs, SIGNS)
    pts = probe_points(CONST_DOMAIN, 4)
    rep = _ladder(lambda g: benney_residual(f, g, pts), CONST_DOMAIN)
    assert all(entry_passes(e, 1.9) for e in rep)


def test_const_substituted_residual_and_boundaries(const_outputs):
    f = make_fields(const_outputs, SIGNS)
    pts = probe_points(CONST_DOMAIN, 4)
    rep = _ladder(lambda g: substituted_residual(f.u, f.H_x, f.H_t, g, pts), CONST_DOMAIN)
    assert all(entry_passes(e, 1.9) for e in rep)
    assert rep["bc_bottom"].linf <= 1e-12
    assert rep["bc_top"].linf <= 1e-10


def test_perturbed_fields_fail(const_outputs):
    f = make_fields(const_outputs, SIGNS).perturbed(1e-3)
    pts = probe_points(CONST_DOMAIN, 4)
    e = _ladder(lambda g: benney_residual(f, g, pts), CONST_DOMAIN)["benney_r1"]
    assert e.linf >= 1e-4
    assert not entry_passes(e, 1.9)


def test_const_monge_pair(const_outputs):
    f = make_fields(const_outputs, SIGNS)
    tx = CONST_DOMAIN.subgrid("t", "x")
    pts = probe_points(tx, 4)
    rep = _ladder(lambda g: monge_residual(const_outputs.pair, hxx_from_h(f.h, g.spacing("x")), g, pts), tx)
    assert set(rep.entries) == {"monge_nu", "monge_mu"}
    assert all(entry_passes(e, 1.9) for e in rep)


def test_freestream_kinetic_residual():
    out = freestream_family(ex.parse("exp(lam) + 0.2*sin(xi)", ["xi", "lam"]), 1.0)
    base = GridSpec.make(t=(0, 1, 3), x=(-1, 1, 3), lam=(-0.5, 0.5, 3))
    pts = probe_points(base, 3)
    rep = _ladder(lambda g: kinetic_residual(out.G, lambda t, x: 0 * x, g, pts), base)
    assert entry_passes(rep["kinetic"], 1.9)


def test_kinetic_residual_detects_wrong_forcing():
    out = freestream_family(ex.parse("exp(lam) + 0.2*sin(xi)", ["xi", "lam"]), 1.0)
    g = GridSpec.make(t=(0, 1, 65), x=(-1, 1, 65), lam=(-0.5, 0.5, 65))
    rep = kinetic_residual(out.G, lambda t, x: 0 * x + 0.5, g, probe_points(g, 3))
    assert rep["kinetic"].linf >= 0.1


# --- lam-family forms --------------------------------------------------------


def test_cr_discriminates_phi_sign(rational, rational_flipped):
    tx = RATIONAL_DOMAIN.subgrid("t", "x").with_divisions(32)
    assert cr_residual(rational, tx, s_h=-1)["cr"].linf <= 1e-8
    _, _, Ptt = rational_flipped.phi(tx.points("t"))
    assert cr_residual(rational_flipped, tx, s_h=-1)["cr"].linf >= 0.1 * np.max(np.abs(Ptt))


def test_hj_residual_converges(rational):
    base = GridSpec.make(t=(0.5, 2.0, 3), x=(-2.0, -1.5, 3), g=(0.0, 1.0, 3))
    rep = _ladder(lambda g: hj_residual(rational, g, s_h=-1, probes=probe_points(base, 3)), base)
    assert rep["hj"].status == "fitted" and rep["hj"].order >= 1.9


def test_hj_rejects_odd_g_intervals(rational):
    with pytest.raises(ValueError):
        hj_residual(rational, GridSpec.make(t=(0.5, 2.0, 5), x=(-2.0, -1.5, 5), g=(0.0, 1.0, 4)))
