"""Finite-difference residuals of the long-wave system and its companion forms.

Every check takes the grid whose spacings set the difference stencils, plus an
optional set of probe points where the residual is sampled. Probe points are
nodes shared by every level of a nested refinement ladder, so norms from
different levels compare the same locations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson

from .families import BoundaryPair, DistributionG, FamilyOutputs, LambdaFamily
from .numerics import GridSpec, Tolerance, diff_array, fit_order, gauss_legendre, integrate_batch, is_nested

__all__ = [
    "ResidualEntry",
    "ResidualReport",
    "probe_points",
    "benney_residual",
    "substituted_residual",
    "kinetic_residual",
    "monge_residual",
    "cr_residual",
    "hj_residual",
    "convergence_order",
    "benney_ladder",
    "hxx_from_h",
    "ladder_levels",
    "entry_passes",
    "EXACT_FLOOR",
]

EXACT_FLOOR = 1e-10
N_INNER = 24


@dataclass
class ResidualEntry:
    name: str
    linf: float
    l2: float
    samples: int
    masked: int
    convergence: list = field(default_factory=list)
    order: Optional[float] = None
    status: str = "single"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "linf": self.linf,
            "l2": self.l2,
            "samples": self.samples,
            "masked": self.masked,
            "convergence": [[h, n] for h, n in self.convergence],
            "order": self.order,
            "status": self.status,
        }


@dataclass
class ResidualReport:
    entries: dict = field(default_factory=dict)

    def add(self, name: str, values, extra_masked: int = 0) -> ResidualEntry:
        vals = np.asarray(values, dtype=float).ravel()
        ok = np.isfinite(vals)
        good = np.abs(vals[ok])
        linf = float(good.max()) if good.size else float("nan")
        l2 = float(np.sqrt(np.mean(good**2))) if good.size else float("nan")
        e = ResidualEntry(name, linf, l2, int(ok.sum()), int((~ok).sum()) + extra_masked)
        self.entries[name] = e
        return e

    def __getitem__(self, name: str) -> ResidualEntry:
        return self.entries[name]

    def __iter__(self):
        return iter(self.entries.values())

    def merge(self, other: "ResidualReport") -> "ResidualReport":
        self.entries.update(other.entries)
        return self

    @property
    def masked_fraction(self) -> float:
        fr = [e.masked / max(1, e.samples + e.masked) for e in self]
        return max(fr) if fr else 0.0

    def to_dict(self) -> dict:
        return {k: e.to_dict() for k, e in self.entries.items()}

    def table(self) -> str:
        lines = [f"{'residual':<24}{'Linf':>12}{'L2':>12}{'order':>8}  status"]
        for e in self:
            order = "-" if e.order is None else f"{e.order:.2f}"
            lines.append(f"{e.name:<24}{e.linf:>12.3e}{e.l2:>12.3e}{order:>8}  {e.status}")
        return "\n".join(lines)


# --- helpers ---------------------------------------------------------------


def probe_points(grid: GridSpec, per_axis: int | dict = 4) -> tuple[np.ndarray, ...]:
    """Interior nodes of a dyadic subdivision of the grid box (ij mesh, flattened).

    With ``per_axis`` = n the box is split into the smallest power of two
    m >= n + 1 and n of the m - 1 interior nodes are kept. Those nodes belong
    to every grid of the box whose division count is a multiple of m.
    """
    coords = []
    for a in grid.axes:
        n = per_axis.get(a.name, 4) if isinstance(per_axis, dict) else int(per_axis)
        m = 1 << max(1, math.ceil(math.log2(n + 1)))
        inner = np.arange(1, m)
        pick = inner[np.round(np.linspace(0, inner.size - 1, n)).astype(int)] if n < inner.size else inner
        coords.append(a.min + (a.max - a.min) * pick / m)
    mesh = np.meshgrid(*coords, indexing="ij")
    return tuple(m.ravel() for m in mesh)


def hxx_from_h(h: Callable, dx: float) -> Callable:
    """H_xx as one central difference of the exported depth field."""

    def Hxx(t, x):
        return (np.asarray(h(t, x + dx)) - np.asarray(h(t, x - dx))) / (2.0 * dx)

    return Hxx


def _d1(f, args, axis, h):
    a = list(args)
    b = list(args)
    a[axis] = args[axis] + h
    b[axis] = args[axis] - h
    return (np.asarray(f(*a)) - np.asarray(f(*b))) / (2.0 * h)


def _status(norms: Sequence[float], floor: float) -> tuple[Optional[float], str]:
    norms = np.asarray(norms, dtype=float)
    if np.all(np.isfinite(norms)) and np.all(norms <= floor):
        return None, "exact"
    if not np.all(np.isfinite(norms)) or np.any(norms <= 0):
        return None, "invalid"
    if np.any(np.diff(norms) >= 0):
        return None, "non-monotone"
    return None, "fitted"


# --- the long-wave system itself -------------------------------------------


def benney_residual(fields, grid: GridSpec, probes=None) -> ResidualReport:
    """r1 = v_t + v v_x - (int_0^y v_x dy') v_y + h_x, r2 = h_t + d/dx int_0^h v dy.

    Stencil spacings come from ``grid`` (axes t, x, y). The inner integrals
    use Gauss-Legendre nodes in u with y' = y u^2, which never coincide with
    grid nodes and absorb the square-root behaviour of v near y = 0.
    """
    dt, dx, dy = grid.spacing("t"), grid.spacing("x"), grid.spacing("y")
    if probes is None:
        probes = [m.ravel() for m in grid.interior_mesh()]
    t, x, y = (np.asarray(p, dtype=float) for p in probes)
    s, w = gauss_legendre(N_INNER)
    n = t.size
    k = s.size
    # one batched call for every v sample the stencils need
    yy = y[:, None] * s[None, :] ** 2
    tx = np.repeat(t[:, None], k, axis=1)
    xx = np.repeat(x[:, None], k, axis=1)
    pts_t = [t, t + dt, t - dt, t, t, t, t, tx.ravel(), tx.ravel()]
    pts_x = [x, x, x, x + dx, x - dx, x, x, (xx + dx).ravel(), (xx - dx).ravel()]
    pts_y = [y, y, y, y, y, y + dy, y - dy, yy.ravel(), yy.ravel()]
    vals = np.asarray(fields.v(np.concatenate(pts_t), np.concatenate(pts_x), np.concatenate(pts_y)), dtype=float)
    sizes = [n] * 7 + [n * k] * 2
    parts = np.split(vals, np.cumsum(sizes)[:-1])
    v0, vtp, vtm, vxp, vxm, vyp, vym, vin_p, vin_m = parts
    v_t = (vtp - vtm) / (2 * dt)
    v_x = (vxp - vxm) / (2 * dx)
    v_y = (vyp - vym) / (2 * dy)
    vx_inner = ((vin_p - vin_m) / (2 * dx)).reshape(n, k)
    W = y * np.sum(2.0 * s[None, :] * vx_inner * w[None, :], axis=1)
    h_x = _d1(fields.h, (t, x), 1, dx)
    r1 = v_t + v0 * v_x - W * v_y + h_x

    # r2 on the distinct (t, x) probe columns
    tx_pairs = np.unique(np.stack([t, x], axis=1), axis=0)
    tc, xc = tx_pairs[:, 0], tx_pairs[:, 1]
    h_t = _d1(fields.h, (tc, xc), 0, dt)

    def M(tq, xq):
        hq = np.asarray(fields.h(tq, xq), dtype=float)
        yq = hq[:, None] * s[None, :] ** 2
        vq = np.asarray(fields.v(np.repeat(tq[:, None], k, 1), np.repeat(xq[:, None], k, 1), yq), dtype=float)
        return hq * np.sum(2.0 * s[None, :] * vq * w[None, :], axis=1)

    r2 = h_t + (M(tc, xc + dx) - M(tc, xc - dx)) / (2 * dx)
    rep = ResidualReport()
    rep.add("benney_r1", r1)
    rep.add("benney_r2", r2)
    rep.hx_max = float(np.nanmax(np.abs(h_x))) if np.any(np.isfinite(h_x)) else float("nan")
    return rep


# --- substituted form ------------------------------------------------------


def substituted_residual(u: Callable, H_x: Callable, H_t: Callable, grid: GridSpec, probes=None) -> ResidualReport:
    """u_ty + u_y u_xy - u_x u_yy + H_xx, with u(t,x,0) = 0 and u(t,x,H_x) = -H_t.

    Also reports H_tx - H_xt, the compatibility of the two exported H partials.
    """
    dt, dx, dy = grid.spacing("t"), grid.spacing("x"), grid.spacing("y")
    if probes is None:
        probes = [m.ravel() for m in grid.interior_mesh()]
    t, x, y = (np.asarray(p, dtype=float) for p in probes)
    offs = [(0, 0, 0), (1, 0, 1), (1, 0, -1), (-1, 0, 1), (-1, 0, -1), (0, 1, 1), (0, 1, -1), (0, -1, 1),
            (0, -1, -1), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    T = np.concatenate([t + a * dt for a, b, c in offs])
    X = np.concatenate([x + b * dx for a, b, c in offs])
    Y = np.concatenate([y + c * dy for a, b, c in offs])
    vals = np.split(np.asarray(u(T, X, Y), dtype=float), len(offs))
    U = dict(zip(offs, vals))
    u_ty = (U[1, 0, 1] - U[1, 0, -1] - U[-1, 0, 1] + U[-1, 0, -1]) / (4 * dt * dy)
    u_xy = (U[0, 1, 1] - U[0, 1, -1] - U[0, -1, 1] + U[0, -1, -1]) / (4 * dx * dy)
    u_x = (U[0, 1, 0] - U[0, -1, 0]) / (2 * dx)
    u_y = (U[0, 0, 1] - U[0, 0, -1]) / (2 * dy)
    u_yy = (U[0, 0, 1] - 2 * U[0, 0, 0] + U[0, 0, -1]) / dy**2
    Hxx = _d1(H_x, (t, x), 1, dx)
    rep = ResidualReport()
    rep.add("substituted", u_ty + u_y * u_xy - u_x * u_yy + Hxx)

    cols = np.unique(np.stack([t, x], axis=1), axis=0)
    tc, xc = cols[:, 0], cols[:, 1]
    hx = np.asarray(H_x(tc, xc), dtype=float)
    ht = np.asarray(H_t(tc, xc), dtype=float)
    rep.add("bc_bottom", np.asarray(u(tc, xc, 0.0 * tc), dtype=float))
    top = np.asarray(u(tc, xc, hx), dtype=float) + ht
    rep.add("bc_top", top)
    rep.add("H_tx-H_xt", _d1(H_t, (tc, xc), 1, dx) - _d1(H_x, (tc, xc), 0, dt))
    return rep


# --- kinetic and Monge forms -----------------------------------------------


def kinetic_residual(
    G: DistributionG, Hxx: Callable, grid: GridSpec, probes=None, family: LambdaFamily | None = None
) -> ResidualReport:
    """-G_t + lam G_x - H_xx G_lam on probe points.

    ``grid`` has axes t, x and either lam or g. With a g axis the probe lam is
    lam(t, x, g) from ``family`` and the lam stencil uses the g spacing.
    """
    dt, dx = grid.spacing("t"), grid.spacing("x")
    third = "g" if "g" in grid.names else "lam"
    dl = grid.spacing(third)
    if probes is None:
        probes = [m.ravel() for m in grid.interior_mesh()]
    t, x, c = (np.asarray(p, dtype=float) for p in probes)
    lam = family.lam(t, x, c) if third == "g" else c
    G_t = _d1(G.G, (t, x, lam), 0, dt)
    G_x = _d1(G.G, (t, x, lam), 1, dx)
    G_l = _d1(G.G, (t, x, lam), 2, dl)
    rep = ResidualReport()
    rep.add("kinetic", -G_t + lam * G_x - np.asarray(Hxx(t, x)) * G_l)
    return rep


def monge_residual(pair: BoundaryPair, Hxx: Callable, grid: GridSpec, probes=None) -> ResidualReport:
    """nu_t - nu nu_x - H_xx and mu_t - mu mu_x - H_xx."""
    dt, dx = grid.spacing("t"), grid.spacing("x")
    if probes is None:
        probes = [m.ravel() for m in grid.subgrid("t", "x").interior_mesh()]
    t, x = (np.asarray(p, dtype=float) for p in probes[:2])
    f = np.asarray(Hxx(t, x), dtype=float)
    rep = ResidualReport()
    for name, fn in (("monge_nu", pair.nu), ("monge_mu", pair.mu)):
        if fn is None:
            continue
        val = np.asarray(fn(t, x), dtype=float)
        rep.add(name, _d1(fn, (t, x), 0, dt) - val * _d1(fn, (t, x), 1, dx) - f)
    return rep


# --- lam-family forms ------------------------------------------------------


def cr_residual(
    family: LambdaFamily,
    grid: GridSpec,
    g_probes=None,
    s_h: int = -1,
    probes=None,
    tol: Tolerance | None = None,
) -> ResidualReport:
    """lam_t - lam lam_x - s_h int g lam_gx dg at (t, x, g_probe), analytic partials.

    The depth convention h = s_h int g lam_g dg fixes the sign of the
    forcing; ``s_h = +1`` gives the form with a minus in front of the integral.
    """
    tol = tol or Tolerance(abs=1e-14, rel=1e-13)
    if probes is None:
        probes = [m.ravel() for m in grid.subgrid("t", "x").mesh()]
    t, x = (np.asarray(p, dtype=float) for p in probes[:2])
    if g_probes is None:
        g_probes = np.linspace(family.g_lo, family.g_hi, 5)
    g_probes = np.asarray(g_probes, dtype=float)

    def f(g, i):
        return g * family.partial("gx", t[i][:, None], x[i][:, None], g)

    forcing = s_h * integrate_batch(f, family.g_lo + 0 * t, family.g_hi + 0 * t, tol)
    T, Gp = np.meshgrid(t, g_probes, indexing="ij")
    X = np.broadcast_to(x[:, None], T.shape)
    lam = family.lam(T, X, Gp)
    r = family.partial("t", T, X, Gp) - lam * family.partial("x", T, X, Gp) - forcing[:, None]
    rep = ResidualReport()
    rep.add("cr", r)
    return rep


def hj_residual(
    family: LambdaFamily,
    grid: GridSpec,
    x0: float | None = None,
    s_h: int = -1,
    probes=None,
) -> ResidualReport:
    """S_t + S_x^2/2 + V with V = -s_h int g S_gx dg and lam = -S_x.

    S is built on ``grid`` (axes t, x, g; even division counts in g) by
    trapezoidal integration of -lam in x from x0 = x_min, plus a gauge c(t, g)
    that makes the relation hold at x0 (trapezoidal in t from c(t_min) = 0).
    All derivatives are second-order differences, so the residual away from
    x0 is pure truncation. It is sampled at ``probes`` (default: dyadic
    interior nodes, see :func:`probe_points`).
    """
    if grid.names != ("t", "x", "g"):
        grid = grid.subgrid("t", "x", "g")
    ts, xs, gs = grid.points("t"), grid.points("x"), grid.points("g")
    dt, dx, dg = grid.spacing("t"), grid.spacing("x"), grid.spacing("g")
    if x0 is not None and abs(x0 - xs[0]) > 1e-12 * (1 + abs(x0)):
        raise ValueError("x0 must be the first node of the x axis")
    if (gs.size - 1) % 2:
        raise ValueError("g axis needs an even number of intervals")
    T, X, Gg = np.meshgrid(ts, xs, gs, indexing="ij")
    lam = np.asarray(family.lam(T, X, Gg), dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("integration path leaves the family's validity region")
    S0 = -cumulative_trapezoid(lam, xs, axis=1, initial=0.0)
    S_x = diff_array(S0, 1, dx)
    S_gx = diff_array(S_x, 2, dg)
    V = -s_h * simpson(Gg * S_gx, x=gs, axis=2)  # (t, x)
    c_t = -0.5 * S_x[:, 0, :] ** 2 - V[:, :1]
    c = cumulative_trapezoid(c_t, ts, axis=0, initial=0.0)
    S = S0 + c[:, None, :]
    S_t = diff_array(S, 0, dt)
    res = S_t + 0.5 * S_x**2 + V[:, :, None]
    rep = ResidualReport()
    if probes is None:
        probes = probe_points(grid, 3)
    pt, px, pg = (np.asarray(p, dtype=float) for p in probes)
    it = np.rint((pt - ts[0]) / dt).astype(int)
    ix = np.rint((px - xs[0]) / dx).astype(int)
    ig = np.rint((pg - gs[0]) / dg).astype(int)
    if np.any((it < 1) | (it > ts.size - 2) | (ix < 1) | (ix > xs.size - 2)):
        raise ValueError("hj probes must be interior grid nodes")
    sel = res[it, ix, ig]
    rep.add("hj", sel)
    return rep


# --- convergence -----------------------------------------------------------


def convergence_order(
    check: Callable[[GridSpec], ResidualReport],
    levels: Sequence[GridSpec],
    floor: float = EXACT_FLOOR,
    spacing_axis: str | None = None,
) -> ResidualReport:
    """Run ``check`` on nested levels and fit log(Linf) against log(spacing).

    Non-monotone norm sequences keep the raw slope out of ``order`` and are
    flagged; all-below-floor sequences are marked exact.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("need at least 3 refinement levels")
    if not is_nested(levels):
        raise ValueError("refinement levels must be nested")
    reports = [check(g) for g in levels]
    axis = spacing_axis or levels[0].names[0]
    spacings = [g.spacing(axis) for g in levels]
    out = ResidualReport()
    for name in reports[-1].entries:
        es = [r.entries[name] for r in reports]
        fine = es[-1]
        e = ResidualEntry(name, fine.linf, fine.l2, fine.samples, max(x.masked for x in es))
        e.convergence = [(h, x.linf) for h, x in zip(spacings, es)]
        order, status = _status([x.linf for x in es], floor)
        e.status = status
        if status in ("fitted", "non-monotone"):
            slope = fit_order(spacings, [x.linf for x in es])
            e.raw_slope = slope
            e.order = slope if status == "fitted" else None
        out.entries[name] = e
    for attr in ("hx_max",):
        if hasattr(reports[-1], attr):
            setattr(out, attr, getattr(reports[-1], attr))
    return out


def ladder_levels(base: GridSpec, ladder: Sequence[int] = (32, 64, 128)) -> list[GridSpec]:
    return [base.with_divisions(n) for n in ladder]


def entry_passes(e: ResidualEntry, min_order: float) -> bool:
    return e.status == "exact" or (e.order is not None and e.order >= min_order)


def benney_ladder(
    outs: FamilyOutputs,
    conv,
    base: GridSpec,
    *,
    ladder: Sequence[int] = (32, 64, 128),
    probes: int | dict = 4,
    fields=None,
) -> dict:
    """Benney residual norms over a ladder, summarised for sign resolution."""
    from .reconstruction import make_fields

    if fields is None:
        fields = make_fields(outs, conv)
    base = base.subgrid("t", "x", "y")
    pts = probe_points(base, probes)
    rep = convergence_order(lambda g: benney_residual(fields, g, pts), ladder_levels(base, ladder))
    entries = list(rep)
    order = None
    if all(e.status == "exact" for e in entries):
        status = "exact"
    else:
        orders = [e.order for e in entries if e.status != "exact"]
        status = "fitted" if all(o is not None for o in orders) else "non-monotone"
        order = min(orders) if status == "fitted" else None
    return {
        "report": rep,
        "residuals": {e.name: e.to_dict() for e in entries},
        "order": order,
        "status": status,
        "masked_fraction": rep.masked_fraction,
        "hx_max": getattr(rep, "hx_max", float("nan")),
    }
