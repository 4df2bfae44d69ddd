"""f with f_x = lam_g, f_t = lam lam_g, its inverse X(t, f, g), and the
identities X_g X_tf - X_f X_tg = 1 and X_tt = Q(X, t)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .families import LambdaFamily
from .numerics import GridSpec, diff_array, gauss_legendre
from .verifier import ResidualReport, probe_points

__all__ = [
    "OdeConnError",
    "FField",
    "XField",
    "build_f",
    "invert_to_X",
    "jacobian_check",
    "qtt_check",
    "write_xfield_csv",
]


class OdeConnError(ValueError):
    pass


@dataclass
class FField:
    """f sampled on a (t, x, g) grid together with lam and lam_g there."""

    grid: GridSpec
    f: np.ndarray
    lam: np.ndarray
    lam_g: np.ndarray
    gauge: np.ndarray  # c(t, g) = f(t, x_left, g)
    degenerate: bool = False
    report: ResidualReport = field(default_factory=ResidualReport)


@dataclass
class XField:
    """X(t, f, g) on a regular (t, f, g) grid."""

    grid: GridSpec
    X: np.ndarray
    source: Optional[FField] = None
    roundtrip: float = float("nan")

    @classmethod
    def from_callable(cls, fn: Callable, grid: GridSpec) -> "XField":
        T, Fv, Gv = grid.mesh()
        return cls(grid, np.asarray(fn(T, Fv, Gv), dtype=float) * np.ones(T.shape))


def build_f(
    family: LambdaFamily, grid: GridSpec, center: bool = False, quad_nodes: int = 8, quadrature: str = "gauss",
    probes=None,
) -> FField:
    """f(t, x, g) = int_{x_left}^x lam_g dx' + c(t, g) with c_t = lam lam_g at x_left.

    Both the x-integral and the gauge integral in t (from c(t_min, g) = 0) use
    ``quad_nodes``-point Gauss-Legendre on every grid interval, so the only
    truncation left downstream is that of the finite differences on X.
    ``quadrature="trapezoid"`` uses the grid nodes only (second order). ``center`` subtracts the g-only function f(t_min, x_mid, g); f_x and f_t
    are unchanged by it, and so are the identities checked on X. The report carries |f_t - lam lam_g| and
    |f_x - lam_g| on interior nodes, or on the shared dyadic ``probes`` nodes.
    """
    if grid.names != ("t", "x", "g"):
        grid = grid.subgrid("t", "x", "g")
    T, X, Gg = grid.mesh()
    valid = family.is_valid(T[:, :, 0], X[:, :, 0])
    if not np.all(valid):
        raise OdeConnError("grid leaves the family's validity region")
    lam = np.asarray(family.lam(T, X, Gg), dtype=float)
    lam_g = np.asarray(family.partial("g", T, X, Gg), dtype=float)
    xs, ts, gs = grid.points("x"), grid.points("t"), grid.points("g")
    if quadrature == "trapezoid":
        nodes, weights = np.array([0.0, 1.0]), np.array([0.5, 0.5])
    elif quadrature == "gauss":
        nodes, weights = gauss_legendre(quad_nodes)
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    quad_nodes = nodes.size
    # x-integral: Gauss-Legendre on every grid interval, then cumulative sum
    xq = xs[:-1, None] + np.diff(xs)[:, None] * nodes[None, :]
    Tq, Xq, Gq = np.meshgrid(ts, xq.ravel(), gs, indexing="ij")
    vals = np.asarray(family.partial("g", Tq, Xq, Gq), dtype=float)
    vals = vals.reshape(ts.size, xs.size - 1, quad_nodes, gs.size)
    cell = np.einsum("ijqk,q->ijk", vals, weights) * np.diff(xs)[None, :, None]
    F = np.concatenate([np.zeros((ts.size, 1, gs.size)), np.cumsum(cell, axis=1)], axis=1)
    # gauge: integrate lam lam_g at x_left in t the same way
    tq = (ts[:-1, None] + np.diff(ts)[:, None] * nodes[None, :]).ravel()
    Tq, Gq = np.meshgrid(tq, gs, indexing="ij")
    Xq = np.full_like(Tq, xs[0])
    integrand = np.asarray(family.lam(Tq, Xq, Gq) * family.partial("g", Tq, Xq, Gq), dtype=float)
    integrand = integrand.reshape(ts.size - 1, quad_nodes, gs.size)
    cell = np.einsum("iqk,q->ik", integrand, weights) * np.diff(ts)[:, None]
    c = np.concatenate([np.zeros((1, gs.size)), np.cumsum(cell, axis=0)], axis=0)
    F = F + c[:, None, :]
    if center:
        shift = F[0, xs.size // 2, :].copy()
        F = F - shift[None, None, :]
        c = c - shift[None, :]
    degenerate = bool(np.all(np.abs(lam_g) < 1e-14))
    out = FField(grid, F, lam, lam_g, c, degenerate)
    f_t = diff_array(F, 0, grid.spacing("t"))
    f_x = diff_array(F, 1, grid.spacing("x"))
    inner = (slice(1, -1), slice(1, -1), slice(None)) if probes is None else _probe_index(grid, probes, interior=(True, True, False))
    out.report.add("f_t-lam*lam_g", (f_t - lam * lam_g)[inner])
    out.report.add("f_x-lam_g", (f_x - lam_g)[inner])
    return out


def invert_to_X(ff: FField, f_count: int | None = None, f_range: tuple[float, float] | None = None) -> XField:
    """X(t, f, g) on the f-interval common to every (t, g) slice.

    ``f_range`` pins the f-grid (it must lie inside the common interval), which
    keeps the sample points fixed across a refinement ladder.

    Each slice x -> f is interpolated by cubic Hermite splines (slopes lam_g)
    and inverted by safeguarded Newton inside the bracketing interval.
    """
    if ff.degenerate:
        raise OdeConnError("lam_g vanishes: f does not depend on x")
    g = ff.grid
    ts, xs, gs = g.points("t"), g.points("x"), g.points("g")
    F, S = ff.f, ff.lam_g
    sign = np.sign(S)
    if not (np.all(sign > 0) or np.all(sign < 0)):
        raise OdeConnError("f is not strictly monotone in x on some slice")
    lo = np.max(np.minimum(F[:, 0, :], F[:, -1, :]))
    hi = np.min(np.maximum(F[:, 0, :], F[:, -1, :]))
    if not lo < hi:
        raise OdeConnError("slices share no common f range")
    nf = f_count or xs.size
    if f_range is None:
        # keep a margin so every target lies strictly inside each slice
        pad = 1e-9 * (hi - lo)
        f_range = (lo + pad, hi - pad)
    elif not (lo <= f_range[0] < f_range[1] <= hi):
        raise OdeConnError(f"f_range {f_range} leaves the common interval [{lo}, {hi}]")
    fgrid = GridSpec.make(t=(ts[0], ts[-1], ts.size), f=(f_range[0], f_range[1], nf), g=(gs[0], gs[-1], gs.size))
    fv = fgrid.points("f")
    s0 = 1.0 if sign.flat[0] > 0 else -1.0
    # slices as rows, oriented so f increases with x
    Fs = s0 * np.moveaxis(F, 1, 2).reshape(-1, xs.size)
    Ss = s0 * np.moveaxis(S, 1, 2).reshape(-1, xs.size)
    target = s0 * fv
    Xs, worst = _hermite_inverse(xs, Fs, Ss, target)
    Xout = np.moveaxis(Xs.reshape(ts.size, gs.size, nf), 2, 1)
    return XField(fgrid, Xout, ff, worst)


def _hermite_inverse(xs, Fs, Ss, target, chunk: int = 2048):
    """Invert increasing cubic Hermite interpolants row by row.

    Returns x with P_row(x) = target for every row and target, and the worst
    |P(x) - target|. Each root is found by safeguarded Newton on the unit
    parameter of the bracketing interval.
    """
    nrow, nx = Fs.shape
    out = np.empty((nrow, target.size))
    worst = 0.0
    dx = np.diff(xs)
    for a in range(0, nrow, chunk):
        F, S = Fs[a : a + chunk], Ss[a : a + chunk]
        j = (F[:, None, :] <= target[None, :, None]).sum(axis=2) - 1
        j = np.clip(j, 0, nx - 2)
        r = np.arange(F.shape[0])[:, None]
        h = dx[j]
        y0, y1 = F[r, j], F[r, j + 1]
        m0, m1 = S[r, j] * h, S[r, j + 1] * h
        # p(s) = y0 h00 + m0 h10 + y1 h01 + m1 h11 on s in [0, 1]
        c0, c1 = y0 - target[None, :], m0
        c2 = -3 * y0 - 2 * m0 + 3 * y1 - m1
        c3 = 2 * y0 + m0 - 2 * y1 + m1
        lo_s, hi_s = np.zeros_like(h), np.ones_like(h)
        sv = np.clip(-c0 / np.where(y1 - y0 != 0, y1 - y0, 1.0), 0.0, 1.0)
        for _ in range(60):
            p = ((c3 * sv + c2) * sv + c1) * sv + c0
            dp = (3 * c3 * sv + 2 * c2) * sv + c1
            lo_s = np.where(p < 0, sv, lo_s)
            hi_s = np.where(p >= 0, sv, hi_s)
            step = sv - p / np.where(dp > 0, dp, np.inf)
            bad = ~((step > lo_s) & (step < hi_s)) | (dp <= 0)
            new = np.where(bad, 0.5 * (lo_s + hi_s), step)
            if np.all(np.abs(new - sv) <= 1e-15):
                sv = new
                break
            sv = new
        p = ((c3 * sv + c2) * sv + c1) * sv + c0
        worst = max(worst, float(np.max(np.abs(p))))
        out[a : a + chunk] = xs[j] + sv * h
    if not np.all(np.isfinite(out)):
        raise OdeConnError("inversion produced non-finite X")
    return out, worst


def _derivs(Xf: XField):
    g = Xf.grid
    dt, df, dg = g.spacing("t"), g.spacing("f"), g.spacing("g")
    X = Xf.X
    X_t = diff_array(X, 0, dt)
    X_f = diff_array(X, 1, df)
    X_g = diff_array(X, 2, dg)
    X_tf = diff_array(X_t, 1, df)
    X_tg = diff_array(X_t, 2, dg)
    X_tt = (X[2:] - 2 * X[1:-1] + X[:-2]) / dt**2
    return X_f, X_g, X_tf, X_tg, X_tt


def _probe_index(grid: GridSpec, probes, interior=(True, True, True)) -> tuple[np.ndarray, ...]:
    idx = []
    for a, p, inner in zip(grid.axes, probe_points(grid, probes), interior):
        k = (p - a.min) / ((a.max - a.min) / (a.count - 1))
        r = np.rint(k)
        lo, hi = (1, a.count - 2) if inner else (0, a.count - 1)
        if np.any(np.abs(k - r) > 1e-6) or np.any(r < lo) or np.any(r > hi):
            raise OdeConnError(f"probe points are not interior nodes of the {a.name} axis")
        idx.append(r.astype(int))
    return tuple(idx)


def jacobian_check(Xf: XField, probes=None) -> ResidualReport:
    """X_g X_tf - X_f X_tg - 1 on interior nodes.

    With ``probes`` the residual is read at the dyadic probe nodes shared by
    every level of a refinement ladder instead of on the whole interior.
    """
    X_f, X_g, X_tf, X_tg, _ = _derivs(Xf)
    r = X_g * X_tf - X_f * X_tg - 1.0
    rep = ResidualReport()
    # X independent of g: not a solution of the f-equation, flagged
    rep.degenerate = bool(np.all(np.abs(X_g) < 1e-12) and np.all(np.abs(X_tg) < 1e-12))
    if probes is None:
        rep.add("jacobian", r[1:-1, 1:-1, 1:-1])
    else:
        rep.add("jacobian", r[_probe_index(Xf.grid, probes)])
    return rep


def qtt_check(Xf: XField, match_tol: float | None = None, min_pairs: int = 10) -> ResidualReport:
    """Spread of X_tt among samples sharing (X, t) and among all samples at fixed t.

    Statistic (a) is the largest |X_tt difference| over pairs at the same t
    whose X agree within ``match_tol`` (default: half the median X spacing
    along f). Statistic (b) is the largest range of X_tt at fixed t.
    """
    X_f, *_, X_tt = _derivs(Xf)
    X = Xf.X[1:-1]
    df = Xf.grid.spacing("f")
    if match_tol is None:
        match_tol = 0.5 * float(np.median(np.abs(X_f))) * df
    spread_a = 0.0
    pairs = 0
    spread_b = 0.0
    for i in range(X.shape[0]):
        xv = X[i].ravel()
        qv = X_tt[i].ravel()
        order = np.argsort(xv, kind="stable")
        xs, qs = xv[order], qv[order]
        close = np.abs(np.diff(xs)) <= match_tol
        # exclude neighbours on the same (f, g) column trivially: different samples only
        if close.any():
            d = np.abs(np.diff(qs))[close]
            pairs += int(close.sum())
            spread_a = max(spread_a, float(d.max()))
        spread_b = max(spread_b, float(qv.max() - qv.min()))
    if pairs < min_pairs:
        raise OdeConnError(f"only {pairs} matched (X, t) pairs (need {min_pairs})")
    rep = ResidualReport()
    ea = rep.add("qtt_a", np.array([spread_a]))
    ea.pairs = pairs
    ea.match_tol = match_tol
    rep.add("qtt_b", np.array([spread_b]))
    return rep


def write_xfield_csv(Xf: XField, path: str | Path) -> None:
    """One row per (t, f, g) node: t, f, g, X (shortest round-trip floats)."""
    T, Fv, Gv = Xf.grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "f", "g", "X"))
        for row in zip(T.ravel(), Fv.ravel(), Gv.ravel(), Xf.X.ravel()):
            w.writerow(tuple(repr(float(v)) for v in row))
