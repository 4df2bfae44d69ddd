"""From a distribution function and its boundary characteristics to v, u, h.

The zeroth-moment relation ``y + int_nu^{-v} G dlam = 0`` is solved for
``w = -v`` by safeguarded Newton (the derivative is G itself), the first
moment gives ``u = int_nu^{-v} lam G dlam``, and the depth is
``h = s_h int_nu^mu G dlam``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .families import DistributionG, BoundaryPair, FamilyOutputs
from .numerics import (
    BracketError,
    GridSpec,
    Tolerance,
    find_root_batch,
    gauss_legendre,
    integrate_batch,
)

__all__ = [
    "SignConvention",
    "SolutionFields",
    "GenerationError",
    "DegenerateSignsError",
    "NoConvergingSignsError",
    "solve_v",
    "solve_v_batch",
    "compute_u",
    "compute_h",
    "compute_H_t",
    "moment_residual",
    "evaluate_fields",
    "resolve_signs",
    "make_fields",
    "solve_g_batch",
]

log = logging.getLogger(__name__)

N_GAUSS = 32
QUAD_TOL = Tolerance(abs=1e-13, rel=1e-13)
MASK_LIMIT = 0.5


class GenerationError(RuntimeError):
    """More than half of the requested points could not be reconstructed."""


class DegenerateSignsError(RuntimeError):
    """Several sign conventions pass: the family cannot discriminate them."""


class NoConvergingSignsError(RuntimeError):
    pass


@dataclass(frozen=True)
class SignConvention:
    """h = s_h * int_nu^mu G dlam; s_phi is the sign in front of Phi."""

    s_h: int = -1
    s_phi: int = 1

    def __post_init__(self):
        if self.s_h not in (1, -1) or self.s_phi not in (1, -1):
            raise ValueError("sign convention members must be +1 or -1")

    def to_dict(self) -> dict:
        return {"s_h": self.s_h, "s_phi": self.s_phi}


# --- moment relations ------------------------------------------------------


def _flat(*xs):
    arrs = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in xs))
    return arrs[0].shape, [a.ravel() for a in arrs]


def _gl_moment(G: DistributionG, t, x, a, b, power: int = 0, n: int = N_GAUSS):
    """Fixed Gauss-Legendre value of int_a^b lam^power G dlam (arrays)."""
    s, w = gauss_legendre(n)
    lam = a[:, None] + (b - a)[:, None] * s[None, :]
    vals = np.asarray(G(t[:, None], x[:, None], lam), dtype=float)
    if power:
        vals = vals * lam**power
    return (b - a) * np.sum(vals * w[None, :], axis=1)


def solve_v_batch(
    G: DistributionG,
    nu,
    t,
    x,
    y,
    seed=None,
    *,
    mu=None,
    xtol: float = 1e-15,
) -> np.ndarray:
    """Vectorized ``solve_v``; members without a root come back as NaN.

    With ``mu`` given, the root is searched in [nu, mu] (the top of the layer
    maps to mu). Otherwise the bracket is expanded geometrically from nu in
    the downhill direction until the sign changes or ``G.lam_limits`` is hit.
    """
    shape, (nu, t, x, y) = _flat(nu, t, x, y)
    n = nu.size
    if mu is not None:
        mu = np.broadcast_to(np.asarray(mu, dtype=float), shape).ravel()
    seed_w = None if seed is None else np.broadcast_to(-np.asarray(seed, dtype=float), shape).ravel()

    def F(w, i):
        return y[i] + _gl_moment(G, t[i], x[i], nu[i], w)

    def Fp(w, i):
        return np.asarray(G(t[i], x[i], w), dtype=float)

    lo = nu.copy()
    if mu is not None:
        hi = mu.copy()
        f_hi = F(hi, np.arange(n))
    else:
        lim_lo, lim_hi = G.lam_limits
        g0 = np.asarray(G(t, x, nu), dtype=float)
        direction = -np.sign(y * g0)
        direction[direction == 0] = 1.0
        step = 0.25 * (1.0 + np.abs(nu))
        hi = np.clip(nu + direction * step, lim_lo, lim_hi)
        f_hi = np.full(n, np.nan)
        pending = np.ones(n, bool)
        for _ in range(60):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            with np.errstate(invalid="ignore"):
                f_hi[idx] = F(hi[idx], idx)
            crossed = np.sign(f_hi[idx]) != np.sign(y[idx])
            at_limit = (hi[idx] <= lim_lo) | (hi[idx] >= lim_hi)
            pending[idx[crossed | at_limit | ~np.isfinite(f_hi[idx])]] = False
            step[idx] *= 2.0
            hi[idx] = np.where(pending[idx], np.clip(nu[idx] + direction[idx] * step[idx], lim_lo, lim_hi), hi[idx])
    w = find_root_batch(F, lo, hi, fprime=Fp, x0=seed_w, f_lo=y.copy(), f_hi=f_hi, xtol=xtol, size=n)
    return (-w).reshape(shape)


def _gl_g_moment(family, t, x, g_hi, power: int = 0, n: int = N_GAUSS):
    """int_{g_lo}^{g_hi} lam^power g lam_g dg (the lam-moment written in g)."""
    s, w = gauss_legendre(n)
    a = family.g_lo
    g = a + (g_hi - a)[:, None] * s[None, :]
    tt, xx = t[:, None], x[:, None]
    vals = g * np.asarray(family.partial("g", tt, xx, g), dtype=float)
    if power:
        vals = vals * np.asarray(family.lam(tt, xx, g), dtype=float) ** power
    return (g_hi - a) * np.sum(vals * w[None, :], axis=1)


def solve_g_batch(family, t, x, y, seed_g=None, xtol: float = 1e-15) -> np.ndarray:
    """g* with y + int_{g_lo}^{g*} g lam_g dg = 0 (so that -v = lam(g*)); NaN if none."""
    shape, (t, x, y) = _flat(t, x, y)
    n = t.size

    def F(g, i):
        return y[i] + _gl_g_moment(family, t[i], x[i], g)

    def Fp(g, i):
        return g * np.asarray(family.partial("g", t[i], x[i], g), dtype=float)

    lo = np.full(n, float(family.g_lo))
    hi = np.full(n, float(family.g_hi))
    f_hi = F(hi, np.arange(n))
    g = find_root_batch(F, lo, hi, fprime=Fp, x0=seed_g, f_lo=y.copy(), f_hi=f_hi, xtol=xtol, size=n)
    return g.reshape(shape)


def solve_v(G: DistributionG, nu: float, t: float, x: float, y: float, seed: float | None = None, mu=None) -> float:
    """v with y + int_nu^{-v} G dlam = 0 (scalar). At y = 0 returns -nu exactly."""
    if y == 0:
        return -float(nu)
    v = float(solve_v_batch(G, nu, t, x, y, seed, mu=mu))
    if not np.isfinite(v):
        raise BracketError(f"no root for v at (t, x, y) = ({t}, {x}, {y})")
    lam = np.linspace(min(nu, -v), max(nu, -v), 17)[1:-1]
    g = np.asarray(G(t + 0 * lam, x + 0 * lam, lam), dtype=float)
    if not (np.all(g >= 0) or np.all(g <= 0)):
        raise BracketError(f"G changes sign on [{nu}, {-v}] at (t, x) = ({t}, {x})")
    return v


def _adaptive_moment(G: DistributionG, t, x, a, b, power: int):
    shape, (t, x, a, b) = _flat(t, x, a, b)

    def f(lam, i):
        vals = np.asarray(G(t[i][:, None], x[i][:, None], lam), dtype=float)
        return vals * lam**power if power else vals

    return integrate_batch(f, a, b, QUAD_TOL, strict=False).reshape(shape)


def compute_u(G: DistributionG, nu, v, t, x):
    """u = int_nu^{-v} lam G dlam (adaptive quadrature)."""
    out = _adaptive_moment(G, t, x, nu, -np.asarray(v, dtype=float), 1)
    return float(out) if out.ndim == 0 else out


def compute_h(G: DistributionG, pair: BoundaryPair, conv: SignConvention, t, x):
    """h = s_h * int_nu^mu G dlam."""
    nu, mu = pair(t, x)
    out = conv.s_h * _adaptive_moment(G, t, x, nu, mu, 0)
    return float(out) if out.ndim == 0 else out


def compute_H_t(G: DistributionG, pair: BoundaryPair, conv: SignConvention, t, x):
    """H_t = s_h * int_nu^mu lam G dlam, the companion of H_x = h."""
    nu, mu = pair(t, x)
    out = conv.s_h * _adaptive_moment(G, t, x, nu, mu, 1)
    return float(out) if out.ndim == 0 else out


def moment_residual(G: DistributionG, nu, t, x, y, v):
    """y + int_nu^{-v} G dlam re-evaluated by adaptive quadrature."""
    return np.asarray(y, dtype=float) + _adaptive_moment(G, t, x, nu, -np.asarray(v, dtype=float), 0)


# --- fields ----------------------------------------------------------------


@dataclass
class SolutionFields:
    """v(t,x,y), u(t,x,y), h(t,x) as vectorized callables plus sampled snapshots."""

    v: Callable
    u: Callable
    h: Callable
    nu: Callable
    mu: Optional[Callable]
    H_t: Optional[Callable]
    conv: SignConvention
    kind: str
    params: dict = field(default_factory=dict)
    grid: Optional[GridSpec] = None
    samples: dict = field(default_factory=dict)

    @property
    def H_x(self):
        return self.h

    @property
    def masked_fraction(self) -> float:
        m = self.samples.get("mask")
        return float(np.mean(m)) if m is not None and m.size else 0.0

    def perturbed(self, amplitude: float) -> "SolutionFields":
        """v + a sin x and u + a y sin x (keeps u_y = v, breaks the PDE)."""
        a = float(amplitude)
        v0, u0 = self.v, self.u
        out = SolutionFields(
            lambda t, x, y: v0(t, x, y) + a * np.sin(x),
            lambda t, x, y: u0(t, x, y) + a * np.asarray(y) * np.sin(x),
            self.h, self.nu, self.mu, self.H_t, self.conv, self.kind + "+perturbed",
            dict(self.params, perturbation=a), self.grid, {},
        )
        return out

    def provenance(self) -> dict:
        return {"family": self.kind, "params": self.params, "signs": self.conv.to_dict()}


def _bounded(out: FamilyOutputs) -> bool:
    """True when G only exists between nu and mu (lam-families)."""
    return out.pair.mu is not None and out.G.constant is None


def _adaptive_g_moment(family, t, x, g_hi, power: int):
    shape, (t, x, g_hi) = _flat(t, x, g_hi)

    def f(g, i):
        tt, xx = t[i][:, None], x[i][:, None]
        vals = g * np.asarray(family.partial("g", tt, xx, g), dtype=float)
        if power:
            vals = vals * np.asarray(family.lam(tt, xx, g), dtype=float) ** power
        return vals

    return integrate_batch(f, family.g_lo + 0 * g_hi, g_hi, QUAD_TOL, strict=False).reshape(shape)


def _column_solve(out: FamilyOutputs, t, x, y, nu, mu, seed=None):
    """(v, u, aux) on flat arrays; aux is the continuation seed (g* or v)."""
    fam = out.family
    if fam is not None:
        g = solve_g_batch(fam, t, x, y, seed)
        ok = np.isfinite(g)
        v = np.full(t.size, np.nan)
        u = np.full(t.size, np.nan)
        v[ok] = -np.asarray(fam.lam(t[ok], x[ok], g[ok]), dtype=float)
        u[ok] = _adaptive_g_moment(fam, t[ok], x[ok], g[ok], 1)
        return v, u, g
    v = solve_v_batch(out.G, nu, t, x, y, seed, mu=mu if _bounded(out) else None)
    ok = np.isfinite(v)
    u = np.full(t.size, np.nan)
    u[ok] = _adaptive_moment(out.G, t[ok], x[ok], nu[ok], -v[ok], 1)
    return v, u, v


def _make_callables(out: FamilyOutputs, conv: SignConvention):
    G, pair = out.G, out.pair
    fam = out.family
    has_mu = pair.mu is not None
    valid = fam.is_valid if fam is not None else None

    def zeros(t, x):
        r = np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)
        return float(r) if r.ndim == 0 else r

    def h(t, x):
        if not has_mu:
            return zeros(t, x)
        if fam is not None:
            shape, (tf, xf) = _flat(t, x)
            r = (conv.s_h * _adaptive_g_moment(fam, tf, xf, fam.g_hi + 0 * tf, 0)).reshape(shape)
            return float(r) if r.ndim == 0 else r
        return compute_h(G, pair, conv, t, x)

    def H_t(t, x):
        if not has_mu:
            return zeros(t, x)
        if fam is not None:
            shape, (tf, xf) = _flat(t, x)
            r = (conv.s_h * _adaptive_g_moment(fam, tf, xf, fam.g_hi + 0 * tf, 1)).reshape(shape)
            return float(r) if r.ndim == 0 else r
        return compute_H_t(G, pair, conv, t, x)

    def both(t, x, y):
        shape, (t, x, y) = _flat(t, x, y)
        nu, mu = (np.asarray(a, dtype=float).ravel() for a in pair(t, x))
        vres = np.full(t.size, np.nan)
        ures = np.full(t.size, np.nan)
        ok = np.ones(t.size, bool) if valid is None else valid(t, x)
        ok &= y != 0
        if np.any(ok):
            i = np.flatnonzero(ok)
            vres[i], ures[i], _ = _column_solve(out, t[i], x[i], y[i], nu[i], mu[i])
        z = y == 0
        vres[z] = -nu[z]
        ures[z] = 0.0
        return shape, vres, ures

    def v(t, x, y):
        shape, vres, _ = both(t, x, y)
        return float(vres[0]) if shape == () else vres.reshape(shape)

    def u(t, x, y):
        shape, _, ures = both(t, x, y)
        return float(ures[0]) if shape == () else ures.reshape(shape)

    return v, u, h, H_t


def evaluate_fields(
    out: FamilyOutputs,
    conv: SignConvention,
    grid: GridSpec,
    *,
    threads: int = 1,
    abort_fraction: float = MASK_LIMIT,
) -> SolutionFields:
    """Sample v, u, h on ``grid`` (axes t, x, y) with y-continuation.

    Points where the reconstruction fails are masked, never filled. More than
    ``abort_fraction`` masked points raises :class:`GenerationError`.
    """
    if grid.names != ("t", "x", "y"):
        grid = grid.subgrid("t", "x", "y")
    v_fn, u_fn, h_fn, Ht_fn = _make_callables(out, conv)
    ts, xs, ys = grid.points("t"), grid.points("x"), grid.points("y")
    T2, X2 = np.meshgrid(ts, xs, indexing="ij")
    cols_t, cols_x = T2.ravel(), X2.ravel()
    ncol = cols_t.size
    pair = out.pair

    def run(chunk: np.ndarray):
        t, x = cols_t[chunk], cols_x[chunk]
        nu, mu = pair(t, x)
        nu, mu = np.asarray(nu, float), np.asarray(mu, float)
        ok = np.isfinite(nu) & (np.isfinite(mu) | (pair.mu is None))
        if out.family is not None:
            ok &= out.family.is_valid(t, x)
        hcol = np.where(ok, h_fn(t, x) if ok.any() else 0.0, np.nan)
        V = np.full((chunk.size, ys.size), np.nan)
        U = np.full_like(V, np.nan)
        prev = None
        for k, y in enumerate(ys):
            if y == 0:
                V[ok, k] = -nu[ok]
                U[ok, k] = 0.0
                continue
            live = ok & np.isfinite(V[:, k - 1]) if k > 0 else ok
            if live.any():
                i = np.flatnonzero(live)
                seed = None if prev is None else prev[i]
                V[i, k], U[i, k], aux = _column_solve(out, t[i], x[i], np.full(i.size, y), nu[i], mu[i], seed)
                nxt = np.full(chunk.size, np.nan) if prev is None else prev.copy()
                nxt[i] = aux
                prev = nxt
        return hcol, V, U

    chunks = np.array_split(np.arange(ncol), max(1, min(int(threads), ncol)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    Hcol = np.concatenate([p[0] for p in parts]).reshape(ts.size, xs.size)
    V = np.concatenate([p[1] for p in parts]).reshape(ts.size, xs.size, ys.size)
    U = np.concatenate([p[2] for p in parts]).reshape(ts.size, xs.size, ys.size)
    mask = ~(np.isfinite(V) & np.isfinite(U))
    frac = float(np.mean(mask))
    if frac > abort_fraction:
        raise GenerationError(f"{100 * frac:.1f}% of grid points could not be reconstructed")
    fields = SolutionFields(
        v_fn, u_fn, h_fn, pair.nu, pair.mu, Ht_fn, conv, out.kind, dict(out.params), grid,
        {"v": V, "u": U, "h": Hcol, "mask": mask},
    )
    log.info("evaluated %s on %s grid, %.2f%% masked", out.kind, grid.shape, 100 * frac)
    return fields


def make_fields(out: FamilyOutputs, conv: SignConvention, grid: GridSpec | None = None) -> SolutionFields:
    """Callables only, no sampling."""
    v, u, h, Ht = _make_callables(out, conv)
    return SolutionFields(v, u, h, out.pair.nu, out.pair.mu, Ht, conv, out.kind, dict(out.params), grid, {})


# --- sign resolution -------------------------------------------------------


def resolve_signs(
    build: Callable[[int], FamilyOutputs] | FamilyOutputs,
    grid: GridSpec,
    *,
    vary_phi: bool | None = None,
    ladder: tuple[int, ...] = (32, 64, 128),
    probes: int = 4,
    min_order: float = 1.9,
    report: dict | None = None,
) -> SignConvention:
    """Pick the unique (s_h, s_phi) whose Benney residual converges.

    ``build(s_phi)`` returns the family outputs for a given sign of Phi; a
    plain :class:`FamilyOutputs` means s_phi is not a parameter of the family.
    Every combination's norms and fitted order land in ``report`` if given.
    """
    from .verifier import benney_ladder

    if isinstance(build, FamilyOutputs):
        fixed = build
        build = lambda s: fixed
        vary_phi = False if vary_phi is None else vary_phi
    elif vary_phi is None:
        vary_phi = True
    phis = (1, -1) if vary_phi else (1,)
    results = {}
    passing = []
    for s_phi in phis:
        outs = build(s_phi)
        for s_h in (-1, 1):
            conv = SignConvention(s_h, s_phi)
            entry = benney_ladder(outs, conv, grid, ladder=ladder, probes=probes)
            ok = entry["masked_fraction"] <= MASK_LIMIT and (
                entry["status"] == "exact" or (entry["order"] is not None and entry["order"] >= min_order)
            )
            entry["passes"] = bool(ok)
            results[f"s_h={s_h:+d},s_phi={s_phi:+d}"] = entry
            if ok:
                passing.append((conv, entry))
    if report is not None:
        report.update(results)
    if not passing:
        raise NoConvergingSignsError("no sign convention gives a converging Benney residual")
    if len(passing) > 1:
        if all(e["hx_max"] <= 1e-12 for _, e in passing):
            raise DegenerateSignsError("h_x vanishes identically: sign conventions are unobservable")
        raise DegenerateSignsError(
            "several sign conventions converge: " + ", ".join(str(c.to_dict()) for c, _ in passing)
        )
    return passing[0][0]
