"""Explicit solution families: free streaming, constant G (hodograph) and rational.

Each constructor returns the objects the reconstruction pipeline consumes: a
distribution function G(t, x, lam), the boundary characteristics (nu, mu) and,
where the family is given through lam(t, x, g), a :class:`LambdaFamily`.
All callables are vectorized over numpy arrays.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, RegularGridInterpolator

from . import expr as ex
from .numerics import (
    GridSpec,
    Tolerance,
    find_root_batch,
    integrate_batch,
    newton2d,
    newton2d_batch,
    rk4_step,
)

__all__ = [
    "FamilyError",
    "BracketFailure",
    "CollapseError",
    "RangeError",
    "DistributionG",
    "BoundaryPair",
    "LambdaFamily",
    "HodographTheta",
    "RationalParams",
    "FamilyOutputs",
    "freestream_family",
    "const_family",
    "theta_sigma",
    "theta_separable",
    "theta_sum",
    "theta_constant",
    "theta_coefficient",
    "family_outputs",
    "rational_family",
    "invert_lambda_to_G",
]

FD_STEP = 1e-5


class FamilyError(ValueError):
    pass


class BracketFailure(FamilyError):
    def __init__(self, message: str, location=None):
        super().__init__(message if location is None else f"{message} at (t, x) = {location}")
        self.location = location


class CollapseError(FamilyError):
    """Hodograph map degenerates (mu -> nu or vanishing theta gradient)."""


class RangeError(FamilyError):
    pass


def _arr(*xs):
    return np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in xs))


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


# --- basic containers ------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPair:
    nu: Callable
    mu: Optional[Callable] = None

    def __call__(self, t, x):
        nu = self.nu(t, x)
        mu = self.mu(t, x) if self.mu is not None else np.full_like(np.asarray(nu, dtype=float), np.nan)
        return nu, mu


@dataclass(frozen=True)
class DistributionG:
    """G(t, x, lam) with the lam-range spanned by the boundary pair.

    ``lam_limits`` bounds the bracket search of the reconstruction when the
    range is one-sided (free streaming has no mu).
    """

    G: Callable
    pair: BoundaryPair
    provenance: str
    lam_limits: tuple[float, float] = (-1e3, 1e3)
    constant: Optional[float] = None

    def __call__(self, t, x, lam):
        return self.G(t, x, lam)

    def lam_range(self, t, x):
        nu, mu = self.pair(t, x)
        if self.pair.mu is None:
            lo = np.full_like(np.asarray(nu, dtype=float), self.lam_limits[0])
            hi = np.full_like(lo, self.lam_limits[1])
            return lo, hi
        return np.minimum(nu, mu), np.maximum(nu, mu)


@dataclass(frozen=True)
class LambdaFamily:
    """lam(t, x, g) on g in [g_lo, g_hi] with its partial derivatives.

    Partials left as ``None`` are replaced by central differences.
    """

    lam: Callable
    g_lo: float
    g_hi: float
    lam_t: Optional[Callable] = None
    lam_x: Optional[Callable] = None
    lam_g: Optional[Callable] = None
    lam_gx: Optional[Callable] = None
    valid: Optional[Callable] = None
    phi_sign: int = 1
    name: str = "lambda"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.g_lo < self.g_hi:
            raise FamilyError(f"g_lo must be < g_hi (got {self.g_lo}, {self.g_hi})")

    def __call__(self, t, x, g):
        return self.lam(t, x, g)

    def partial(self, name: str, t, x, g):
        f = getattr(self, "lam_" + name)
        if f is not None:
            return f(t, x, g)
        h = FD_STEP
        t, x, g = _arr(t, x, g)
        if name == "t":
            return (self.lam(t + h, x, g) - self.lam(t - h, x, g)) / (2 * h)
        if name == "x":
            return (self.lam(t, x + h, g) - self.lam(t, x - h, g)) / (2 * h)
        if name == "g":
            return (self.lam(t, x, g + h) - self.lam(t, x, g - h)) / (2 * h)
        if name == "gx":
            return (self.partial("g", t, x + h, g) - self.partial("g", t, x - h, g)) / (2 * h)
        raise KeyError(name)

    def is_valid(self, t, x):
        t, x = _arr(t, x)
        if self.valid is None:
            return np.ones(t.shape, bool)
        return np.asarray(self.valid(t, x), bool)

    def boundary_pair(self) -> BoundaryPair:
        return BoundaryPair(lambda t, x: self.lam(t, x, self.g_lo), lambda t, x: self.lam(t, x, self.g_hi))

    def invert(self, t, x, lam):
        """g with lam(t, x, g) = lam; NaN where lam lies outside [nu, mu]."""
        t, x, lam = _arr(t, x, lam)
        shape = t.shape
        t, x, lam = t.ravel(), x.ravel(), lam.ravel()
        f = lambda g, i: self.lam(t[i], x[i], g) - lam[i]
        fp = lambda g, i: self.partial("g", t[i], x[i], g)
        g = find_root_batch(f, self.g_lo, self.g_hi, fprime=fp, size=t.size)
        return g.reshape(shape)

    def to_distribution(self) -> DistributionG:
        def G(t, x, lam):
            return _out(self.invert(t, x, lam))

        return DistributionG(G, self.boundary_pair(), "inverted-from-lambda")


@dataclass(frozen=True)
class FamilyOutputs:
    """Everything the reconstruction needs from a family."""

    kind: str
    G: DistributionG
    pair: BoundaryPair
    family: Optional[LambdaFamily] = None
    params: dict = field(default_factory=dict)


# --- free streaming --------------------------------------------------------


def freestream_family(
    G0: ex.Expression,
    g_lo: float,
    domain: Optional[GridSpec] = None,
    *,
    forcing: float = 0.0,
    lam_limits: tuple[float, float] = (-50.0, 50.0),
) -> FamilyOutputs:
    """G = G0(x + lam*t - a*t^2/2, lam - a*t) with nu from the level set G = g_lo.

    ``forcing`` is a constant H_xx = a (zero gives the h = 0 branch). ``G0`` is
    an expression in ``xi`` and ``lam``.
    """
    a = float(forcing)
    G0_lam = ex.differentiate(G0, "lam")
    G0_xi = ex.differentiate(G0, "xi")
    g_lo = float(g_lo)

    def args(t, x, lam):
        return {"xi": x + lam * t - 0.5 * a * t * t, "lam": lam - a * t}

    def G(t, x, lam):
        t, x, lam = _arr(t, x, lam)
        return _out(np.broadcast_to(G0(**args(t, x, lam)), t.shape))

    def dG(t, x, lam):
        t, x, lam = _arr(t, x, lam)
        b = args(t, x, lam)
        return np.broadcast_to(G0_xi(**b), t.shape) * t + np.broadcast_to(G0_lam(**b), t.shape)

    def nu(t, x):
        t, x = _arr(t, x)
        shape = t.shape
        tf, xf = t.ravel(), x.ravel()
        f = lambda lam, i: G(tf[i], xf[i], lam) - g_lo
        fp = lambda lam, i: dG(tf[i], xf[i], lam)
        out = find_root_batch(f, lam_limits[0], lam_limits[1], fprime=fp, size=tf.size)
        if np.any(np.isnan(out)):
            k = int(np.flatnonzero(np.isnan(out))[0])
            raise BracketFailure("no level-set crossing for nu", (float(tf[k]), float(xf[k])))
        return _out(out.reshape(shape))

    if domain is not None:
        tt, xx = domain.subgrid("t", "x").mesh()
        nu(tt, xx)  # raises with a location on bracket failure

    pair = BoundaryPair(nu, None)
    dist = DistributionG(G, pair, "free-streaming", lam_limits)
    return FamilyOutputs(
        "freestream", dist, pair, None, {"G0": G0.source, "g_lo": g_lo, "forcing": a}
    )


# --- hodograph (constant G) ------------------------------------------------


@dataclass(frozen=True)
class HodographTheta:
    """theta(Sigma, R) with first partials; G = -1/(2A)."""

    theta: Callable
    theta_S: Callable
    theta_R: Callable
    A: float
    label: str = "theta"
    R_range: tuple[float, float] = (0.0, np.inf)

    def __post_init__(self):
        if np.isnan(self.A) or self.A == 0:
            raise FamilyError("A must be non-zero")


def theta_sigma(A: float) -> HodographTheta:
    """theta = Sigma."""
    one = lambda S, R: np.ones_like(np.asarray(S, dtype=float) + np.asarray(R, dtype=float))
    zero = lambda S, R: np.zeros_like(np.asarray(S, dtype=float) + np.asarray(R, dtype=float))
    return HodographTheta(lambda S, R: np.asarray(S, float) + 0.0 * np.asarray(R, float), one, zero, float(A), "sigma")


def theta_constant(A: float, c: float = 1.0) -> HodographTheta:
    zero = lambda S, R: np.zeros_like(np.asarray(S, dtype=float) + np.asarray(R, dtype=float))
    return HodographTheta(lambda S, R: c + zero(S, R), zero, zero, float(A), "constant")


def theta_coefficient(A: float, R, s_h: int = -1):
    """Coefficient c(R) in theta_RR = c(R) theta_SS for the sign convention s_h."""
    return 1.0 - s_h / (A * np.asarray(R, dtype=float))


def theta_separable(
    k: float,
    A: float,
    R_range: tuple[float, float],
    steps: int = 1000,
    *,
    s_h: int = -1,
) -> HodographTheta:
    """theta = exp(k*Sigma) * rho(R) with rho'' = k^2 c(R) rho, rho(R0)=1, rho'(R0)=0.

    c(R) = 1 - s_h/(A R). ``s_h = +1`` gives the coefficient 1 - 1/(AR).
    rho is tabulated by RK4 on ``4*steps`` intervals and interpolated by cubic
    Hermite splines (rho with rho', rho' with rho'').
    """
    R0, R1 = map(float, R_range)
    if steps < 100:
        raise FamilyError("steps must be >= 100")
    if not 0 < R0 < R1 and not R0 < R1 < 0:
        raise FamilyError("R_range must be increasing and bounded away from 0")
    if np.isfinite(A):
        Rs = s_h / A  # where the coefficient vanishes
        if R0 < Rs < R1:
            raise FamilyError(f"R_range crosses the coefficient zero at R = {Rs}")
    k, A = float(k), float(A)
    coef = (lambda R: 1.0) if not np.isfinite(A) else (lambda R: 1.0 - s_h / (A * R))
    n = 4 * int(steps)
    R = np.linspace(R0, R1, n + 1)
    dR = R[1] - R[0]
    Y = np.empty((n + 1, 2))
    Y[0] = (1.0, 0.0)
    rhs = lambda r, y: np.array([y[1], k * k * coef(r) * y[0]])
    for i in range(n):
        Y[i + 1] = rk4_step(Y[i], rhs, R[i], dR)
    d2 = k * k * np.array([coef(r) for r in R]) * Y[:, 0]
    rho = CubicHermiteSpline(R, Y[:, 0], Y[:, 1])
    drho = CubicHermiteSpline(R, Y[:, 1], d2)

    def check(R):
        R = np.asarray(R, dtype=float)
        if np.any((R < R0 - 1e-12) | (R > R1 + 1e-12)):
            raise RangeError(f"R outside tabulated range {R_range}")
        return R

    def theta(S, R):
        S, R = _arr(S, R)
        return np.exp(k * S) * rho(check(R))

    def theta_S(S, R):
        S, R = _arr(S, R)
        return k * np.exp(k * S) * rho(check(R))

    def theta_R(S, R):
        S, R = _arr(S, R)
        return np.exp(k * S) * drho(check(R))

    out = HodographTheta(theta, theta_S, theta_R, float(A) if np.isfinite(A) else np.inf, f"separable(k={k})", (R0, R1))
    object.__setattr__(out, "rho", rho)
    object.__setattr__(out, "drho", drho)
    return out


def theta_sum(a: HodographTheta, b: HodographTheta, weight: float = 1.0) -> HodographTheta:
    """theta_a + weight*theta_b (same A)."""
    if a.A != b.A:
        raise FamilyError("theta_sum needs a common A")
    lo = max(a.R_range[0], b.R_range[0])
    hi = min(a.R_range[1], b.R_range[1])
    return HodographTheta(
        lambda S, R: a.theta(S, R) + weight * b.theta(S, R),
        lambda S, R: a.theta_S(S, R) + weight * b.theta_S(S, R),
        lambda S, R: a.theta_R(S, R) + weight * b.theta_R(S, R),
        a.A,
        f"{a.label}+{weight}*{b.label}",
        (lo, hi),
    )


def _hodograph_residual(theta: HodographTheta, t, x):
    """F(mu, nu) = (t(mu,nu) - t, x(mu,nu) - x) for the hodograph map."""

    def F(mu, nu, idx=slice(None)):
        S = 0.5 * (mu + nu)
        R = 0.5 * (mu - nu)
        with np.errstate(divide="ignore", invalid="ignore"):
            tS = theta.theta_S(S, R)
            tR = theta.theta_R(S, R)
            tt = tS / (2 * R)
            xx = 0.5 * (tR - S * tS / R)
        return tt - t[idx], xx - x[idx]

    return F


def _safe_residual(theta, t, x):
    F = _hodograph_residual(theta, t, x)

    def G(mu, nu, idx):
        try:
            return F(mu, nu, idx)
        except RangeError:
            return np.nan * np.asarray(mu), np.nan * np.asarray(nu)

    return G


def const_family(
    theta: HodographTheta,
    domain: GridSpec,
    guess: tuple[float, float] | None = None,
    tol: Tolerance | None = None,
) -> FamilyOutputs:
    """Constant G = -1/(2A); (mu, nu) from inverting the hodograph map.

    A coarse (t, x) table is built by scalar Newton with continuation from
    ``guess`` = (mu, nu) at the (t_min, x_min) corner; later queries run a
    vectorized Newton seeded by interpolating that table.
    """
    tol = tol or Tolerance(abs=1e-13, rel=0.0, max_iterations=60)
    ax_t, ax_x = domain.axis("t"), domain.axis("x")
    nt = max(3, min(ax_t.count, 17))
    nx = max(3, min(ax_x.count, 17))
    ts = np.linspace(ax_t.min, ax_t.max, nt)
    xs = np.linspace(ax_x.min, ax_x.max, nx)
    if guess is None:
        # theta = Sigma inversion as a generic starting point
        t0, x0 = ts[0], xs[0]
        guess = ((0.5 - x0) / t0, -(x0 + 0.5) / t0)

    S0, R0 = 0.5 * (guess[0] + guess[1]), 0.5 * (guess[0] - guess[1])
    with np.errstate(all="ignore"):
        g0 = np.array([theta.theta_S(S0, R0), theta.theta_R(S0, R0)], dtype=float)
    if np.all(np.abs(g0) < 1e-300):
        raise CollapseError("hodograph map degenerate: theta has zero gradient (t = 0 identically)")

    MU = np.empty((nt, nx))
    NU = np.empty((nt, nx))
    for i, t in enumerate(ts):
        for j, x in enumerate(xs):
            if j > 0:
                seed = (MU[i, j - 1], NU[i, j - 1])
            elif i > 0:
                seed = (MU[i - 1, 0], NU[i - 1, 0])
            else:
                seed = guess
            F = _hodograph_residual(theta, np.array([t]), np.array([x]))
            try:
                mu, nu = newton2d(lambda p, q: tuple(float(v[0]) for v in F(np.array([p]), np.array([q]))), seed, tol)
            except Exception as e:  # noqa: BLE001 - rewrap with location
                raise CollapseError(f"hodograph inversion failed at (t, x) = ({t}, {x}): {e}") from e
            if abs(mu - nu) < 1e-12:
                raise CollapseError(f"mu -> nu collapse at (t, x) = ({t}, {x})")
            MU[i, j], NU[i, j] = mu, nu
    interp_mu = RegularGridInterpolator((ts, xs), MU, bounds_error=False, fill_value=None)
    interp_nu = RegularGridInterpolator((ts, xs), NU, bounds_error=False, fill_value=None)

    lock = threading.Lock()
    cache: dict = {}

    def solve(t, x):
        t, x = _arr(t, x)
        key = (t.shape, t.tobytes(), x.tobytes())
        with lock:
            hit = cache.get(key)
        if hit is not None:
            return hit
        pts = np.stack([t.ravel(), x.ravel()], axis=-1)
        mu0, nu0 = interp_mu(pts), interp_nu(pts)
        F = _safe_residual(theta, t.ravel(), x.ravel())
        mu, nu = newton2d_batch(F, mu0, nu0, atol=1e-13)
        res = (mu.reshape(t.shape), nu.reshape(t.shape))
        with lock:
            if len(cache) > 64:
                cache.clear()
            cache[key] = res
        return res

    pair = BoundaryPair(lambda t, x: _out(solve(t, x)[1]), lambda t, x: _out(solve(t, x)[0]))
    Gc = -1.0 / (2.0 * theta.A)

    def G(t, x, lam):
        t, x, lam = _arr(t, x, lam)
        return _out(np.full(t.shape, Gc))

    dist = DistributionG(G, pair, "constant", constant=Gc)
    return FamilyOutputs("const_theta", dist, pair, None, {"A": theta.A, "theta": theta.label})


# --- rational family -------------------------------------------------------


@dataclass(frozen=True)
class RationalParams:
    U: ex.Expression
    V: ex.Expression
    g_lo: float = 0.0
    g_hi: float = 1.0
    phi_sign: int = 1

    def __post_init__(self):
        if not self.g_lo < self.g_hi:
            raise FamilyError(f"g_lo must be < g_hi (got {self.g_lo}, {self.g_hi})")
        if self.phi_sign not in (1, -1):
            raise FamilyError("phi_sign must be +1 or -1")

    @classmethod
    def from_strings(cls, U: str, V: str, g_lo=0.0, g_hi=1.0, phi_sign=1) -> "RationalParams":
        return cls(ex.parse(U, ["g"]), ex.parse(V, ["g"]), float(g_lo), float(g_hi), int(phi_sign))

    def with_sign(self, phi_sign: int) -> "RationalParams":
        return RationalParams(self.U, self.V, self.g_lo, self.g_hi, int(phi_sign))


class _PhiCache:
    """Phi, Phi_t, Phi_tt per t, computed once by batch quadrature (thread safe)."""

    def __init__(self, U, Ug, g_lo, g_hi, sign):
        self.U, self.Ug, self.g_lo, self.g_hi, self.sign = U, Ug, g_lo, g_hi, sign
        self._lock = threading.Lock()
        self._table: dict[float, tuple[float, float, float]] = {}
        self._tol = Tolerance(abs=1e-15, rel=1e-14)

    def _compute(self, ts: np.ndarray) -> np.ndarray:
        U, Ug = self.U, self.Ug

        def integrand(kind):
            def f(g, idx):
                tt = ts[idx][:, None]
                u = U(g)
                w = g * Ug(g)
                if kind == 0:
                    return w * np.log(tt + u)
                if kind == 1:
                    return w / (tt + u)
                return -w / (tt + u) ** 2

            return f

        out = np.empty((ts.size, 3))
        for kind in range(3):
            out[:, kind] = self.sign * integrate_batch(integrand(kind), self.g_lo, self.g_hi + 0 * ts, self._tol)
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        uniq, inv = np.unique(t.ravel(), return_inverse=True)
        with self._lock:
            missing = np.array([u for u in uniq if u not in self._table])
        if missing.size:
            vals = self._compute(missing)
            with self._lock:
                for u, v in zip(missing, vals):
                    self._table[float(u)] = tuple(v)
        with self._lock:
            tab = np.array([self._table[float(u)] for u in uniq]).reshape(-1, 3)
        res = tab[inv].reshape(t.shape + (3,))
        return res[..., 0], res[..., 1], res[..., 2]


def rational_family(params: RationalParams, domain: GridSpec | None = None) -> LambdaFamily:
    """lam = -(x + Phi(t) + V(g))/(t + U(g)) + Phi_t(t),
    Phi(t) = sigma * int g U_g ln(t + U) dg over [g_lo, g_hi]."""
    Ue, Ve = params.U, params.V
    Uge, Vge = ex.differentiate(Ue, "g"), ex.differentiate(Ve, "g")
    ev = lambda e, g: np.broadcast_to(np.asarray(e(g=g), dtype=float), np.shape(g))
    U = lambda g: ev(Ue, g)
    V = lambda g: ev(Ve, g)
    Ug = lambda g: ev(Uge, g)
    Vg = lambda g: ev(Vge, g)
    g_lo, g_hi = params.g_lo, params.g_hi
    gs = np.linspace(g_lo, g_hi, 65)

    def denom_ok(t):
        t = np.asarray(t, dtype=float)
        umin = np.min(U(gs))
        return t + umin > 0

    if domain is not None:
        ax = domain.axis("t")
        if not np.all(denom_ok(np.array([ax.min, ax.max]))):
            raise FamilyError(f"t + U(g) <= 0 on the configured domain (t_min = {ax.min})")
        ug = Ug(gs)
        if not (np.all(ug > 0) or np.all(ug < 0) or np.all(ug == 0)):
            raise FamilyError("U_g changes sign on [g_lo, g_hi]")

    phi = _PhiCache(U, Ug, g_lo, g_hi, params.phi_sign)

    def prep(t, x, g):
        t, x, g = _arr(t, x, g)
        if np.any(t + U(g) <= 0):
            raise FamilyError("t + U(g) <= 0")
        P, Pt, Ptt = phi(t)
        return t, x, g, P, Pt, Ptt, t + U(g)

    def lam(t, x, g):
        t, x, g, P, Pt, _, d = prep(t, x, g)
        return _out(-(x + P + V(g)) / d + Pt)

    def lam_t(t, x, g):
        t, x, g, P, Pt, Ptt, d = prep(t, x, g)
        return _out((x + P + V(g)) / d**2 - Pt / d + Ptt)

    def lam_x(t, x, g):
        t, x, g, *_, d = prep(t, x, g)
        return _out(-1.0 / d)

    def lam_g(t, x, g):
        t, x, g, P, Pt, _, d = prep(t, x, g)
        return _out(-Vg(g) / d + (x + P + V(g)) * Ug(g) / d**2)

    def lam_gx(t, x, g):
        t, x, g, *_, d = prep(t, x, g)
        return _out(Ug(g) / d**2)

    def valid(t, x):
        t, x = _arr(t, x)
        ok = denom_ok(t)
        tt = np.where(ok, t, np.abs(t) + 1.0 - np.min(U(gs)))
        lg = lam_g(tt[..., None], x[..., None], gs)
        one_sign = np.all(lg > 0, axis=-1) | np.all(lg < 0, axis=-1)
        return ok & one_sign

    fam = LambdaFamily(
        lam, g_lo, g_hi, lam_t, lam_x, lam_g, lam_gx, valid, params.phi_sign, "rational",
        {"U": Ue.source, "V": Ve.source, "g_lo": g_lo, "g_hi": g_hi, "phi_sign": params.phi_sign},
    )
    object.__setattr__(fam, "phi", phi)
    return fam


def invert_lambda_to_G(family: LambdaFamily, t: float, x: float, lam: float) -> float:
    """G(t, x, lam) = g* with lam(t, x, g*) = lam (scalar, with checks)."""
    gs = np.linspace(family.g_lo, family.g_hi, 33)
    lg = np.asarray(family.partial("g", t + 0 * gs, x + 0 * gs, gs))
    if not (np.all(lg > 0) or np.all(lg < 0)):
        raise FamilyError(f"lam_g is not of one sign at (t, x) = ({t}, {x})")
    nu = float(family.lam(t, x, family.g_lo))
    mu = float(family.lam(t, x, family.g_hi))
    lo, hi = min(nu, mu), max(nu, mu)
    span = 1e-13 * (1.0 + abs(lo) + abs(hi))
    if not lo - span <= lam <= hi + span:
        raise RangeError(f"lam = {lam} outside [{lo}, {hi}] at (t, x) = ({t}, {x})")
    if abs(lam - nu) <= span:
        return float(family.g_lo)
    if abs(lam - mu) <= span:
        return float(family.g_hi)
    g = family.invert(t, x, lam)
    return float(g)


def family_outputs(family: LambdaFamily) -> FamilyOutputs:
    pair = family.boundary_pair()
    dist = DistributionG(family.to_distribution().G, pair, "inverted-from-lambda")
    return FamilyOutputs(family.name, dist, pair, family, dict(family.params))
