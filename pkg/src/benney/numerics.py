"""Numerical primitives shared by the solution builders and the verifier.

Scalar routines (``integrate``, ``find_root``, ``newton2d``) follow the usual
textbook contracts. The ``*_batch`` variants solve many independent problems
at once on numpy arrays; they are what the field evaluators use.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "NumericsError",
    "QuadratureError",
    "NonFiniteError",
    "BracketError",
    "ConvergenceError",
    "SingularJacobianError",
    "DomainError",
    "Tolerance",
    "Axis",
    "GridSpec",
    "integrate",
    "integrate_batch",
    "gauss_legendre",
    "find_root",
    "find_root_batch",
    "newton2d",
    "newton2d_batch",
    "fd_partial",
    "rk4_step",
    "fit_order",
]


class NumericsError(RuntimeError):
    pass


class QuadratureError(NumericsError):
    pass


class NonFiniteError(NumericsError, FloatingPointError):
    pass


class BracketError(NumericsError):
    pass


class ConvergenceError(NumericsError):
    pass


class SingularJacobianError(NumericsError):
    pass


class DomainError(NumericsError, ValueError):
    pass


@dataclass(frozen=True)
class Tolerance:
    abs: float = 1e-10
    rel: float = 1e-10
    max_iterations: int = 200

    def __post_init__(self):
        if not self.abs > 0:
            raise ValueError("Tolerance.abs must be > 0")
        if not self.rel >= 0:
            raise ValueError("Tolerance.rel must be >= 0")
        if int(self.max_iterations) < 1:
            raise ValueError("Tolerance.max_iterations must be >= 1")

    @classmethod
    def from_dict(cls, d: dict | None) -> "Tolerance":
        if not d:
            return cls()
        return cls(float(d.get("abs", 1e-10)), float(d.get("rel", 1e-10)), int(d.get("max_iterations", 200)))


DEFAULT_TOL = Tolerance()
MAX_QUAD_DEPTH = 40


# --- grids -----------------------------------------------------------------


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int

    def __post_init__(self):
        if int(self.count) < 2:
            raise ValueError(f"axis {self.name!r}: count must be >= 2")
        if not float(self.min) < float(self.max):
            raise ValueError(f"axis {self.name!r}: min must be < max")

    @property
    def spacing(self) -> float:
        return (self.max - self.min) / (self.count - 1)

    def points(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid. Axis order is significant (it is the array order)."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names in {names}")

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        """``{"t": [min, max, count], ...}``; insertion order gives axis order."""
        axes = []
        for name, spec in d.items():
            if isinstance(spec, dict):
                lo, hi, n = spec["min"], spec["max"], spec["count"]
            else:
                lo, hi, n = spec
            axes.append(Axis(name, float(lo), float(hi), int(n)))
        return cls(tuple(axes))

    @classmethod
    def make(cls, **axes: tuple[float, float, int]) -> "GridSpec":
        return cls.from_dict(axes)

    def to_dict(self) -> dict:
        return {a.name: [a.min, a.max, a.count] for a in self.axes}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    def spacing(self, name: str) -> float:
        return self.axis(name).spacing

    def points(self, name: str) -> np.ndarray:
        return self.axis(name).points()

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(a.points() for a in self.axes), indexing="ij"))

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(tuple(Axis(a.name, a.min, a.max, factor * (a.count - 1) + 1) for a in self.axes))

    def with_divisions(self, n: int) -> "GridSpec":
        """Same box, ``n`` intervals per axis."""
        return GridSpec(tuple(Axis(a.name, a.min, a.max, n + 1) for a in self.axes))

    def subgrid(self, *names: str) -> "GridSpec":
        return GridSpec(tuple(self.axis(n) for n in names))

    def interior_mesh(self, margin: int = 1) -> tuple[np.ndarray, ...]:
        pts = [a.points()[margin : a.count - margin] for a in self.axes]
        return tuple(np.meshgrid(*pts, indexing="ij"))

    def contains(self, name: str, value, margin: float = 0.0):
        a = self.axis(name)
        tol = 1e-12 * (abs(a.min) + abs(a.max) + 1.0)
        return (np.asarray(value) >= a.min + margin - tol) & (np.asarray(value) <= a.max - margin + tol)


# --- quadrature ------------------------------------------------------------

# Gauss-Kronrod 7/15 nodes and weights on [-1, 1]
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_GK_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_GK_WK = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss weights placed on the Kronrod node layout (odd positions of _XK)
_GK_WG = np.zeros(15)
_GK_WG[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], [_WG[-1]], _WG[:-1][::-1]])


def _gk15(f: Callable, a: float, b: float, vectorized: bool) -> tuple[float, float]:
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    x = c + h * _GK_NODES
    y = np.asarray(f(x), dtype=float) if vectorized else np.array([f(xi) for xi in x], dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise NonFiniteError(f"non-finite integrand value at {bad!r}")
    k = h * float(np.sum(_GK_WK * y))
    g = h * float(np.sum(_GK_WG * y))
    return k, abs(k - g)


def integrate(
    f: Callable, a: float, b: float, tol: Tolerance | None = None, *, vectorized: bool = False
) -> float:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over [a, b].

    The interval with the largest error estimate is bisected until the total
    estimate drops below ``max(tol.abs, tol.rel*|I|)``. ``integrate(f, b, a)``
    is exactly ``-integrate(f, a, b)``.
    """
    tol = tol or DEFAULT_TOL
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    if a > b:
        return -integrate(f, b, a, tol, vectorized=vectorized)
    k, e = _gk15(f, a, b, vectorized)
    heap = [(-e, a, b, k, 0)]
    total, err = k, e
    evaluations = 1
    max_panels = max(50, 50 * tol.max_iterations)
    while err > max(tol.abs, tol.rel * abs(total)):
        neg_e, lo, hi, kv, depth = heapq.heappop(heap)
        if depth >= MAX_QUAD_DEPTH or evaluations >= max_panels:
            raise QuadratureError(
                f"quadrature did not converge on [{a}, {b}]: error estimate {err:.3g}"
            )
        mid = 0.5 * (lo + hi)
        k1, e1 = _gk15(f, lo, mid, vectorized)
        k2, e2 = _gk15(f, mid, hi, vectorized)
        evaluations += 2
        total += k1 + k2 - kv
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, lo, mid, k1, depth + 1))
        heapq.heappush(heap, (-e2, mid, hi, k2, depth + 1))
        if err < 0:
            err = sum(-item[0] for item in heap)
    # re-sum to shed accumulated cancellation from the running total
    return float(math.fsum(item[3] for item in heap))


def integrate_batch(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    a,
    b,
    tol: Tolerance | None = None,
    *,
    max_panels: int = 4096,
    strict: bool = True,
) -> np.ndarray:
    """Integrate many integrands at once with composite GK15 and panel doubling.

    ``f(nodes, idx)`` receives nodes of shape ``(len(idx), m)`` for the batch
    members ``idx`` and returns values of the same shape. Members whose error
    estimate is above tolerance get their panel count doubled until
    ``max_panels``. Non-converged or non-finite members raise (``strict``) or
    come back as NaN.
    """
    tol = tol or DEFAULT_TOL
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    n = a.size
    a, b = a.ravel(), b.ravel()
    out = np.full(n, np.nan)
    todo = np.flatnonzero(a != b)
    out[a == b] = 0.0
    panels = 1
    while todo.size:
        lo, hi = a[todo], b[todo]
        edges = lo[:, None] + (hi - lo)[:, None] * (np.arange(panels + 1) / panels)[None, :]
        c = 0.5 * (edges[:, 1:] + edges[:, :-1])
        h = 0.5 * (edges[:, 1:] - edges[:, :-1])
        nodes = (c[:, :, None] + h[:, :, None] * _GK_NODES[None, None, :]).reshape(todo.size, -1)
        vals = np.asarray(f(nodes, todo), dtype=float).reshape(todo.size, panels, 15)
        k = np.sum(np.sum(vals * _GK_WK, axis=2) * h, axis=1)
        g = np.sum(np.sum(vals * _GK_WG, axis=2) * h, axis=1)
        err = np.abs(k - g)
        finite = np.isfinite(k)
        ok = finite & (err <= np.maximum(tol.abs, tol.rel * np.abs(k)))
        out[todo[ok]] = k[ok]
        if strict and not np.all(finite):
            raise NonFiniteError("non-finite integrand value in batch quadrature")
        todo = todo[~ok & finite]
        panels *= 2
        if todo.size and panels > max_panels:
            if strict:
                raise QuadratureError(f"batch quadrature did not converge for {todo.size} members")
            break
    return out


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# --- root finding ----------------------------------------------------------


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: Tolerance | None = None) -> float:
    """Bracketed root by bisection safeguarded secant steps.

    Every iterate stays inside the current bracket. Stops when ``|f| <= tol.abs``
    or the bracket is narrower than ``tol.abs``.
    """
    tol = tol or DEFAULT_TOL
    a, b = float(lo), float(hi)
    fa, fb = float(f(a)), float(f(b))
    if not (math.isfinite(fa) and math.isfinite(fb)):
        raise NonFiniteError("non-finite function value at bracket end")
    if abs(fa) <= tol.abs:
        return a
    if abs(fb) <= tol.abs:
        return b
    if fa * fb > 0:
        raise BracketError(f"no sign change on [{a}, {b}]: f = {fa:.3g}, {fb:.3g}")
    width = abs(b - a)
    for it in range(tol.max_iterations):
        # secant proposal; fall back to bisection when it leaves the middle
        # of the bracket or when the bracket failed to halve last time
        c = b - fb * (b - a) / (fb - fa)
        lo_, hi_ = min(a, b), max(a, b)
        margin = 1e-3 * (hi_ - lo_)
        if not (lo_ + margin < c < hi_ - margin) or it % 3 == 2:
            c = 0.5 * (a + b)
        fc = float(f(c))
        if not math.isfinite(fc):
            raise NonFiniteError(f"non-finite function value at {c!r}")
        if abs(fc) <= tol.abs:
            return c
        if fa * fc < 0:
            b, fb = c, fc
        else:
            a, fa = c, fc
        new_width = abs(b - a)
        if new_width <= tol.abs:
            return a if abs(fa) < abs(fb) else b
        width = new_width
    raise ConvergenceError(f"find_root: no convergence after {tol.max_iterations} iterations (width {width:.3g})")


def find_root_batch(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo,
    hi,
    *,
    fprime: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    x0=None,
    f_lo=None,
    f_hi=None,
    xtol: float = 1e-14,
    ftol: float = 0.0,
    max_iterations: int = 200,
    size: int | None = None,
) -> np.ndarray:
    """Vectorized safeguarded Newton (or secant) on brackets ``[lo, hi]``.

    ``f(x, idx)`` and ``fprime(x, idx)`` evaluate the members ``idx``. Members
    without a sign change, or that fail to converge, are returned as NaN.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
    hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
    shape = np.broadcast_shapes(lo.shape, hi.shape, (size,) if size else (1,))
    lo, hi = np.broadcast_to(lo, shape).ravel().copy(), np.broadcast_to(hi, shape).ravel().copy()
    n = lo.size
    idx_all = np.arange(n)
    flo = np.asarray(f(lo, idx_all) if f_lo is None else f_lo, dtype=float).copy()
    fhi = np.asarray(f(hi, idx_all) if f_hi is None else f_hi, dtype=float).copy()
    out = np.full(n, np.nan)
    hit_lo = flo == 0
    hit_hi = (fhi == 0) & ~hit_lo
    out[hit_lo] = lo[hit_lo]
    out[hit_hi] = hi[hit_hi]
    active = (np.sign(flo) * np.sign(fhi) < 0) & np.isfinite(flo) & np.isfinite(fhi)
    x = 0.5 * (lo + hi) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    x = np.where((x > np.minimum(lo, hi)) & (x < np.maximum(lo, hi)), x, 0.5 * (lo + hi))
    scale = np.maximum(np.abs(lo), np.abs(hi)) + 1.0
    for it in range(max_iterations):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi = x[idx]
        fx = np.asarray(f(xi, idx), dtype=float)
        bad = ~np.isfinite(fx)
        done = (fx == 0) | (np.abs(fx) <= ftol)
        out[idx[done]] = xi[done]
        # shrink bracket
        same_lo = np.sign(fx) == np.sign(flo[idx])
        lo_i, hi_i = lo[idx], hi[idx]
        flo_i, fhi_i = flo[idx], fhi[idx]
        lo_i = np.where(same_lo & ~bad, xi, lo_i)
        flo_i = np.where(same_lo & ~bad, fx, flo_i)
        hi_i = np.where(~same_lo & ~bad, xi, hi_i)
        fhi_i = np.where(~same_lo & ~bad, fx, fhi_i)
        # NaN inside the bracket: treat as a failed probe and bisect
        width = np.abs(hi_i - lo_i)
        narrow = width <= xtol * scale[idx]
        conv = narrow & ~done
        pick = np.where(np.abs(flo_i) < np.abs(fhi_i), lo_i, hi_i)
        out[idx[conv]] = pick[conv]
        if fprime is not None:
            fp = np.asarray(fprime(xi, idx), dtype=float)
            step = np.where((fp != 0) & np.isfinite(fp), fx / np.where(fp == 0, 1.0, fp), np.nan)
            xn = xi - step
        else:
            # regula falsi on the updated bracket
            denom = np.where(fhi_i == flo_i, np.nan, fhi_i - flo_i)
            xn = lo_i - flo_i * (hi_i - lo_i) / denom
            step = xn - xi
            if it % 3 == 2:
                xn = np.full_like(xn, np.nan)
        mn, mx = np.minimum(lo_i, hi_i), np.maximum(lo_i, hi_i)
        inside = np.isfinite(xn) & (xn > mn) & (xn < mx) & ~bad
        xn = np.where(inside, xn, 0.5 * (lo_i + hi_i))
        # converged on step size
        tiny = inside & (np.abs(step) <= xtol * scale[idx]) & ~done & ~conv & (fprime is not None)
        out[idx[tiny]] = xn[tiny]
        lo[idx], hi[idx], flo[idx], fhi[idx] = lo_i, hi_i, flo_i, fhi_i
        x[idx] = xn
        active[idx[done | conv | tiny]] = False
    return out


# --- 2-D Newton ------------------------------------------------------------


def _jacobian_fd(F, p, q, fp, fq):
    hp = 1e-7 * max(1.0, abs(p))
    hq = 1e-7 * max(1.0, abs(q))
    a1, b1 = F(p + hp, q)
    a0, b0 = F(p - hp, q)
    c1, d1 = F(p, q + hq)
    c0, d0 = F(p, q - hq)
    return np.array([[(a1 - a0) / (2 * hp), (c1 - c0) / (2 * hq)], [(b1 - b0) / (2 * hp), (d1 - d0) / (2 * hq)]])


def newton2d(
    F: Callable[[float, float], tuple[float, float]],
    guess: tuple[float, float],
    tol: Tolerance | None = None,
) -> tuple[float, float]:
    """Damped Newton for two equations in two unknowns.

    The Jacobian comes from central differences. A step that increases
    ``max|F|`` is halved (up to 40 times). Raises
    :class:`SingularJacobianError` when ``|det J|`` falls below
    ``1e-14`` times the product of the row norms.
    """
    tol = tol or DEFAULT_TOL
    p, q = map(float, guess)
    fp, fq = map(float, F(p, q))
    norm = max(abs(fp), abs(fq))
    for _ in range(tol.max_iterations):
        if not math.isfinite(norm):
            raise NonFiniteError(f"non-finite residual at {(p, q)}")
        if norm <= tol.abs:
            return float(p), float(q)
        J = _jacobian_fd(F, p, q, fp, fq)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        scale = np.linalg.norm(J[0]) * np.linalg.norm(J[1])
        if not np.isfinite(det) or abs(det) <= 1e-14 * scale or scale == 0:
            raise SingularJacobianError(f"singular Jacobian at {(p, q)} (det={det:.3g})")
        dp = (J[1, 1] * fp - J[0, 1] * fq) / det
        dq = (-J[1, 0] * fp + J[0, 0] * fq) / det
        lam = 1.0
        for _ in range(40):
            pn, qn = p - lam * dp, q - lam * dq
            fpn, fqn = map(float, F(pn, qn))
            nn = max(abs(fpn), abs(fqn))
            if math.isfinite(nn) and nn < norm:
                break
            lam *= 0.5
        else:
            raise ConvergenceError(f"newton2d: line search failed at {(p, q)}")
        p, q, fp, fq, norm = pn, qn, fpn, fqn, nn
    if norm <= tol.abs:
        return float(p), float(q)
    raise ConvergenceError(f"newton2d: no convergence after {tol.max_iterations} iterations (|F|={norm:.3g})")


def newton2d_batch(
    F: Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    p0,
    q0,
    *,
    atol: float = 1e-13,
    max_iterations: int = 60,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized damped Newton; ``F(p, q, idx)`` evaluates members ``idx``.

    Failures come back as NaN.
    """
    p = np.array(p0, dtype=float, copy=True).ravel()
    q = np.array(q0, dtype=float, copy=True).ravel()
    allidx = np.arange(p.size)
    fp, fq = (np.asarray(v, dtype=float) for v in F(p, q, allidx))
    norm = np.maximum(np.abs(fp), np.abs(fq))
    done = norm <= atol
    failed = ~np.isfinite(norm)
    for _ in range(max_iterations):
        act = ~done & ~failed
        if not act.any():
            break
        ia = np.flatnonzero(act)
        pa, qa = p[ia], q[ia]
        hp = 1e-7 * np.maximum(1.0, np.abs(pa))
        hq = 1e-7 * np.maximum(1.0, np.abs(qa))
        a1, b1 = F(pa + hp, qa, ia)
        a0, b0 = F(pa - hp, qa, ia)
        c1, d1 = F(pa, qa + hq, ia)
        c0, d0 = F(pa, qa - hq, ia)
        j00, j10 = (a1 - a0) / (2 * hp), (b1 - b0) / (2 * hp)
        j01, j11 = (c1 - c0) / (2 * hq), (d1 - d0) / (2 * hq)
        det = j00 * j11 - j01 * j10
        scale = np.hypot(j00, j01) * np.hypot(j10, j11)
        sing = ~np.isfinite(det) | (np.abs(det) <= 1e-14 * scale) | (scale == 0)
        det = np.where(sing, 1.0, det)
        dp = (j11 * fp[act] - j01 * fq[act]) / det
        dq = (-j10 * fp[act] + j00 * fq[act]) / det
        lam = np.ones_like(dp)
        accepted = np.zeros(dp.shape, bool)
        pn, qn, fpn, fqn, nn = pa.copy(), qa.copy(), fp[act].copy(), fq[act].copy(), norm[act].copy()
        for _ in range(30):
            trial = ~accepted & ~sing
            if not trial.any():
                break
            pt = pa - lam * dp
            qt = qa - lam * dq
            ft_p, ft_q = F(pt, qt, ia)
            nt = np.maximum(np.abs(ft_p), np.abs(ft_q))
            good = trial & np.isfinite(nt) & (nt < norm[act])
            pn[good], qn[good], fpn[good], fqn[good], nn[good] = pt[good], qt[good], ft_p[good], ft_q[good], nt[good]
            accepted |= good
            lam = np.where(accepted, lam, 0.5 * lam)
        p[ia], q[ia], fp[ia], fq[ia], norm[ia] = pn, qn, fpn, fqn, nn
        failed[ia[sing | ~accepted]] = True
        done = norm <= atol
        failed &= ~done
    bad = ~done
    p[bad] = np.nan
    q[bad] = np.nan
    return p, q


# --- finite differences ----------------------------------------------------


def fd_partial(field, point, axis: int, spacing: float, order: int = 1):
    """Second-order finite-difference partial derivative.

    ``field`` is either a callable ``f(*coords)`` (``point`` holds coordinates,
    arrays allowed) or a sampled ndarray (``point`` holds integer indices; the
    stencil turns one-sided at the edges). ``order`` is 1 or 2.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if callable(field):
        coords = [np.asarray(c, dtype=float) for c in point]

        def at(shift):
            c = list(coords)
            c[axis] = coords[axis] + shift * spacing
            return np.asarray(field(*c), dtype=float)

        if order == 1:
            out = (at(1) - at(-1)) / (2.0 * spacing)
        else:
            out = (at(1) - 2.0 * at(0) + at(-1)) / spacing**2
        return float(out) if np.ndim(out) == 0 else out

    arr = np.asarray(field, dtype=float)
    idx = list(point)
    n = arr.shape[axis]
    i = int(idx[axis])
    if not all(0 <= int(k) < arr.shape[d] for d, k in enumerate(idx)):
        raise DomainError(f"point {tuple(idx)} outside sampled domain {arr.shape}")
    if n < 3:
        raise DomainError("need at least 3 samples along the differentiation axis")

    def val(j):
        k = list(idx)
        k[axis] = j
        return arr[tuple(k)]

    if order == 1:
        if 0 < i < n - 1:
            return (val(i + 1) - val(i - 1)) / (2 * spacing)
        if i == 0:
            return (-3 * val(0) + 4 * val(1) - val(2)) / (2 * spacing)
        return (3 * val(n - 1) - 4 * val(n - 2) + val(n - 3)) / (2 * spacing)
    if n < 4 and not (0 < i < n - 1):
        raise DomainError("one-sided second derivative needs 4 samples")
    if 0 < i < n - 1:
        return (val(i + 1) - 2 * val(i) + val(i - 1)) / spacing**2
    if i == 0:
        return (2 * val(0) - 5 * val(1) + 4 * val(2) - val(3)) / spacing**2
    return (2 * val(n - 1) - 5 * val(n - 2) + 4 * val(n - 3) - val(n - 4)) / spacing**2


def diff_array(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    """First derivative of a sampled array along ``axis`` (central inside,
    second-order one-sided at the two ends)."""
    arr = np.asarray(arr, dtype=float)
    return np.gradient(arr, h, axis=axis, edge_order=2)


# --- ODE stepping ----------------------------------------------------------


def rk4_step(state, rhs: Callable, t: float, dt: float):
    """One classical Runge-Kutta step; ``rhs(t, state)`` must return finite values."""
    if dt == 0:
        raise ValueError("dt must be non-zero")
    y = np.asarray(state, dtype=float)

    def call(tt, yy):
        k = np.asarray(rhs(tt, yy), dtype=float)
        if not np.all(np.isfinite(k)):
            raise NonFiniteError(f"non-finite right-hand side at t={tt}")
        return k

    k1 = call(t, y)
    k2 = call(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = call(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = call(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return float(out) if np.ndim(out) == 0 else out


# --- convergence fitting ---------------------------------------------------


def fit_order(spacings: Sequence[float], norms: Sequence[float]) -> float:
    """Least-squares slope of log(norm) against log(spacing)."""
    h = np.log(np.asarray(spacings, dtype=float))
    e = np.log(np.asarray(norms, dtype=float))
    if h.size < 2 or not np.all(np.isfinite(e)):
        return float("nan")
    return float(np.polyfit(h, e, 1)[0])


def is_nested(levels: Iterable[GridSpec]) -> bool:
    levels = list(levels)
    for coarse, fine in zip(levels, levels[1:]):
        if coarse.names != fine.names:
            return False
        for a, b in zip(coarse.axes, fine.axes):
            if (a.min, a.max) != (b.min, b.max) or (b.count - 1) % (a.count - 1):
                return False
    return True
