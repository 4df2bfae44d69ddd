"""Characteristics of the kinetic equation -G_t + lam G_x - H_xx G_lam = 0.

Along dx/dt = -lam, dlam/dt = H_xx(t, x) the distribution function is
constant. Samples carry the value of G they were emitted with and are pushed
with classical RK4.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .families import DistributionG, LambdaFamily
from .numerics import GridSpec, NonFiniteError, fit_order, rk4_step
from .verifier import ResidualEntry, ResidualReport

__all__ = [
    "CharState",
    "TransportError",
    "advect",
    "emit",
    "conservation_check",
    "conservation_order",
    "trajectory",
    "write_trajectory_csv",
    "MAX_STEPS",
]

MAX_STEPS = 10**6
DROP_LIMIT = 0.2


class TransportError(RuntimeError):
    pass


@dataclass
class CharState:
    """Samples (x, lam, g_value) at a common time; ``ids`` track emission order."""

    x: np.ndarray
    lam: np.ndarray
    g_value: np.ndarray
    time: float
    ids: Optional[np.ndarray] = None
    dropped: int = 0

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        self.g_value = np.atleast_1d(np.asarray(self.g_value, dtype=float))
        if not (self.x.shape == self.lam.shape == self.g_value.shape):
            raise ValueError("x, lam and g_value must have the same shape")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.lam))):
            raise ValueError("sample coordinates must be finite")
        if self.ids is None:
            self.ids = np.arange(self.x.size)

    @property
    def size(self) -> int:
        return self.x.size

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [(self.time, a, b, c) for a, b, c in zip(self.x, self.lam, self.g_value)]


def advect(
    state: CharState,
    Hxx: Callable,
    t_target: float,
    dt: float,
    box: tuple[float, float] = (-np.inf, np.inf),
) -> CharState:
    """RK4 along dx/dt = -lam, dlam/dt = H_xx(t, x) up to ``t_target``.

    ``dt`` is a magnitude; the direction follows ``t_target - state.time``.
    Samples leaving the x-box are dropped and counted.
    """
    span = float(t_target) - state.time
    if dt <= 0:
        raise ValueError("dt must be > 0")
    nsteps = int(round(abs(span) / dt))
    if span != 0 and nsteps == 0:
        nsteps = 1
    if nsteps > MAX_STEPS:
        raise ValueError(f"{nsteps} steps exceed the limit of {MAX_STEPS}")
    if nsteps and abs(abs(span) / nsteps - dt) > 1e-9 * dt and abs(span) > dt:
        raise ValueError("dt must divide the time span")
    h = span / nsteps if nsteps else 0.0
    Y = np.stack([state.x, state.lam])
    ids = state.ids.copy()
    g = state.g_value.copy()
    dropped = state.dropped

    def rhs(t, y):
        f = np.asarray(Hxx(t, y[0]), dtype=float) * np.ones_like(y[0])
        if not np.all(np.isfinite(f)):
            raise NonFiniteError(f"non-finite H_xx at t = {t}")
        return np.stack([-y[1], f])

    t = state.time
    for k in range(nsteps):
        Y = rk4_step(Y, rhs, t, h)
        t = state.time + (k + 1) * h
        inside = (Y[0] >= box[0]) & (Y[0] <= box[1])
        if not inside.all():
            dropped += int((~inside).sum())
            Y, ids, g = Y[:, inside], ids[inside], g[inside]
    return CharState(Y[0], Y[1], g, float(t_target), ids, dropped)


def trajectory(
    state: CharState,
    Hxx: Callable,
    t_target: float,
    dt: float,
    snapshots: int = 10,
    box: tuple[float, float] = (-np.inf, np.inf),
) -> list[CharState]:
    """States at the start, at about ``snapshots`` intermediate times and at ``t_target``."""
    span = float(t_target) - state.time
    nsteps = max(1, int(round(abs(span) / dt)))
    h = span / nsteps
    every = max(1, nsteps // max(1, snapshots))
    out = [state]
    done = 0
    while done < nsteps:
        k = min(every, nsteps - done)
        done += k
        t_next = float(t_target) if done == nsteps else state.time + done * h
        out.append(advect(out[-1], Hxx, t_next, abs(h), box))
    return out


def write_trajectory_csv(states: Sequence[CharState], path: str | Path) -> None:
    """One row per sample and state: t, x, lam, g_value, id (shortest round-trip floats)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "x", "lam", "g_value", "id"))
        for s in states:
            for (t, x, lam, g), i in zip(s.rows(), s.ids):
                w.writerow((repr(float(t)), repr(float(x)), repr(float(lam)), repr(float(g)), int(i)))


def emit(G: DistributionG, seeds: GridSpec, t0: float, family: LambdaFamily | None = None) -> CharState:
    """Samples on a (x, lam) seed grid, or (x, g) with lam = family(t0, x, g)."""
    X, C = seeds.mesh()
    X, C = X.ravel(), C.ravel()
    lam = family.lam(t0 + 0 * X, X, C) if "g" in seeds.names else C
    gv = np.asarray(G(t0 + 0 * X, X, lam), dtype=float)
    keep = np.isfinite(gv)
    return CharState(X[keep], np.asarray(lam)[keep], gv[keep], float(t0))


def conservation_check(
    G: DistributionG,
    Hxx: Callable,
    seeds: GridSpec,
    t0: float,
    t1: float,
    dt: float,
    *,
    family: LambdaFamily | None = None,
    box: tuple[float, float] = (-np.inf, np.inf),
) -> ResidualReport:
    """max |G(t1, x(t1), lam(t1)) - G(t0, x0, lam0)| over the surviving seeds."""
    s0 = emit(G, seeds, t0, family)
    n0 = s0.size
    s1 = advect(s0, Hxx, t1, dt, box)
    g1 = np.asarray(G(t1 + 0 * s1.x, s1.x, s1.lam), dtype=float)
    lost = int(np.sum(~np.isfinite(g1))) + s1.dropped
    if n0 == 0 or lost / n0 > DROP_LIMIT:
        raise TransportError(f"{lost} of {n0} samples dropped (limit {DROP_LIMIT:.0%})")
    rep = ResidualReport()
    e = rep.add("conservation", g1 - s1.g_value, extra_masked=s1.dropped)
    e.dt = dt
    return rep


def conservation_order(
    G: DistributionG,
    Hxx: Callable,
    seeds: GridSpec,
    t0: float,
    t1: float,
    dts: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    *,
    floor: float = 1e-9,
    family: LambdaFamily | None = None,
    box: tuple[float, float] = (-np.inf, np.inf),
) -> ResidualReport:
    """Deviation against dt; order fitted on the levels above ``floor``.

    All levels at or below the floor count as exact (RK4 integrates polynomial
    trajectories without truncation error).
    """
    dts = list(dts)
    if len(dts) < 2:
        raise ValueError("need at least two dt levels to fit an order")
    devs = [conservation_check(G, Hxx, seeds, t0, t1, d, family=family, box=box)["conservation"].linf for d in dts]
    e = ResidualEntry("conservation", devs[-1], float("nan"), 0, 0)
    e.convergence = list(zip(dts, devs))
    above = [(d, v) for d, v in zip(dts, devs) if v > floor]
    if not above:
        e.status = "exact"
    elif len(above) < 2:
        e.status = "floor"
        e.order = None
        # finest levels already at the floor; the coarse level alone cannot fit
    else:
        d, v = zip(*above)
        slope = fit_order(d, v)
        mono = all(b < a for a, b in zip(v, v[1:]))
        e.raw_slope = slope
        e.order = slope if mono else None
        e.status = "fitted" if mono else "non-monotone"
    rep = ResidualReport()
    rep.entries["conservation"] = e
    return rep
