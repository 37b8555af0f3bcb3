"""Mollifiers, primitives and the DiPerna-Lions commutator.

The kernel is the standard bump ``C exp(-1/(1 - (x/eps)^2))`` on ``|x| < eps``.
On a grid it is applied through cell-averaged weights, renormalized to unit
sum, so even ``eps = dx`` gives a non-trivial (three-point) stencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.ndimage import convolve1d

from .conservation import Grid1D, ScalarField

_NORM_TOL = 1e-12


def _bump(r):
    r = np.asarray(r, dtype=np.float64)
    inside = np.abs(r) < 1
    s = np.where(inside, 1 - r ** 2, 1.0)
    return np.where(inside, np.exp(-1 / s), 0.0)


@lru_cache(maxsize=None)
def _bump_mass() -> float:
    return integrate.quad(_bump, -1, 1, epsabs=1e-14, epsrel=1e-14)[0]


@lru_cache(maxsize=256)
def _cell_weights(ratio: float) -> np.ndarray:
    # ratio = eps / dx; weight j = int over cell j of the unit-mass kernel
    m = int(np.ceil(ratio - 0.5))
    half = []
    for j in range(m + 1):
        a = max((j - 0.5) / ratio, -1.0)
        b = min((j + 0.5) / ratio, 1.0)
        half.append(integrate.quad(_bump, a, b, epsabs=1e-15, epsrel=1e-13)[0]
                    if b > a else 0.0)
    half = np.array(half)
    w = np.concatenate((half[:0:-1], half))
    w /= w.sum()
    w = 0.5 * (w + w[::-1])
    w /= w.sum()
    return w


@dataclass(frozen=True)
class Mollifier:
    epsilon: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError("epsilon must be positive")

    def kernel(self, x):
        return _bump(np.asarray(x) / self.epsilon) / (_bump_mass() * self.epsilon)

    def weights(self, dx: float) -> np.ndarray:
        """Discrete symmetric weights on a grid of spacing ``dx``."""
        if self.epsilon < dx * (1 - 1e-12):
            raise ValueError(
                f"epsilon below grid resolution (epsilon={self.epsilon:g} < dx={dx:g})")
        w = _cell_weights(round(self.epsilon / dx, 12))
        assert abs(w.sum() - 1.0) <= _NORM_TOL
        return w


def mollify_values(values: np.ndarray, moll: Mollifier, dx: float) -> np.ndarray:
    """Convolve along the last axis; edge values are extended as constants."""
    return convolve1d(np.asarray(values, dtype=np.float64), moll.weights(dx),
                      axis=-1, mode="nearest")


def mollify(field: ScalarField, moll: Mollifier) -> ScalarField:
    return ScalarField(field.grid, field.time,
                       mollify_values(field.values, moll, field.grid.dx))


def mollify_many(fields: Sequence[ScalarField], moll: Mollifier) -> list[ScalarField]:
    grid = fields[0].grid
    smoothed = mollify_values(np.stack([f.values for f in fields]), moll, grid.dx)
    return [ScalarField(grid, f.time, row) for f, row in zip(fields, smoothed)]


# {{{ primitives

@dataclass(frozen=True)
class PrimitiveField:
    """Cumulative integral sampled at the ``n_cells + 1`` cell edges."""

    grid: Grid1D
    time: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_cells + 1,):
            raise ValueError("primitive values must live on the cell edges")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        return np.interp(x, self.grid.edges, self.values)

    def at_centers(self) -> np.ndarray:
        return 0.5 * (self.values[1:] + self.values[:-1])

    def derivative(self) -> ScalarField:
        """Edge differences; recovers the integrand exactly."""
        return ScalarField(self.grid, self.time, np.diff(self.values) / self.grid.dx)


def primitive(field: ScalarField, base: float = 0.0) -> PrimitiveField:
    """``V(x) = base + int_{x_min}^x f``, with ``base`` the mass left of the grid."""
    cums = np.concatenate(([0.0], np.cumsum(field.values) * field.grid.dx))
    return PrimitiveField(field.grid, field.time, base + cums)

# }}}


# {{{ commutator

def commutator(V: PrimitiveField, v: ScalarField, moll: Mollifier) -> ScalarField:
    r"""``R_eps(V, v) = v_eps d_x V_eps - (v d_x V)_eps``.

    ``d_x V`` is taken from the edge differences of ``V``, which is the
    stored density itself, so no second discretization enters.
    """
    if V.grid != v.grid:
        raise ValueError("V and v live on different grids")
    if not np.isclose(V.time, v.time, rtol=0, atol=1e-12):
        raise ValueError(f"time stamps differ: {V.time} vs {v.time}")
    dx = v.grid.dx
    u = np.diff(V.values) / dx
    r = (mollify_values(v.values, moll, dx) * mollify_values(u, moll, dx)
         - mollify_values(v.values * u, moll, dx))
    return ScalarField(v.grid, v.time, r)


@dataclass
class DecayTable:
    epsilons: np.ndarray
    norms: np.ndarray
    slope: float | None  # None: all norms vanish, reported as "exact"
    tol: float

    @property
    def slope_label(self) -> str:
        return "exact" if self.slope is None else repr(float(self.slope))

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.norms) < 0))

    def rows(self):
        for eps, norm in zip(self.epsilons, self.norms):
            yield float(eps), float(norm), self.slope_label


def space_time_l2(fields: Sequence[ScalarField]) -> float:
    times = np.array([f.time for f in fields])
    dx = fields[0].grid.dx
    spatial = np.array([np.sum(f.values ** 2) * dx for f in fields])
    total = np.trapezoid(spatial, times) if len(times) > 1 else spatial[0]
    return float(np.sqrt(total))


def fitted_slope(epsilons, norms) -> float:
    return float(np.polyfit(np.log(epsilons), np.log(norms), 1)[0])


def commutator_l2_decay(V_snaps: Sequence[PrimitiveField], v_snaps: Sequence[ScalarField],
                        ladder: Sequence[float], tol: float = 1e-12) -> DecayTable:
    """Space-time L2 norm of the commutator along a decreasing epsilon ladder."""
    ladder = np.asarray(ladder, dtype=np.float64)
    if ladder.size == 0:
        raise ValueError("empty epsilon ladder")
    if np.any(np.diff(ladder) >= 0):
        raise ValueError("epsilon ladder must be strictly decreasing")
    if len(V_snaps) != len(v_snaps):
        raise ValueError("V and v snapshot counts differ")
    dx = v_snaps[0].grid.dx
    if ladder[-1] < dx * (1 - 1e-12):
        raise ValueError("epsilon below grid resolution")

    norms = np.array([
        space_time_l2([commutator(V, v, Mollifier(eps)) for V, v in zip(V_snaps, v_snaps)])
        for eps in ladder])
    if np.all(norms <= tol):
        slope = None
    else:
        pos = norms > tol
        slope = fitted_slope(ladder[pos], norms[pos]) if pos.sum() >= 2 else float("nan")
    return DecayTable(ladder, norms, slope, tol)

# }}}
