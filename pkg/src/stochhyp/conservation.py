r"""
Scalar conservation law
-----------------------

Entropy solutions of

.. math::

    \partial_t v + \partial_x F(v) = 0

on a truncated interval with outflow boundaries, computed by the first-order
Godunov scheme. Also hosts the exact Burgers Riemann solution, entropy pairs
and the distributional residuals used to certify a computed solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Gauss-Legendre nodes for entropy-flux quadrature
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class BlowUpError(FloatingPointError):
    """A cell value became non-finite during time stepping."""

    def __init__(self, step: int, cell: int, time: float):
        self.step = step
        self.cell = cell
        self.time = time
        super().__init__(f"non-finite value in cell {cell} at step {step} (t={time:.6g})")


# {{{ grids and fields

@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if int(self.n_cells) != self.n_cells or self.n_cells <= 0:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def padded(self, pad: float) -> tuple["Grid1D", int]:
        """Extend by whole cells covering at least ``pad`` on both sides.

        Returns the new grid and the number of cells added on the left, so
        that ``new.centers[offset:offset + n_cells]`` are the old centers.
        """
        n_pad = int(np.ceil(pad / self.dx - 1e-12)) if pad > 0 else 0
        grid = Grid1D(self.x_min - n_pad * self.dx,
                      self.x_max + n_pad * self.dx,
                      self.n_cells + 2 * n_pad)
        return grid, n_pad


@dataclass(frozen=True)
class ScalarField:
    """Cell averages on a :class:`Grid1D` at a single time."""

    grid: Grid1D
    time: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_cells,):
            raise ValueError(
                f"values has shape {values.shape}, expected ({self.grid.n_cells},)")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid1D, fn: ArrayFn, time: float = 0.0) -> "ScalarField":
        return cls(grid, time, np.broadcast_to(fn(grid.centers), (grid.n_cells,)))

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)

    def l1(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.dx)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __call__(self, x):
        """Piecewise-linear evaluation through the cell centers."""
        return np.interp(x, self.grid.centers, self.values)

# }}}


# {{{ flux and entropy pairs

@dataclass(frozen=True)
class FluxModel:
    """A C^1 flux with its derivative (the characteristic speed).

    ``convex_min`` is the location of the global minimum when the flux is
    convex; it enables the closed-form Godunov flux. Leave it ``None`` for
    non-convex fluxes.
    """

    label: str
    F: ArrayFn
    F_prime: ArrayFn
    convex_min: float | None = None

    def check_derivative(self, a, b, tol: float = 1e-8) -> float:
        """Largest mismatch of ``F(b) - F(a)`` against the quadrature of F'."""
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        half = 0.5 * (b - a)
        s = 0.5 * (a + b)[:, None] + half[:, None] * _GL_NODES[None, :]
        integral = half * np.sum(_GL_WEIGHTS * self.F_prime(s), axis=1)
        err = float(np.max(np.abs(self.F(b) - self.F(a) - integral)))
        if err > tol:
            raise ValueError(f"F_prime is not the derivative of F (mismatch {err:.3g})")
        return err


def burgers_flux() -> FluxModel:
    return FluxModel("burgers", lambda v: 0.5 * np.asarray(v) ** 2,
                     lambda v: np.asarray(v, dtype=np.float64), convex_min=0.0)


def linear_flux(a: float) -> FluxModel:
    a = float(a)
    return FluxModel(f"linear({a:g})", lambda v: a * np.asarray(v),
                     lambda v: np.full_like(np.asarray(v, dtype=np.float64), a),
                     convex_min=None)


def buckley_leverett_flux(m: float = 0.5) -> FluxModel:
    """Non-convex S-shaped flux ``v^2 / (v^2 + m (1 - v)^2)``."""
    def F(v):
        v = np.asarray(v, dtype=np.float64)
        return v ** 2 / (v ** 2 + m * (1 - v) ** 2)

    def F_prime(v):
        v = np.asarray(v, dtype=np.float64)
        d = v ** 2 + m * (1 - v) ** 2
        return 2 * m * v * (1 - v) / d ** 2

    return FluxModel("buckley_leverett", F, F_prime)


FLUXES: dict[str, Callable[[], FluxModel]] = {
    "burgers": burgers_flux,
    "buckley_leverett": buckley_leverett_flux,
}


def flux_from_label(label: str) -> FluxModel:
    if label.startswith("linear(") and label.endswith(")"):
        return linear_flux(float(label[7:-1]))
    try:
        return FLUXES[label]()
    except KeyError:
        raise ValueError(f"unknown flux '{label}'") from None


@dataclass(frozen=True)
class EntropyPair:
    label: str
    eta: ArrayFn
    q: ArrayFn
    eta_prime: ArrayFn


def _entropy_flux(eta_prime: ArrayFn, flux: FluxModel, k: float) -> ArrayFn:
    # q(v) = int_k^v eta'(s) F'(s) ds
    def q(v):
        v = np.asarray(v, dtype=np.float64)
        flat = np.atleast_1d(v).ravel()
        half = 0.5 * (flat - k)
        s = 0.5 * (flat + k)[:, None] + half[:, None] * _GL_NODES[None, :]
        out = half * np.sum(_GL_WEIGHTS * eta_prime(s) * flux.F_prime(s), axis=1)
        return out.reshape(v.shape) if v.ndim else out[0]
    return q


def kruzkov_pair(k: float, flux: FluxModel, delta: float) -> EntropyPair:
    """Smoothed Kruzkov entropy ``sqrt((v - k)^2 + delta^2)`` and its flux."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    k = float(k)

    def eta(v):
        return np.hypot(np.asarray(v, dtype=np.float64) - k, delta)

    def eta_prime(v):
        y = np.asarray(v, dtype=np.float64) - k
        return y / np.hypot(y, delta)

    if flux.label == "burgers":
        r0 = delta

        def q(v):
            y = np.asarray(v, dtype=np.float64) - k
            r = np.hypot(y, delta)
            return 0.5 * (y * r - delta ** 2 * np.arcsinh(y / delta)) + k * (r - r0)
    else:
        q = _entropy_flux(eta_prime, flux, k)

    return EntropyPair(f"kruzkov(k={k:g})", eta, q, eta_prime)


def quadratic_pair(flux: FluxModel) -> EntropyPair:
    return EntropyPair("quadratic", lambda v: 0.5 * np.asarray(v) ** 2,
                       _entropy_flux(lambda s: s, flux, 0.0),
                       lambda v: np.asarray(v, dtype=np.float64))


def check_entropy_pair(pair: EntropyPair, flux: FluxModel, lo: float, hi: float,
                       n: int = 201, tol: float = 1e-6) -> None:
    """Raise unless q' = eta' F' and eta is convex on ``[lo, hi]``."""
    v = np.linspace(lo, hi, n)
    h = 1e-5 * max(1.0, hi - lo)
    dq = (pair.q(v + h) - pair.q(v - h)) / (2 * h)
    mismatch = np.max(np.abs(dq - pair.eta_prime(v) * flux.F_prime(v)))
    if mismatch > tol:
        raise ValueError(f"{pair.label}: q' != eta' F' (mismatch {mismatch:.3g})")
    h2 = 1e-3 * max(1.0, hi - lo)
    d2 = (pair.eta(v + h2) - 2 * pair.eta(v) + pair.eta(v - h2)) / h2 ** 2
    if np.min(d2) < -tol:
        raise ValueError(f"{pair.label}: entropy is not convex")

# }}}


# {{{ test functions

@dataclass(frozen=True)
class TestFunction:
    """Smooth bump ``exp(1 - 1/(1 - r^2))``, ``r = (x - center)/width``.

    Peak value 1, support ``[center - width, center + width]``.
    """

    __test__ = False  # not a pytest class

    center: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("width must be positive")

    def _parts(self, x):
        r = (np.asarray(x, dtype=np.float64) - self.center) / self.width
        inside = np.abs(r) < 1
        s = np.where(inside, 1 - r ** 2, 1.0)
        g = np.where(inside, np.exp(1 - 1 / s), 0.0)
        return r, s, g, inside

    def evaluate(self, x):
        return self._parts(x)[2]

    __call__ = evaluate

    def d1(self, x):
        r, s, g, inside = self._parts(x)
        return np.where(inside, g * (-2 * r / s ** 2) / self.width, 0.0)

    def d2(self, x):
        r, s, g, inside = self._parts(x)
        h1 = -2 * r / s ** 2
        h2 = -(2 + 6 * r ** 2) / s ** 3
        return np.where(inside, g * (h1 ** 2 + h2) / self.width ** 2, 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width, self.center + self.width


def _check_inside(phi: TestFunction, grid: Grid1D) -> None:
    lo, hi = phi.support
    if lo <= grid.x_min + grid.dx or hi >= grid.x_max - grid.dx:
        raise ValueError(
            f"test function support [{lo:g}, {hi:g}] touches the boundary "
            f"of [{grid.x_min:g}, {grid.x_max:g}]")

# }}}


# {{{ Riemann problem

def riemann_exact_burgers(vL: float, vR: float, t: float, x, x0: float = 0.0):
    """Entropy solution of the Burgers Riemann problem with jump at ``x0``."""
    vals = np.asarray([vL, vR, t], dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite input")
    if t <= 0:
        raise ValueError("t must be positive")

    xi = (x - x0) / t
    if vL > vR:
        s = 0.5 * (vL + vR)
        out = np.where(xi < s, vL, vR)
    elif vL < vR:
        out = np.clip(xi, vL, vR)
    else:
        out = np.full_like(xi, vL)
    return out if out.ndim else float(out)

# }}}


# {{{ Godunov scheme

def _extremum_sampled(F: ArrayFn, lo, hi, find_max, n_samples: int = 129,
                      n_refine: int = 40):
    lo = np.atleast_1d(lo)
    hi = np.atleast_1d(hi)
    theta = np.linspace(0.0, 1.0, n_samples)
    s = lo[:, None] + (hi - lo)[:, None] * theta[None, :]
    f = F(s)
    sign = -1.0 if find_max else 1.0
    idx = np.argmin(sign * f, axis=1)
    step = (hi - lo) / (n_samples - 1)
    a = np.maximum(lo, lo + (idx - 1) * step)
    b = np.minimum(hi, lo + (idx + 1) * step)
    # golden-section refinement in the bracketing sample interval
    g = 0.5 * (np.sqrt(5.0) - 1.0)
    for _ in range(n_refine):
        c = b - g * (b - a)
        d = a + g * (b - a)
        left = sign * F(c) < sign * F(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    candidates = np.stack([f[np.arange(len(lo)), idx], F(0.5 * (a + b))])
    return candidates.max(axis=0) if find_max else candidates.min(axis=0)


def godunov_flux(vL, vR, flux: FluxModel):
    """Exact Godunov numerical flux at an interface.

    ``min F`` over ``[vL, vR]`` when ``vL <= vR``, ``max F`` over ``[vR, vL]``
    otherwise.
    """
    vL_a = np.asarray(vL, dtype=np.float64)
    vR_a = np.asarray(vR, dtype=np.float64)
    if not (np.all(np.isfinite(vL_a)) and np.all(np.isfinite(vR_a))):
        raise ValueError("non-finite states")
    scalar = vL_a.ndim == 0 and vR_a.ndim == 0
    vL_a, vR_a = np.broadcast_arrays(np.atleast_1d(vL_a), np.atleast_1d(vR_a))

    if flux.convex_min is not None:
        m = flux.convex_min
        fmin = flux.F(np.clip(m, vL_a, vR_a))
        fmax = np.maximum(flux.F(vL_a), flux.F(vR_a))
        out = np.where(vL_a <= vR_a, fmin, fmax)
    else:
        rising = vL_a <= vR_a
        lo = np.minimum(vL_a, vR_a)
        hi = np.maximum(vL_a, vR_a)
        out = np.empty_like(vL_a)
        if np.any(rising):
            out[rising] = _extremum_sampled(flux.F, lo[rising], hi[rising], False)
        if np.any(~rising):
            out[~rising] = _extremum_sampled(flux.F, lo[~rising], hi[~rising], True)
    return float(out[0]) if scalar else out


def _max_speed(flux: FluxModel, v: np.ndarray) -> float:
    if flux.convex_min is not None:
        # F' is monotone for convex F, extremes at the data range
        lo, hi = v.min(), v.max()
        return float(np.max(np.abs(flux.F_prime(np.array([lo, hi])))))
    lo, hi = v.min(), v.max()
    s = np.linspace(lo, hi, 257)
    return float(np.max(np.abs(flux.F_prime(s))))


def evolve_conservation_law(v0: ScalarField, flux: FluxModel, t_end: float,
                            cfl: float = 0.5, record_every: int = 1,
                            max_speed: float | None = None) -> list[ScalarField]:
    """March the Godunov scheme from ``v0`` to ``t_end``.

    Returns the initial field followed by every ``record_every``-th step;
    the final state at ``t_end`` is always included. Boundaries are outflow
    (ghost cells copy the edge values). ``max_speed`` fixes the speed bound
    used for the step size, so two runs can share one step sequence; it must
    dominate the data's characteristic speeds.
    """
    if not 0 < cfl <= 0.9:
        raise ValueError(f"cfl must lie in (0, 0.9], got {cfl}")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    grid = v0.grid
    dx = grid.dx
    v = np.array(v0.values)
    t = float(v0.time)
    t_stop = t + t_end
    snapshots = [v0]
    step = 0
    while t < t_stop - 1e-14 * max(1.0, t_stop):
        speed = _max_speed(flux, v)
        if max_speed is not None:
            if speed > max_speed * (1 + 1e-12):
                raise ValueError(f"max_speed={max_speed:g} below the data's speed {speed:g}")
            speed = max_speed
        dt = cfl * dx / speed if speed > 0 else t_stop - t
        dt = min(dt, t_stop - t)

        ext = np.concatenate(([v[0]], v, [v[-1]]))
        fhat = godunov_flux(ext[:-1], ext[1:], flux)
        v = v - dt / dx * (fhat[1:] - fhat[:-1])
        step += 1
        t = t_stop if t_stop - (t + dt) <= 1e-14 * max(1.0, t_stop) else t + dt

        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise BlowUpError(step, int(bad[0]), t)
        if step % record_every == 0 or t >= t_stop:
            snapshots.append(ScalarField(grid, t, v.copy()))
    return snapshots


def snapshot_arrays(snapshots: Sequence[ScalarField]) -> tuple[np.ndarray, np.ndarray]:
    """Stack snapshots into ``(times, values[n_times, n_cells])``."""
    times = np.array([s.time for s in snapshots])
    values = np.stack([s.values for s in snapshots])
    return times, values

# }}}


# {{{ residuals

def _trapezoid(y, x):
    return float(np.trapezoid(y, x)) if len(x) > 1 else 0.0


def entropy_residual(snapshots: Sequence[ScalarField], pair: EntropyPair,
                     phi: TestFunction, phi_time: TestFunction) -> float:
    r"""Distributional entropy residual

    .. math::

        R = \int\!\!\int \eta(v) \partial_t(\varphi w) + q(v) \partial_x(\varphi w)
            \,dx\,dt,

    with ``w = phi_time``. For an entropy solution ``R >= 0`` up to quadrature
    error.
    """
    grid = snapshots[0].grid
    _check_inside(phi, grid)
    times, values = snapshot_arrays(snapshots)
    t_lo, t_hi = phi_time.support
    if t_lo < times[0] or t_hi > times[-1]:
        raise ValueError("time window support must lie inside the simulated interval")

    x = grid.centers
    w = phi_time(times)
    dw = phi_time.d1(times)
    space_eta = np.sum(pair.eta(values) * phi(x), axis=1) * grid.dx
    space_q = np.sum(pair.q(values) * phi.d1(x), axis=1) * grid.dx
    return _trapezoid(space_eta * dw + space_q * w, times)


def weak_form_residual(snapshots: Sequence[ScalarField], flux: FluxModel,
                       phi: TestFunction, phi_time: TestFunction) -> float:
    """Weak-solution residual (entropy residual with ``eta = id``, ``q = F``).

    Signed; vanishes up to quadrature error for any weak solution.
    """
    ident = EntropyPair("identity", lambda v: np.asarray(v), flux.F,
                        lambda v: np.ones_like(np.asarray(v, dtype=np.float64)))
    return entropy_residual(snapshots, ident, phi, phi_time)

# }}}
