"""Brownian paths and stochastic characteristics.

The characteristics of the regularized continuity equation solve

    dX_t = v_eps(t, X_t) dt + dB_t,    X_0 = x0,

integrated here by Euler-Maruyama. The noise is additive, so the Ito and
Stratonovich readings coincide and no correction term appears.

Brownian increments come from numpy's Philox generator (a counter-based
generator); every path has its own key derived from ``(base_seed, index)`` so
any subset of an ensemble can be regenerated independently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conservation import ScalarField, snapshot_arrays


class FlowExitError(RuntimeError):
    def __init__(self, path: int, time: float, position: float):
        self.path = path
        self.time = time
        self.position = position
        super().__init__(
            f"trajectory of path {path} left the padded domain at t={time:.6g} "
            f"(x={position:.6g})")


class NonMonotoneFlowError(RuntimeError):
    """Forward flow lost monotonicity; the time step is too large for the drift."""


# {{{ Brownian paths

@dataclass(frozen=True)
class BrownianPath:
    seed: int
    dt: float
    n_steps: int
    increments: np.ndarray = field(repr=False)

    def __post_init__(self):
        inc = np.array(self.increments, dtype=np.float64)
        if inc.shape != (self.n_steps,):
            raise ValueError("increments must have length n_steps")
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def values(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def coarsen(self, factor: int) -> "BrownianPath":
        """Same path on a grid ``factor`` times coarser."""
        if self.n_steps % factor:
            raise ValueError("n_steps must be divisible by factor")
        inc = self.increments.reshape(-1, factor).sum(axis=1)
        return BrownianPath(self.seed, self.dt * factor, self.n_steps // factor, inc)


def path_seed(base_seed: int, index: int) -> int:
    """64-bit per-path key, independent of how the ensemble is split up."""
    ss = np.random.SeedSequence([int(base_seed) & (2 ** 64 - 1), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_brownian(seed: int, dt: float, n_steps: int) -> BrownianPath:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    inc = rng.standard_normal(n_steps) * np.sqrt(dt)
    return BrownianPath(int(seed), float(dt), int(n_steps), inc)


def zero_path(dt: float, n_steps: int) -> BrownianPath:
    """B = 0, the deterministic baseline."""
    return BrownianPath(-1, float(dt), int(n_steps), np.zeros(n_steps))


def sample_ensemble(base_seed: int, n_paths: int, dt: float, n_steps: int) -> list[BrownianPath]:
    return [sample_brownian(path_seed(base_seed, i), dt, n_steps) for i in range(n_paths)]

# }}}


# {{{ drift

class Drift:
    """Drift from solver snapshots: linear in x, piecewise constant in t.

    Outside the snapshot grid the drift continues as the edge value (the
    same outflow extension the solver uses) and its derivative vanishes.
    """

    def __init__(self, snapshots: Sequence[ScalarField]):
        if not snapshots:
            raise ValueError("no drift snapshots")
        self.grid = snapshots[0].grid
        self.times, self.values = snapshot_arrays(snapshots)
        self.x = self.grid.centers
        if self.grid.n_cells > 1:
            self.gradient = np.gradient(self.values, self.grid.dx, axis=1)
        else:
            self.gradient = np.zeros_like(self.values)

    @classmethod
    def wrap(cls, v) -> "Drift":
        return v if isinstance(v, Drift) else cls(v)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def index(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
        return max(k, 0)

    def __call__(self, k: int, x):
        return np.interp(x, self.x, self.values[k])

    def derivative(self, k: int, x):
        return np.interp(x, self.x, self.gradient[k], left=0.0, right=0.0)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

# }}}


# {{{ flows

@dataclass(frozen=True)
class FlowRealization:
    """One path's forward flow sampled at ``times``.

    ``forward[j, i]`` is ``phi(times[j], start_points[i])``; ``jacobian`` is the
    derivative of the flow in ``x0`` from the exponential formula. The inverse
    fields are filled by :func:`invert_flow`.
    """

    seed: int
    start_points: np.ndarray
    times: np.ndarray
    step_indices: np.ndarray
    forward: np.ndarray
    jacobian: np.ndarray | None = None
    target_points: np.ndarray | None = None
    inverse: np.ndarray | None = None
    clamped: np.ndarray | None = None

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[j], t, rtol=0, atol=1e-9 * max(1.0, abs(t))):
            raise ValueError(f"flow was not recorded at t={t}")
        return j


def default_domain(starts, drift: Drift, t_end: float) -> tuple[float, float]:
    """Start range padded by ``6 sqrt(T)`` plus the largest drift excursion."""
    pad = 6.0 * np.sqrt(t_end) + drift.sup() * t_end
    return float(np.min(starts) - pad), float(np.max(starts) + pad)


def _record_steps(n_steps: int, dt: float, record) -> np.ndarray:
    if record is None or (isinstance(record, str) and record == "all"):
        return np.arange(n_steps + 1)
    steps = np.unique(np.rint(np.asarray(record, dtype=np.float64) / dt).astype(int))
    if steps.min() < 0 or steps.max() > n_steps:
        raise ValueError("record times outside the path")
    return steps


def _integrate(drift: Drift, increments: np.ndarray, dt: float, starts: np.ndarray,
               steps: np.ndarray, domain, with_jacobian: bool = True):
    """Euler-Maruyama for a batch of paths sharing one drift.

    ``increments`` has shape ``(n_paths, n_steps)``; results have shape
    ``(n_paths, len(steps), n_starts)``. Every operation is elementwise
    across paths, so batching does not change any path's bits.
    """
    n_paths, n_steps = increments.shape
    X = np.broadcast_to(np.asarray(starts, dtype=np.float64), (n_paths, len(starts))).copy()
    log_j = np.zeros_like(X)
    fwd = np.empty((n_paths, len(steps)) + X.shape[1:])
    jac = np.empty_like(fwd) if with_jacobian else None
    lo, hi = domain

    slot = 0
    if steps[0] == 0:
        fwd[:, 0] = X
        if with_jacobian:
            jac[:, 0] = 1.0
        slot = 1
    for k in range(n_steps):
        kk = drift.index(k * dt)
        if with_jacobian:
            log_j += dt * drift.derivative(kk, X)
        X = X + drift(kk, X) * dt + increments[:, k, None]
        out = (X < lo) | (X > hi)
        if out.any():
            p, i = np.argwhere(out)[0]
            raise FlowExitError(int(p), (k + 1) * dt, float(X[p, i]))
        if slot < len(steps) and steps[slot] == k + 1:
            fwd[:, slot] = X
            if with_jacobian:
                jac[:, slot] = np.exp(log_j)
            slot += 1
    return fwd, jac


def _check_paths(paths: Sequence) -> tuple[float, int]:
    dt, n = paths[0].dt, paths[0].n_steps
    if any(p.dt != dt or p.n_steps != n for p in paths):
        raise ValueError("paths in an ensemble must share dt and n_steps")
    return dt, n


def solve_flow_ensemble(v_eps, paths: Sequence[BrownianPath], starts, record=None,
                        domain=None, with_jacobian: bool = True) -> list[FlowRealization]:
    """Forward flows for several paths in one vectorized sweep."""
    drift = Drift.wrap(v_eps)
    dt, n_steps = _check_paths(paths)
    if n_steps * dt > drift.t_end + 1e-9 and len(drift.times) > 1:
        raise ValueError("drift snapshots do not cover the path")
    starts = np.asarray(starts, dtype=np.float64)
    lo_grid, hi_grid = drift.grid.x_min, drift.grid.x_max
    if domain is None:
        domain = default_domain(np.concatenate((starts, [lo_grid, hi_grid])), drift, n_steps * dt)
    if starts.min() < domain[0] or starts.max() > domain[1]:
        raise ValueError("start points outside the flow domain")
    steps = _record_steps(n_steps, dt, record)
    inc = np.stack([p.increments for p in paths]) if n_steps else np.zeros((len(paths), 0))
    fwd, jac = _integrate(drift, inc, dt, starts, steps, domain, with_jacobian)
    times = steps * dt
    return [FlowRealization(p.seed, starts, times, steps, fwd[i],
                            None if jac is None else jac[i])
            for i, p in enumerate(paths)]


def solve_flow_sde(v_eps, path: BrownianPath, starts, record=None, domain=None,
                   with_jacobian: bool = True) -> FlowRealization:
    """Forward flow ``phi(t, x0)`` of one path at the recorded times."""
    return solve_flow_ensemble(v_eps, [path], starts, record, domain, with_jacobian)[0]


def jacobian_exponential(v_eps, flow: FlowRealization, dt: float) -> np.ndarray:
    """``exp(int_0^t d_x v_eps(s, X_s) ds)`` from a fully recorded trajectory.

    Left-endpoint quadrature in time, matching the inline computation of
    :func:`solve_flow_sde`.
    """
    drift = Drift.wrap(v_eps)
    steps = flow.step_indices
    if not np.array_equal(steps, np.arange(len(steps))):
        raise ValueError("jacobian_exponential needs the trajectory at every step")
    log_j = np.zeros_like(flow.forward[0])
    out = np.empty_like(flow.forward)
    out[0] = 1.0
    for k in range(len(steps) - 1):
        log_j += dt * drift.derivative(drift.index(k * dt), flow.forward[k])
        out[k + 1] = np.exp(log_j)
    return out


def invert_flow(flow: FlowRealization, target) -> FlowRealization:
    """Inverse flow ``psi(t, x)`` on ``target`` by monotone interpolation.

    Targets outside the image of the start points are clamped to the end of
    the start range and flagged in ``clamped``.
    """
    target = np.asarray(target, dtype=np.float64)
    x0 = flow.start_points
    inv = np.empty((len(flow.times), len(target)))
    clamped = np.zeros(inv.shape, dtype=bool)
    for j, phi in enumerate(flow.forward):
        if np.any(np.diff(phi) < 0):
            bad = int(np.flatnonzero(np.diff(phi) < 0)[0])
            raise NonMonotoneFlowError(
                f"forward flow decreases between starts {bad} and {bad + 1} "
                f"at t={flow.times[j]:.6g}; reduce dt")
        inv[j] = np.interp(target, phi, x0)
        clamped[j] = (target < phi[0]) | (target > phi[-1])
    return dataclasses.replace(flow, target_points=target, inverse=inv, clamped=clamped)

# }}}


# {{{ stochastic exponential

def stochastic_exponential_samples(v_eps, paths: Sequence[BrownianPath], t: float,
                                   x0: float = 0.0) -> np.ndarray:
    r"""Per-path ``exp(int v_eps(s, X_s) dB_s - 1/2 int v_eps^2 ds)`` up to ``t``.

    The stochastic integral uses left endpoints (Ito), which makes the
    discrete product an exact martingale.
    """
    drift = Drift.wrap(v_eps)
    dt, n_steps = _check_paths(paths)
    n_t = int(round(t / dt))
    if not 0 <= n_t <= n_steps:
        raise ValueError("t outside the paths")
    X = np.full(len(paths), float(x0))
    ito = np.zeros(len(paths))
    quad = np.zeros(len(paths))
    inc = np.stack([p.increments[:n_t] for p in paths]) if n_t else np.zeros((len(paths), 0))
    for k in range(n_t):
        kk = drift.index(k * dt)
        vx = drift(kk, X)
        ito += vx * inc[:, k]
        quad += vx * vx * dt
        X = X + vx * dt + inc[:, k]
    return np.exp(ito - 0.5 * quad)


def stochastic_exponential_mean(v_eps, paths: Sequence[BrownianPath], t: float,
                                x0: float = 0.0) -> tuple[float, float]:
    """Monte Carlo mean of the stochastic exponential and its standard error."""
    if len(paths) < 100:
        raise ValueError("need at least 100 paths")
    samples = stochastic_exponential_samples(v_eps, paths, t, x0)
    return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(len(samples)))

# }}}
