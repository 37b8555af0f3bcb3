"""Density transported by the stochastic characteristics.

Two independent routes to ``u`` per Brownian path:

* :func:`pushforward_density` applies the representation
  ``u(t, x) = u0(psi_t(x)) J psi_t(x)`` through the computed flow;
* :func:`evolve_continuity_fv` solves the continuity equation by upwind
  finite volumes in the frame moving with ``B_t`` and shifts back exactly.

Their agreement, mass conservation, the Ito weak residual and the ensemble
second moment are the diagnostics built on top.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conservation import Grid1D, ScalarField, TestFunction, _check_inside
from .flow import BrownianPath, Drift, FlowRealization, NonMonotoneFlowError


class CFLViolation(RuntimeError):
    pass


# {{{ pushforward

def _inverse_at(flow: FlowRealization, j: int, target: np.ndarray):
    phi = flow.forward[j]
    if np.any(np.diff(phi) < 0):
        raise NonMonotoneFlowError(f"forward flow is not monotone at t={flow.times[j]:.6g}")
    psi = np.interp(target, phi, flow.start_points)
    clamped = (target < phi[0]) | (target > phi[-1])
    return psi, clamped


def pushforward_density(u0_eps: ScalarField, flow: FlowRealization, t: float,
                        method: str = "conservative", mass_tol: float = 1e-3) -> ScalarField:
    """Transport ``u0_eps`` by the flow to time ``t``.

    ``method="conservative"`` returns exact cell averages of
    ``u0(psi) J psi`` by differencing ``M0(psi(x))`` over each cell, where
    ``M0`` is the primitive of ``u0``; mass is preserved to round-off even
    when the flow concentrates below grid scale. ``method="pointwise"``
    samples ``u0(psi(x)) / J phi(psi(x))`` at cell centers.
    """
    grid = u0_eps.grid
    j = flow.time_index(t)
    if method == "conservative":
        edges = grid.edges
        psi, clamped = _inverse_at(flow, j, edges)
        cums = np.concatenate(([0.0], np.cumsum(u0_eps.values) * grid.dx))
        m0 = np.interp(psi, edges, cums)
        values = np.diff(m0) / grid.dx
        flagged = clamped[:-1] | clamped[1:]
    elif method == "pointwise":
        if flow.jacobian is None:
            raise ValueError("pointwise pushforward needs the flow Jacobian")
        x = grid.centers
        psi, flagged = _inverse_at(flow, j, x)
        jac = np.interp(psi, flow.start_points, flow.jacobian[j])
        values = u0_eps(psi) / jac
        values = np.where((psi < x[0]) | (psi > x[-1]), 0.0, values)
    else:
        raise ValueError(f"unknown method '{method}'")

    flagged_mass = np.sum(np.abs(values[flagged])) * grid.dx
    scale = max(u0_eps.l1(), np.finfo(float).tiny)
    if flagged_mass > mass_tol * scale:
        raise ValueError(
            f"{flagged_mass:.3g} of mass sits in cells outside the flow image")
    return ScalarField(grid, float(flow.times[j]), values)

# }}}


# {{{ finite volume cross-check

def shift_cell_averages(w: np.ndarray, shift: np.ndarray, dx: float) -> np.ndarray:
    """Cell averages of ``w(x - shift)`` for piecewise-constant ``w``.

    ``w`` has shape ``(n_paths, n_cells)`` and ``shift`` one entry per path.
    Mass moved past the ends of the grid is dropped.
    """
    n_paths, n = w.shape
    s = shift / dx
    whole = np.floor(s).astype(int)
    theta = (s - whole)[:, None]
    idx = np.arange(n)[None, :] - whole[:, None]
    padded = np.concatenate((np.zeros((n_paths, 1)), w, np.zeros((n_paths, 1))), axis=1)

    def take(i):
        i = np.clip(i + 1, 0, n + 1)
        return np.take_along_axis(padded, i, axis=1)

    return (1 - theta) * take(idx) + theta * take(idx - 1)


def _limited_flux(w: np.ndarray, a: np.ndarray, lam: float, limiter: str) -> np.ndarray:
    """Upwind face fluxes plus a limited second-order correction.

    ``w`` is ``(n_paths, n_cells)``, ``a`` the face velocities
    ``(n_paths, n_cells - 1)``, ``lam = dt / dx``.
    """
    flux = np.maximum(a, 0.0) * w[:, :-1] + np.minimum(a, 0.0) * w[:, 1:]
    if limiter == "none":
        return flux
    jump = np.diff(w, axis=1)
    padded = np.pad(jump, ((0, 0), (1, 1)))
    upwind = np.where(a > 0, padded[:, :-2], padded[:, 2:])
    theta = np.divide(upwind, jump, out=np.zeros_like(jump),
                      where=np.abs(jump) > 1e-300)
    np.clip(theta, -1e8, 1e8, out=theta)
    if limiter == "minmod":
        lim = np.maximum(0.0, np.minimum(1.0, theta))
    elif limiter == "vanleer":
        lim = (theta + np.abs(theta)) / (1 + np.abs(theta))
    elif limiter == "superbee":
        lim = np.maximum.reduce([0 * theta, np.minimum(2 * theta, 1.0), np.minimum(theta, 2.0)])
    elif limiter == "mc":
        lim = np.maximum(0.0, np.minimum.reduce([(1 + theta) / 2, 2.0 + 0 * theta, 2 * theta]))
    else:
        raise ValueError(f"unknown limiter '{limiter}'")
    speed = np.abs(a)
    return flux + 0.5 * speed * (1 - speed * lam) * lim * jump


def evolve_continuity_fv_ensemble(u0: ScalarField, v, paths: Sequence[BrownianPath],
                                  output_times, refine: int = 4, substeps: int | None = None,
                                  courant_max: float = 0.9,
                                  limiter: str = "vanleer") -> np.ndarray:
    """Upwind solve of ``du + d_x((v + dB/dt) u) = 0`` for a batch of paths.

    Transport runs in the frame ``y = x - B_t`` with drift ``v(t, y + B_t)``
    frozen over each path step; the Brownian shift is applied exactly when a
    snapshot is emitted. The transport grid is ``u0.grid`` refined ``refine``
    times and cut down to the cells the drift can reach from the support of
    ``u0``. Returns cell averages on ``u0.grid``, shape
    ``(n_paths, n_outputs, n_cells)``.
    """
    drift = Drift.wrap(v)
    grid = u0.grid
    dx = grid.dx
    dxf = dx / refine
    dt, n_steps = paths[0].dt, paths[0].n_steps
    if any(p.dt != dt or p.n_steps != n_steps for p in paths):
        raise ValueError("paths must share dt and n_steps")
    steps = np.rint(np.asarray(output_times, dtype=np.float64) / dt).astype(int)
    if np.any(steps < 0) or np.any(steps > n_steps):
        raise ValueError("output times outside the paths")

    speed = drift.sup()
    if substeps is None:
        substeps = max(1, int(np.ceil(speed * dt / (dxf * courant_max))))
    h = dt / substeps
    courant = speed * h / dxf
    if courant > 1.0:
        raise CFLViolation(f"advective Courant number {courant:.3g} exceeds 1")

    n_paths = len(paths)
    nz = np.flatnonzero(u0.values)
    out = np.zeros((n_paths, len(steps), grid.n_cells))
    if nz.size == 0:
        return out
    # in the moving frame mass travels only with the drift, whose sign bounds the reach
    span = n_steps * dt / dx
    left = int(np.ceil(max(-drift.values.min(), 0.0) * span)) + 2
    right = int(np.ceil(max(drift.values.max(), 0.0) * span)) + 2
    i0, i1 = max(nz[0] - left, 0), min(nz[-1] + right + 1, grid.n_cells)
    w = np.repeat(u0.values[i0:i1], refine)[None, :].repeat(n_paths, axis=0)
    faces = grid.edges[i0] + dxf * np.arange(1, w.shape[1])
    B = np.stack([p.values for p in paths])
    order = np.argsort(steps, kind="stable")
    slot = 0

    def emit(k):
        nonlocal slot
        while slot < len(order) and steps[order[slot]] == k:
            full = np.zeros((n_paths, grid.n_cells * refine))
            full[:, i0 * refine:i1 * refine] = w
            shifted = shift_cell_averages(full, B[:, k], dxf)
            out[:, order[slot]] = shifted.reshape(n_paths, grid.n_cells, refine).mean(axis=2)
            slot += 1

    emit(0)
    for k in range(n_steps):
        a = drift(drift.index(k * dt), faces[None, :] + B[:, k, None])
        for _ in range(substeps):
            flux = _limited_flux(w, a, h / dxf, limiter)
            div = np.zeros_like(w)
            div[:, :-1] += flux
            div[:, 1:] -= flux
            w = w - h / dxf * div
        emit(k + 1)
    return out


def evolve_continuity_fv(u0: ScalarField, v, path: BrownianPath, output_times,
                         **kwargs) -> list[ScalarField]:
    values = evolve_continuity_fv_ensemble(u0, v, [path], output_times, **kwargs)[0]
    return [ScalarField(u0.grid, float(t), row) for t, row in zip(output_times, values)]

# }}}


# {{{ weak residual

def spde_weak_residual(u_series: Sequence[ScalarField], v, path: BrownianPath,
                       phi: TestFunction) -> float:
    r"""Absolute Ito-form weak residual along one path.

    .. math::

        \langle u_t, \varphi\rangle - \langle u_0, \varphi\rangle
        - \sum_k \langle u_k, v_k \varphi'\rangle \Delta t
        - \sum_k \langle u_k, \varphi'\rangle \Delta B_k
        - \tfrac12 \sum_k \langle u_k, \varphi''\rangle \Delta t

    ``u_series`` holds the density at consecutive path steps starting at 0.
    """
    drift = Drift.wrap(v)
    grid = u_series[0].grid
    _check_inside(phi, grid)
    n = len(u_series) - 1
    if n > path.n_steps:
        raise ValueError("series longer than the path")
    x = grid.centers
    dx, dt = grid.dx, path.dt
    p0, p1, p2 = phi(x), phi.d1(x), phi.d2(x)

    drift_term = ito_term = corr_term = 0.0
    for k in range(n):
        u = u_series[k].values
        vk = drift(drift.index(k * dt), x)
        drift_term += np.sum(u * vk * p1) * dx * dt
        ito_term += np.sum(u * p1) * dx * path.increments[k]
        corr_term += np.sum(u * p2) * dx * dt
    lhs = (np.sum(u_series[-1].values * p0) - np.sum(u_series[0].values * p0)) * dx
    return float(abs(lhs - drift_term - ito_term - 0.5 * corr_term))

# }}}


# {{{ ensembles

@dataclass
class DensityEnsemble:
    epsilon: float
    grid: Grid1D
    times: np.ndarray
    values: np.ndarray = field(repr=False)  # (n_paths, n_times, n_cells)
    path_seeds: list[int] = field(default_factory=list)

    @property
    def paths(self) -> list[list[ScalarField]]:
        return [[ScalarField(self.grid, float(t), row) for t, row in zip(self.times, series)]
                for series in self.values]

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[j], t, atol=1e-9):
            raise ValueError(f"ensemble has no snapshot at t={t}")
        return j

    def masses(self) -> np.ndarray:
        return self.values.sum(axis=-1) * self.grid.dx

    def relative_mass_drift(self, initial_mass: float) -> np.ndarray:
        """``|mass(path, t) - m0| / |m0|`` for every path and snapshot."""
        scale = abs(initial_mass) if initial_mass != 0 else 1.0
        return np.abs(self.masses() - initial_mass) / scale

    def cell_statistics(self, t: float):
        """Path means of ``u`` and ``u^2`` per cell, with the SE of the mean of ``u``."""
        u = self.values[:, self.time_index(t)]
        n = u.shape[0]
        se = u.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(u.shape[1])
        return u.mean(axis=0), (u ** 2).mean(axis=0), se


def ensemble_second_moment(ensemble: DensityEnsemble, t: float, n_boot: int = 200,
                           boot_seed: int = 0, min_paths: int = 100) -> tuple[float, float]:
    """Estimate ``int E[u(t, x)^2] dx`` and a bootstrap standard error.

    Cell-wise path averages first, then spatial quadrature.
    """
    u = ensemble.values[:, ensemble.time_index(t)]
    n = u.shape[0]
    if n < min_paths:
        raise ValueError(f"need at least {min_paths} paths, got {n}")
    dx = ensemble.grid.dx
    estimate = float(np.sum(np.mean(u ** 2, axis=0)) * dx)
    # the estimator is linear in per-path integrals, so resample those
    per_path = np.sum(u ** 2, axis=1) * dx
    rng = np.random.Generator(np.random.Philox(key=boot_seed))
    boots = per_path[rng.integers(0, n, size=(n_boot, n))].mean(axis=1)
    return estimate, float(boots.std(ddof=1))

# }}}


def lagrangian_second_moment_samples(u0_eps: ScalarField, flows: Sequence[FlowRealization],
                                     t: float) -> np.ndarray:
    """Per-path ``int u(t, x)^2 dx = int u0(y)^2 / J phi_t(y) dy``.

    The change of variables ``x = phi_t(y)`` only needs the Jacobian along
    trajectories whose start points include the cell centers of
    ``u0_eps.grid``. Unlike the cell-wise estimate it is not capped by the
    grid when the flow concentrates below a cell.
    """
    grid = u0_eps.grid
    weight = u0_eps.values ** 2 * grid.dx
    out = np.empty(len(flows))
    starts = cols = None
    for n, flow in enumerate(flows):
        if flow.jacobian is None:
            raise ValueError("flows need Jacobians")
        if flow.start_points is not starts:
            starts = flow.start_points
            cols = np.searchsorted(starts, grid.centers).clip(0, len(starts) - 1)
            if not np.array_equal(starts[cols], grid.centers):
                raise ValueError("flow start points must include the cell centers")
        out[n] = np.sum(weight / flow.jacobian[flow.time_index(t), cols])
    return out


def lagrangian_second_moment(u0_eps: ScalarField, flows: Sequence[FlowRealization],
                             t: float) -> tuple[float, float]:
    """Path mean of :func:`lagrangian_second_moment_samples` and its standard error."""
    per_path = lagrangian_second_moment_samples(u0_eps, flows, t)
    se = per_path.std(ddof=1) / np.sqrt(len(per_path)) if len(per_path) > 1 else 0.0
    return float(per_path.mean()), float(se)
