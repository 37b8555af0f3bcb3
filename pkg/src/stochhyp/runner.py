"""Scenario pipeline: conservation solve, mollification ladder, path
ensemble, pushforward with finite-volume cross-check, diagnostics.

Every output is a CSV of round-trip (``repr``) decimals plus a ``manifest``
whose non-comment lines form a valid scenario file, so running the manifest
reproduces the directory byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
import platform
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .conservation import (
    Grid1D, ScalarField, TestFunction, entropy_residual, evolve_conservation_law,
    _max_speed, flux_from_label, kruzkov_pair, riemann_exact_burgers, weak_form_residual,
)
from .density import (
    DensityEnsemble, ensemble_second_moment, evolve_continuity_fv_ensemble,
    lagrangian_second_moment_samples, pushforward_density, shift_cell_averages,
    spde_weak_residual,
)
from .flow import (
    BrownianPath, Drift, invert_flow, path_seed, sample_ensemble, solve_flow_ensemble,
    stochastic_exponential_mean, zero_path,
)
from .mollification import Mollifier, commutator_l2_decay, mollify, mollify_many, primitive
from .scenarios import ScenarioSpec

log = logging.getLogger(__name__)

VERSION = "0.1.0"  # keep in step with pyproject
BATCH = 100          # paths per vectorized flow sweep
SPDE_PATHS = 8       # paths in the weak-residual refinement pair
N_QUARTERS = 4       # outputs at 0, T/4, T/2, 3T/4, T
DUMP_PATHS = 4       # paths written by the debug flow dump


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"stage '{stage}' aborted: {type(exc).__name__}: {exc}")


@contextmanager
def stage(name: str):
    log.info("stage: %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class Invariant:
    name: str
    passed: bool | None  # None: not applicable to this scenario
    detail: str

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]

    def line(self) -> str:
        return f"{self.status} {self.name}: {self.detail}"


@dataclass
class RunReport:
    spec: ScenarioSpec
    out_dir: Path
    invariants: list[Invariant] = field(default_factory=list)
    files: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(inv.passed is not False for inv in self.invariants)

    def check(self, name: str, passed, detail: str) -> None:
        self.invariants.append(Invariant(name, None if passed is None else bool(passed), detail))

    def __getitem__(self, name: str) -> Invariant:
        for inv in self.invariants:
            if inv.name == name:
                return inv
        raise KeyError(name)


def _fmt(x) -> str:
    if isinstance(x, (str, int, np.integer)) and not isinstance(x, (bool, np.bool_)):
        return str(x)
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


@dataclass
class _Run:
    spec: ScenarioSpec
    report: RunReport
    want: set
    snapshots: list
    flux: object
    u_grid: Grid1D
    n_pad: int
    u0: ScalarField
    dt: float
    n_steps: int
    paths: list[BrownianPath]
    out_times: np.ndarray
    starts: np.ndarray
    dump_flows: bool

    def csv(self, name, header, rows):
        write_csv(self.report.out_dir / name, header, rows)
        self.report.files.append(name)


@dataclass
class _Level:
    epsilon: float
    u0_eps: ScalarField
    drift: Drift
    push: DensityEnsemble
    fv: np.ndarray | None
    moments: dict        # t -> (eulerian, eulerian_se, lagrangian, lagrangian_se)
    det_moments: dict    # t -> (eulerian, lagrangian)
    martingale: list     # (t, mean, se)
    jacobian_dev: float
    inverse_jacobian: float  # max over the support of u0_eps of E[1 / J(T, x0)]
    round_trip: float        # max |psi(phi(x0)) - x0| on path 0 at T


# {{{ setup helpers

def sde_time_grid(spec: ScenarioSpec, snapshots) -> tuple[float, int]:
    """SDE step: the first solver step, capped at the unit-speed step
    ``cfl dx``, divided by ``sde_refine`` and rounded down so the quarter
    times land on the path grid."""
    dt_solver = snapshots[1].time - snapshots[0].time
    dt_ref = min(dt_solver, spec.cfl * spec.grid.dx) / spec.sde_refine
    n_steps = N_QUARTERS * int(np.ceil(spec.t_end / (N_QUARTERS * dt_ref) - 1e-9))
    return spec.t_end / n_steps, n_steps


def flow_starts(grid: Grid1D) -> np.ndarray:
    """Cell edges and centers interleaved. Edges feed the conservative
    pushforward, centers the change-of-variables moment."""
    starts = np.empty(2 * grid.n_cells + 1)
    starts[0::2] = grid.edges
    starts[1::2] = grid.centers
    return starts


def residual_test_functions(spec: ScenarioSpec) -> tuple[list[TestFunction], TestFunction, int]:
    """Five spatial bumps across the domain and one on the main feature,
    a time bump on ``(0.05 T, 0.95 T)``, and the index of the feature bump."""
    g = spec.grid
    width = min(1.0, (g.x_max - g.x_min) / 6)
    lo, hi = g.x_min + 1.2 * width, g.x_max - 1.2 * width
    phis = [TestFunction(float(c), width) for c in np.linspace(lo, hi, 5)]
    feature = 0.5 * (g.x_min + g.x_max)
    if spec.v0.kind == "riemann":
        vL, vR = spec.v0.params[:2]
        x0 = spec.v0.params[2] if len(spec.v0.params) > 2 else 0.0
        feature = x0 + 0.25 * (vL + vR) * spec.t_end  # Burgers shock at T/2
    phis.append(TestFunction(float(np.clip(feature, lo, hi)), width))
    phi_t = TestFunction(0.5 * spec.t_end, 0.45 * spec.t_end)
    return phis, phi_t, len(phis) - 1


def quadrature_tol(spec: ScenarioSpec, dt_max: float) -> float:
    return spec.quadrature_c * (spec.grid.dx + dt_max)


def _u0_center(spec: ScenarioSpec) -> float:
    return spec.u0.params[0] if spec.u0.kind == "bump" else 0.0

# }}}


def run_scenario(spec: ScenarioSpec, out_dir, dump_flows: bool = False) -> RunReport:
    """Run every stage of ``spec``; CSVs and the manifest go to ``out_dir``.

    Module aborts surface as :class:`StageError` naming the stage.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(spec, out_dir)
    grid = spec.grid

    with stage("conservation"):
        flux = flux_from_label(spec.flux)
        v0 = ScalarField.from_function(grid, spec.v0)
        # floor the speed bound at 1 so slow or still data keeps dt <= cfl dx
        speed = max(_max_speed(flux, v0.values), 1.0)
        snapshots = evolve_conservation_law(v0, flux, spec.t_end, cfl=spec.cfl, max_speed=speed)

    with stage("ensemble setup"):
        u_grid, n_pad = grid.padded(spec.noise_padding)
        dt, n_steps = sde_time_grid(spec, snapshots)
        run = _Run(
            spec=spec, report=report, want=set(spec.outputs), snapshots=snapshots,
            flux=flux, u_grid=u_grid, n_pad=n_pad,
            u0=ScalarField.from_function(u_grid, spec.u0), dt=dt, n_steps=n_steps,
            paths=sample_ensemble(spec.base_seed, spec.n_paths, dt, n_steps),
            out_times=spec.t_end * np.arange(N_QUARTERS + 1) / N_QUARTERS,
            starts=flow_starts(u_grid), dump_flows=dump_flows)

    keep = list(range(0, len(snapshots), spec.v_output_every))
    if keep[-1] != len(snapshots) - 1:
        keep.append(len(snapshots) - 1)
    run.csv("v_snapshots.csv", ["t", "x", "value"],
            ((snapshots[i].time, x, val) for i in keep
             for x, val in zip(grid.centers, snapshots[i].values)))

    dt_max = float(np.max(np.diff([s.time for s in snapshots])))
    tol = quadrature_tol(spec, dt_max)
    with stage("riemann error"):
        _riemann_error(run)
    with stage("entropy residuals"):
        _residuals(run, tol)

    levels = []
    for n, eps in enumerate(spec.ladder):
        with stage(f"ensemble at epsilon={eps:.6g}"):
            levels.append(_ensemble_level(run, eps, n))

    with stage("ensemble diagnostics"):
        _ensemble_outputs(run, levels)
    if "commutator" in run.want:
        with stage("commutator"):
            _commutator(run, levels[-1])
    if "spde_residual" in run.want:
        with stage("spde residual"):
            _spde_refinement(run)

    run.csv("invariants.csv", ["name", "status", "detail"],
            ((inv.name, inv.status, inv.detail) for inv in report.invariants))
    _write_manifest(run, tol)
    return report


# {{{ conservation-law diagnostics

def _riemann_error(run: _Run) -> None:
    if "riemann_error" not in run.want:
        return
    spec, grid = run.spec, run.spec.grid
    if spec.v0.kind != "riemann" or run.flux.label != "burgers":
        run.report.check("riemann_l1", None, "no exact solution for this data")
        return
    final = run.snapshots[-1]
    vL, vR = spec.v0.params[:2]
    x0 = spec.v0.params[2] if len(spec.v0.params) > 2 else 0.0
    exact = riemann_exact_burgers(vL, vR, final.time, grid.centers, x0)
    err = float(np.sum(np.abs(final.values - exact)) * grid.dx)
    run.csv("riemann_error.csv", ["t", "n_cells", "l1_error"], [(final.time, grid.n_cells, err)])
    run.report.check("riemann_l1", err <= spec.riemann_tol,
                     f"L1 error {err:.4g} vs {spec.riemann_tol:g}")


def _residuals(run: _Run, tol: float) -> None:
    if not {"entropy", "weak_form"} & run.want:
        return
    spec, flux, snaps = run.spec, run.flux, run.snapshots
    phis, phi_t, feature = residual_test_functions(spec)
    lo, hi = spec.v0.value_range()
    rows = []
    if "entropy" in run.want:
        worst = np.inf
        for k in np.unique(np.linspace(lo, hi, 5)):
            pair = kruzkov_pair(float(k), flux, spec.grid.dx)
            for phi in phis:
                r = entropy_residual(snaps, pair, phi, phi_t)
                rows.append(("kruzkov", k, phi.center, phi.width, r, tol))
                worst = min(worst, r)
        run.report.check("entropy_inequality", worst >= -tol,
                         f"min residual {worst:.3g} vs -{tol:.3g}")
        shock = (spec.v0.kind == "riemann" and flux.convex_min is not None
                 and spec.v0.params[0] > spec.v0.params[1])
        if shock:
            r = entropy_residual(snaps, kruzkov_pair(0.5 * (lo + hi), flux, spec.grid.dx),
                                 phis[feature], phi_t)
            run.report.check("entropy_dissipation", r > tol,
                             f"mid-state residual {r:.3g} on the shock")
        else:
            run.report.check("entropy_dissipation", None, "no shock in the data")
    if "weak_form" in run.want:
        worst = 0.0
        for phi in phis:
            r = weak_form_residual(snaps, flux, phi, phi_t)
            rows.append(("weak_form", float("nan"), phi.center, phi.width, r, tol))
            worst = max(worst, abs(r))
        run.report.check("weak_form", worst <= tol, f"max |residual| {worst:.3g} vs {tol:.3g}")
    run.csv("entropy_residuals.csv", ["pair", "k", "phi_center", "phi_width", "residual", "tol"],
            rows)

# }}}


# {{{ one rung of the epsilon ladder

def _ensemble_level(run: _Run, eps: float, index: int) -> _Level:
    spec, want = run.spec, run.want
    moll = Mollifier(eps)
    drift = Drift(mollify_many(run.snapshots, moll))
    u0_eps = mollify(run.u0, moll)
    times = run.out_times
    n_paths, n_t = len(run.paths), len(times)

    push = np.empty((n_paths, n_t, run.u_grid.n_cells))
    lagr = np.empty((n_paths, n_t))
    jac_dev = round_trip = float("nan")
    inv_jac = np.zeros(len(run.starts))
    dump = []
    for b0 in range(0, n_paths, BATCH):
        flows = solve_flow_ensemble(drift, run.paths[b0:b0 + BATCH], run.starts, record=times)
        for i, flow in enumerate(flows):
            for j, t in enumerate(times):
                push[b0 + i, j] = pushforward_density(u0_eps, flow, t,
                                                      mass_tol=spec.mass_tol).values
        for j, t in enumerate(times):
            lagr[b0:b0 + len(flows), j] = lagrangian_second_moment_samples(u0_eps, flows, t)
        inv_jac += sum(1.0 / flow.jacobian[-1] for flow in flows)
        if b0 == 0:
            jac_dev = _jacobian_deviation(flows[0], u0_eps)
            round_trip = _round_trip_error(flows[0])
            if run.dump_flows:
                dump = list(_flow_rows(flows[:DUMP_PATHS]))
    if run.dump_flows:
        run.csv(f"flows_eps{index}.csv", ["path_id", "t", "x0", "phi", "jacobian"], dump)
    ensemble = DensityEnsemble(eps, run.u_grid, times, push, [p.seed for p in run.paths])
    support = u0_eps(run.starts) > 1e-6 * u0_eps.sup() if u0_eps.sup() > 0 else None
    inv_jac_max = float(np.max(inv_jac[support]) / n_paths) if support is not None else 1.0

    fv = None
    if "cross_check" in want:
        fv = evolve_continuity_fv_ensemble(u0_eps, drift, run.paths, times,
                                           refine=spec.fv_refine)

    moments, det_moments = {}, {}
    det_flow = solve_flow_ensemble(drift, [zero_path(run.dt, run.n_steps)], run.starts,
                                   record=times)
    dx = run.u_grid.dx
    for j, t in enumerate(times):
        if n_paths >= 100:
            eul, eul_se = ensemble_second_moment(ensemble, t, boot_seed=spec.base_seed)
        else:
            eul = float(np.sum(np.mean(push[:, j] ** 2, axis=0)) * dx)
            eul_se = float("nan")
        lj = lagr[:, j]
        lag_se = lj.std(ddof=1) / np.sqrt(n_paths) if n_paths > 1 else float("nan")
        moments[t] = (eul, eul_se, float(lj.mean()), float(lag_se))
        det_u = pushforward_density(u0_eps, det_flow[0], t, mass_tol=spec.mass_tol).values
        det_moments[t] = (float(np.sum(det_u ** 2) * dx),
                          float(lagrangian_second_moment_samples(u0_eps, det_flow, t)[0]))

    mart = []
    if "martingale" in want and n_paths >= 100:
        for t in times[[1, 2, N_QUARTERS]]:
            mean, se = stochastic_exponential_mean(drift, run.paths, t, _u0_center(spec))
            mart.append((float(t), mean, se))
    return _Level(eps, u0_eps, drift, ensemble, fv, moments, det_moments, mart, jac_dev,
                  inv_jac_max, round_trip)


def _jacobian_deviation(flow, u0_eps) -> float:
    """Largest relative gap between the exponential Jacobian and a finite
    difference of the flow map, over starts where ``u0_eps`` has mass."""
    x0 = flow.start_points
    fd = np.gradient(flow.forward[-1], x0)
    jac = flow.jacobian[-1]
    mask = u0_eps(x0) > 1e-6 * u0_eps.sup()
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(fd[mask] - jac[mask]) / jac[mask]))


def _round_trip_error(flow) -> float:
    """Invert the edge trajectories alone and map the center trajectories back."""
    edges = dataclasses.replace(flow, start_points=flow.start_points[0::2],
                                forward=flow.forward[:, 0::2], jacobian=None)
    back = invert_flow(edges, flow.forward[-1, 1::2]).inverse[-1]
    return float(np.max(np.abs(back - flow.start_points[1::2])))


def _flow_rows(flows):
    for i, flow in enumerate(flows):
        for j, t in enumerate(flow.times):
            for x0, phi, jac in zip(flow.start_points, flow.forward[j], flow.jacobian[j]):
                yield i, t, x0, phi, jac

# }}}


# {{{ ensemble outputs and invariants

def _ensemble_outputs(run: _Run, levels: list[_Level]) -> None:
    spec, report, times = run.spec, run.report, run.out_times
    dx = run.u_grid.dx
    x = run.u_grid.centers

    def ensemble_rows():
        for lv in levels:
            for t in times:
                for row in zip(x, *lv.push.cell_statistics(t)):
                    yield (lv.epsilon, t) + row

    run.csv("ensemble.csv", ["epsilon", "t", "x", "mean_u", "mean_u_sq", "se"], ensemble_rows())

    rows, worst, most_negative = [], 0.0, 0.0
    m0 = run.u0.mass()
    for lv in levels:
        m = lv.u0_eps.mass()
        scale = max(abs(m), np.finfo(float).tiny)
        d = float(lv.push.relative_mass_drift(m).max())
        rows.append((lv.epsilon, "pushforward", d))
        worst = max(worst, d)
        most_negative = min(most_negative, float(lv.push.values.min()))
        if lv.fv is not None:
            d = float(np.max(np.abs(lv.fv.sum(axis=-1) * dx - m)) / scale)
            rows.append((lv.epsilon, "finite_volume", d))
            worst = max(worst, d)
            most_negative = min(most_negative, float(lv.fv.min()))
        rows.append((lv.epsilon, "mollified_initial", abs(m - m0) / max(abs(m0), 1e-300)))
    run.csv("mass.csv", ["epsilon", "method", "max_relative_drift"], rows)
    report.check("mass_conservation", worst <= spec.mass_tol,
                 f"max relative drift {worst:.3g} vs {spec.mass_tol:g}")
    if spec.u0.value_range()[0] >= 0:
        report.check("positivity", most_negative >= -1e-12, f"min density {most_negative:.3g}")

    if "cross_check" in run.want:
        rows, worst = [], 0.0
        for lv in levels:
            diff = np.sum(np.abs(lv.fv - lv.push.values), axis=-1) * dx
            rows.extend((lv.epsilon, p, t, diff[p, j])
                        for p in range(diff.shape[0]) for j, t in enumerate(times))
            worst = max(worst, float(diff.max()))
        run.csv("cross_check.csv", ["epsilon", "path_id", "t", "l1_distance"], rows)
        report.check("cross_check", worst <= spec.cross_tol,
                     f"max per-path L1 {worst:.3g} vs {spec.cross_tol:g}")

    if "translation_oracle" in run.want:
        _translation_oracle(run, levels)
    if "second_moment" in run.want:
        _second_moment(run, levels)
    if "martingale" in run.want:
        _martingale(run, levels)
    if "jacobian_check" in run.want:
        run.csv("jacobian_check.csv", ["epsilon", "max_relative_deviation",
                                       "max_mean_inverse_jacobian", "max_round_trip_error"],
                [(lv.epsilon, lv.jacobian_dev, lv.inverse_jacobian, lv.round_trip)
                 for lv in levels])
        worst = max(lv.round_trip for lv in levels)
        report.check("flow_inverse", worst <= 2 * dx,
                     f"max |psi(phi(x)) - x| {worst:.3g} vs {2 * dx:.3g}")


def _translation_oracle(run: _Run, levels) -> None:
    spec = run.spec
    if spec.v0.kind != "constant":
        run.report.check("translation_oracle", None, "drift is not constant")
        return
    c = spec.v0.params[0]
    B = np.stack([p.values for p in run.paths])
    rows, worst = [], 0.0
    for lv in levels:
        base = np.broadcast_to(lv.u0_eps.values, (len(run.paths), run.u_grid.n_cells))
        for j, t in enumerate(run.out_times):
            k = int(round(t / run.dt))
            exact = shift_cell_averages(np.array(base), c * t + B[:, k], run.u_grid.dx)
            err = np.sum(np.abs(lv.push.values[:, j] - exact), axis=-1) * run.u_grid.dx
            rows.extend((lv.epsilon, p, t, e) for p, e in enumerate(err))
            worst = max(worst, float(err.max()))
    run.csv("translation_oracle.csv", ["epsilon", "path_id", "t", "l1_error"], rows)
    run.report.check("translation_oracle", worst <= spec.oracle_tol,
                     f"max per-path L1 {worst:.3g} vs {spec.oracle_tol:g}")


def _second_moment(run: _Run, levels) -> None:
    spec = run.spec
    rows = [(lv.epsilon, t) + lv.moments[t] + lv.det_moments[t]
            for lv in levels for t in run.out_times]
    run.csv("second_moment.csv",
            ["epsilon", "t", "noise_eulerian", "noise_eulerian_se", "noise_lagrangian",
             "noise_lagrangian_se", "deterministic_eulerian", "deterministic_lagrangian"], rows)
    T = run.out_times[-1]
    lag = np.array([lv.moments[T][2] for lv in levels])
    eul = np.array([lv.moments[T][0] for lv in levels])
    ratio = float(lag.max() / lag.min())
    run.report.check("moment_uniformity", ratio <= spec.moment_ratio_max,
                     f"noise max/min {ratio:.3g} across the ladder "
                     f"(cell-wise estimate {eul.max() / eul.min():.3g})")
    if spec.deterministic_growth_min is not None:
        det = np.array([lv.det_moments[T][1] for lv in levels])
        growth = float(det[-1] / det[0])
        run.report.check("deterministic_growth", growth >= spec.deterministic_growth_min,
                         f"B=0 growth {growth:.3g} from eps={levels[0].epsilon:.4g} "
                         f"to eps={levels[-1].epsilon:.4g}")


def _martingale(run: _Run, levels) -> None:
    rows = [(lv.epsilon, t, m, se, (m - 1.0) / se if se > 0 else 0.0)
            for lv in levels for t, m, se in lv.martingale]
    run.csv("martingale.csv", ["epsilon", "t", "mean", "se", "z"], rows)
    finest = levels[-1].martingale
    if not finest:
        run.report.check("martingale", None, "fewer than 100 paths")
        return
    z = max(abs(m - 1.0) / se if se > 0 else 0.0 for _, m, se in finest)
    run.report.check("martingale", z <= run.spec.ci_multiplier,
                     f"max |z| {z:.3g} at eps={levels[-1].epsilon:.4g}")

# }}}


# {{{ commutator and weak residual

def _commutator(run: _Run, finest: _Level) -> None:
    """Commutator of the raw drift with the primitive of path 0's density."""
    spec = run.spec
    raw = Drift(run.snapshots)
    V_snaps, v_snaps = [], []
    for j, t in enumerate(run.out_times):
        t = float(t)
        u = ScalarField(run.u_grid, t, finest.push.values[0, j])
        V_snaps.append(primitive(u))
        v_ext = np.pad(raw.values[raw.index(t)], run.n_pad, mode="edge")
        v_snaps.append(ScalarField(run.u_grid, t, v_ext))
    table = commutator_l2_decay(V_snaps, v_snaps, spec.ladder)
    run.csv("commutator_decay.csv", ["epsilon", "l2_norm", "fitted_slope"], table.rows())
    if table.slope is None:
        run.report.check("commutator_decay", True, "commutator vanishes identically")
        return
    ok = table.strictly_decreasing()
    detail = f"norms {'strictly decreasing' if ok else 'not monotone'}, slope {table.slope:.3g}"
    if spec.commutator_slope_min is not None:
        ok = ok and table.slope >= spec.commutator_slope_min
        detail += f" vs {spec.commutator_slope_min:g}"
    run.report.check("commutator_decay", ok, detail)


def _spde_refinement(run: _Run) -> None:
    """Ito weak residual of the pushforward on the scenario grid and on a
    grid refined twice in space and time, driven by the same Brownian paths."""
    spec = run.spec
    eps = spec.ladder[0]
    moll = Mollifier(eps)
    n_paths = min(SPDE_PATHS, spec.n_paths)
    fine = sample_ensemble(path_seed(spec.base_seed, 2 ** 32), n_paths,
                           run.dt / 2, 2 * run.n_steps)
    phi = TestFunction(_u0_center(spec), 2.0)
    rows, medians = [], []
    for factor, paths in ((1, [p.coarsen(2) for p in fine]), (2, fine)):
        grid = Grid1D(spec.x_min, spec.x_max, factor * spec.n_cells)
        snaps = evolve_conservation_law(ScalarField.from_function(grid, spec.v0), run.flux,
                                        spec.t_end, cfl=spec.cfl)
        drift = Drift(mollify_many(snaps, moll))
        u_grid, _ = grid.padded(spec.noise_padding)
        u0_eps = mollify(ScalarField.from_function(u_grid, spec.u0), moll)
        flows = solve_flow_ensemble(drift, paths, u_grid.edges, record="all",
                                    with_jacobian=False)
        res = []
        for p, (flow, path) in enumerate(zip(flows, paths)):
            series = [pushforward_density(u0_eps, flow, t, mass_tol=spec.mass_tol)
                      for t in flow.times]
            r = spde_weak_residual(series, drift, path, phi)
            rows.append((grid.n_cells, path.dt, p, r))
            res.append(r)
        medians.append(float(np.median(res)))
    run.csv("spde_residual.csv", ["n_cells", "dt", "path_id", "residual"], rows)
    run.report.check("spde_residual_refinement", medians[1] < medians[0],
                     f"median residual {medians[0]:.3g} -> {medians[1]:.3g} under refinement")

# }}}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(run: _Run, tol: float) -> None:
    spec, report = run.spec, run.report
    meta = [
        ("package", f"stochhyp {VERSION}"),
        ("python", platform.python_version()),
        ("numpy", np.__version__),
        ("scipy", scipy.__version__),
        ("path_keys", "Philox key = SeedSequence([base_seed, path_index]).generate_state(1)"),
        ("v_grid", f"[{spec.x_min!r}, {spec.x_max!r}] with {spec.n_cells} cells"),
        ("u_grid", f"[{run.u_grid.x_min!r}, {run.u_grid.x_max!r}] with "
                   f"{run.u_grid.n_cells} cells"),
        ("epsilons", ", ".join(repr(e) for e in spec.ladder)),
        ("sde_dt", repr(run.dt)),
        ("sde_steps", str(run.n_steps)),
        ("quadrature_tol", repr(tol)),
        ("invariants", "all pass" if report.passed else "failures present"),
    ]
    lines = ["# stochhyp run manifest; the uncommented lines are the scenario"]
    lines += [f"# {k}: {v}" for k, v in meta]
    lines += [f"# sha256 {name} {_sha256(report.out_dir / name)}" for name in report.files]
    text = "\n".join(lines) + "\n" + spec.to_text()
    (report.out_dir / "manifest").write_text(text)


def read_invariants(run_dir) -> list[Invariant]:
    path = Path(run_dir) / "invariants.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    status = {"PASS": True, "FAIL": False, "SKIP": None}
    return [Invariant(r["name"], status[r["status"]], r["detail"]) for r in rows]
