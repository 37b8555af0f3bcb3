"""Acceptance gate: one test per criterion, summarized at the end of the run.

The preset runs use the shipped defaults and take about ten minutes per pass
on one core; the reproducibility check repeats the pass.
"""

import csv
import filecmp
import time

import numpy as np
import pytest

from stochhyp import (
    PRESETS, Drift, Grid1D, Mollifier, ScalarField, burgers_flux, entropy_residual,
    evolve_conservation_law, kruzkov_pair, load_scenario, mollify, mollify_many,
    pushforward_density, riemann_exact_burgers, run_scenario, sample_ensemble,
    solve_flow_ensemble, stochastic_exponential_mean,
)
from stochhyp.density import shift_cell_averages
from stochhyp.runner import quadrature_tol, residual_test_functions, sde_time_grid

from conftest import riemann_field

pytestmark = pytest.mark.slow


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def preset_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("presets")
    runs = {}
    for name in PRESETS:
        start = time.perf_counter()
        report = run_scenario(load_scenario(name), root / name)
        runs[name] = (report, time.perf_counter() - start)
    return runs


def l1_to_exact(n_cells):
    grid = Grid1D(-2.0, 4.0, n_cells)
    v = evolve_conservation_law(riemann_field(grid, 1, 0), burgers_flux(), 1.0)[-1]
    exact = riemann_exact_burgers(1.0, 0.0, 1.0, grid.centers)
    return np.sum(np.abs(v.values - exact)) * grid.dx


@pytest.mark.criterion(1, "entropy solver correctness")
def test_criterion_1_riemann_shock(record_property):
    start = time.perf_counter()
    e400 = l1_to_exact(400)
    elapsed = time.perf_counter() - start
    e800 = l1_to_exact(800)
    record_property("detail", f"L1 {e400:.4g} at 400 cells, ratio {e400 / e800:.3g}, "
                              f"{elapsed:.2f} s")
    assert e400 <= 0.02
    assert e400 / e800 >= 1.4
    assert elapsed < 5.0


@pytest.mark.criterion(2, "entropy inequality on the shock")
def test_criterion_2_entropy_inequality(record_property):
    spec = load_scenario("cosmo_delta_shock")
    grid = spec.grid
    snaps = evolve_conservation_law(ScalarField.from_function(grid, spec.v0), burgers_flux(),
                                    spec.t_end, cfl=spec.cfl)
    tol = quadrature_tol(spec, max(b.time - a.time for a, b in zip(snaps, snaps[1:])))
    phis, phi_t, feature = residual_test_functions(spec)
    worst = np.inf
    for k in (0.0, 0.25, 0.5, 0.75, 1.0):
        pair = kruzkov_pair(k, burgers_flux(), grid.dx)
        worst = min(worst, *(entropy_residual(snaps, pair, phi, phi_t) for phi in phis))
    mid = entropy_residual(snaps, kruzkov_pair(0.5, burgers_flux(), grid.dx),
                           phis[feature], phi_t)
    record_property("detail", f"min residual {worst:.3g} vs -{tol:.3g}, k=0.5 on shock {mid:.3g}")
    assert worst >= -tol
    assert mid > 0


@pytest.mark.criterion(3, "constant-drift translation oracle")
def test_criterion_3_translation(record_property):
    spec = load_scenario("constant_drift_oracle")
    grid = spec.grid
    snaps = evolve_conservation_law(ScalarField.from_function(grid, spec.v0), burgers_flux(),
                                    spec.t_end, cfl=spec.cfl, max_speed=1.0)
    dt, n_steps = sde_time_grid(spec, snaps)
    u_grid, _ = grid.padded(spec.noise_padding)
    u0 = ScalarField.from_function(u_grid, spec.u0)
    paths = sample_ensemble(spec.base_seed, 100, dt, n_steps)
    times = spec.t_end * np.arange(1, 5) / 4
    worst_eps, worst_raw = {}, 0.0
    for eps in spec.ladder:
        moll = Mollifier(eps)
        u0_eps = mollify(u0, moll)
        flows = solve_flow_ensemble(Drift(mollify_many(snaps, moll)), paths, u_grid.edges,
                                    record=times)
        worst = 0.0
        for path, flow in zip(paths, flows):
            for t in times:
                u = pushforward_density(u0_eps, flow, t).values
                shift = t + path.values[int(round(t / dt))]
                exact = shift_cell_averages(u0_eps.values[None, :], np.array([shift]), u_grid.dx)
                worst = max(worst, np.sum(np.abs(u - exact[0])) * u_grid.dx)
                if eps == spec.ladder[-1]:
                    raw = spec.u0(u_grid.centers - shift)
                    worst_raw = max(worst_raw, np.sum(np.abs(u - raw)) * u_grid.dx)
        worst_eps[eps] = worst
    record_property("detail", f"max L1 vs shifted u0_eps {max(worst_eps.values()):.3g}, "
                              f"vs shifted u0 at eps=dx {worst_raw:.3g}, 100 paths")
    assert max(worst_eps.values()) <= 0.02
    assert worst_raw <= 0.02


@pytest.mark.criterion(4, "stochastic exponential has mean one")
def test_criterion_4_martingale(record_property):
    start = time.perf_counter()
    spec = load_scenario("burgers_shock")
    grid = spec.grid
    snaps = evolve_conservation_law(ScalarField.from_function(grid, spec.v0), burgers_flux(),
                                    spec.t_end, cfl=spec.cfl)
    dt, n_steps = sde_time_grid(spec, snaps)
    paths = sample_ensemble(spec.base_seed, 10_000, dt, n_steps)
    zs = []
    for eps in spec.ladder:
        drift = Drift(mollify_many(snaps, Mollifier(eps)))
        for t in (0.25, 0.5, 1.0):
            mean, se = stochastic_exponential_mean(drift, paths, t)
            zs.append((mean - 1) / se)
    elapsed = time.perf_counter() - start
    record_property("detail", f"max |z| {np.max(np.abs(zs)):.3g} over 4 eps x 3 times, "
                              f"{elapsed:.0f} s")
    assert np.all(np.abs(zs) <= 3)
    assert elapsed < 180


@pytest.mark.criterion(5, "noise keeps the second moment bounded")
def test_criterion_5_second_moment(preset_runs, record_property):
    report, elapsed = preset_runs["cosmo_delta_shock"]
    rows = [r for r in read_csv(report.out_dir / "second_moment.csv") if float(r["t"]) == 1.0]
    eps = [float(r["epsilon"]) for r in rows]
    assert eps == sorted(eps, reverse=True)

    def col(name):
        return np.array([float(r[name]) for r in rows])

    noise, noise_cells = col("noise_lagrangian"), col("noise_eulerian")
    det, det_cells = col("deterministic_lagrangian"), col("deterministic_eulerian")
    ratio = noise.max() / noise.min()
    growth = det[-1] / det[0]
    record_property("detail", f"noise max/min {ratio:.3g} (cell-wise {noise_cells.max() / noise_cells.min():.3g}), "
                              f"deterministic growth {growth:.3g} (cell-wise {det_cells[-1] / det_cells[0]:.3g}), "
                              f"{elapsed:.0f} s")
    assert ratio <= 2
    assert noise_cells.max() / noise_cells.min() <= 2
    assert growth >= 10
    assert elapsed < 600


@pytest.mark.criterion(6, "commutator decay")
def test_criterion_6_commutator(preset_runs, record_property):
    smooth = read_csv(preset_runs["commutator_decay"][0].out_dir / "commutator_decay.csv")
    slope = float(smooth[0]["fitted_slope"])
    details, decreasing = [f"smooth slope {slope:.3g}"], True
    for name in ("cosmo_delta_shock", "burgers_shock"):
        rows = read_csv(preset_runs[name][0].out_dir / "commutator_decay.csv")
        norms = np.array([float(r["l2_norm"]) for r in rows])
        ok = bool(np.all(np.diff(norms) < 0) and norms[-1] > 0)
        decreasing &= ok
        details.append(f"{name} norms {', '.join(f'{x:.3g}' for x in norms)}")
    record_property("detail", "; ".join(details))
    assert slope >= 0.8
    assert decreasing


@pytest.mark.criterion(7, "pushforward vs finite volume on every preset")
def test_criterion_7_cross_check(preset_runs, record_property):
    worst = {name: max(float(r["l1_distance"])
                       for r in read_csv(report.out_dir / "cross_check.csv"))
             for name, (report, _) in preset_runs.items()}
    record_property("detail", ", ".join(f"{k} {v:.3g}" for k, v in worst.items()))
    assert max(worst.values()) <= 0.05


@pytest.mark.criterion(8, "mass conservation on every preset")
def test_criterion_8_mass(preset_runs, record_property):
    worst = {name: max(float(r["max_relative_drift"])
                       for r in read_csv(report.out_dir / "mass.csv"))
             for name, (report, _) in preset_runs.items()}
    record_property("detail", f"max relative drift {max(worst.values()):.3g}")
    assert max(worst.values()) <= 1e-3


@pytest.mark.criterion(9, "byte-identical reruns of every preset")
def test_criterion_9_reproducibility(preset_runs, tmp_path, record_property):
    differing = []
    for name, (report, _) in preset_runs.items():
        rerun = run_scenario(load_scenario(name), tmp_path / name)
        csvs = sorted(p.name for p in report.out_dir.glob("*.csv"))
        _, mismatch, errors = filecmp.cmpfiles(report.out_dir, rerun.out_dir, csvs,
                                               shallow=False)
        differing += [f"{name}/{f}" for f in mismatch + errors]
    record_property("detail", f"{len(PRESETS)} presets rerun, "
                              f"{len(differing)} differing CSVs")
    assert not differing


def test_every_preset_passes_and_fits_the_budget(preset_runs):
    for name, (report, elapsed) in preset_runs.items():
        failed = [inv.line() for inv in report.invariants if inv.passed is False]
        assert not failed, (name, failed)
        assert elapsed < 600, (name, elapsed)
