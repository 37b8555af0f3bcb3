import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from stochhyp import (
    BlowUpError, Grid1D, ScalarField, TestFunction, buckley_leverett_flux, burgers_flux,
    check_entropy_pair, entropy_residual, evolve_conservation_law, godunov_flux,
    kruzkov_pair, linear_flux, quadratic_pair, riemann_exact_burgers, weak_form_residual,
)
from stochhyp.conservation import flux_from_label

from conftest import riemann_field

BURGERS = burgers_flux()


def l1(a, b, dx):
    return float(np.sum(np.abs(a - b)) * dx)


# {{{ exact Riemann solution

def test_riemann_shock_moves_at_half_speed():
    assert riemann_exact_burgers(1, 0, 1.0, 0.4) == 1.0
    assert riemann_exact_burgers(1, 0, 1.0, 0.6) == 0.0


def test_riemann_rarefaction_fan():
    assert riemann_exact_burgers(0, 1, 1.0, 0.5) == pytest.approx(0.5)
    x = np.linspace(-1, 2, 31)
    np.testing.assert_allclose(riemann_exact_burgers(0, 1, 2.0, x), np.clip(x / 2, 0, 1))


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(-10, 10))
def test_riemann_constant_state(c, t, x):
    assert riemann_exact_burgers(c, c, t, x) == c


def test_riemann_rejects_bad_input():
    with pytest.raises(ValueError):
        riemann_exact_burgers(1, 0, 0.0, 0.3)
    with pytest.raises(ValueError):
        riemann_exact_burgers(np.nan, 0, 1.0, 0.3)


def test_riemann_shock_satisfies_weak_form():
    # Rankine-Hugoniot: the exact shock sampled on a fine grid has a vanishing
    # weak residual, a wrong speed does not
    grid = Grid1D(-2, 4, 3000)
    times = np.linspace(0, 1, 401)
    phi, w = TestFunction(0.25, 1.0), TestFunction(0.5, 0.45)

    def residual(speed):
        snaps = [ScalarField(grid, t, np.where(grid.centers < speed * t, 1.0, 0.0)) for t in times]
        return weak_form_residual(snaps, BURGERS, phi, w)

    exact = [ScalarField(grid, t, riemann_exact_burgers(1, 0, max(t, 1e-12), grid.centers))
             for t in times]
    assert abs(weak_form_residual(exact, BURGERS, phi, w)) < 2e-3
    assert abs(residual(0.5)) < 2e-3
    assert abs(residual(0.8)) > 2e-2

# }}}


# {{{ Godunov flux

def test_godunov_burgers_cases():
    assert godunov_flux(1.0, 0.0, BURGERS) == 0.5
    assert godunov_flux(0.0, 0.0, BURGERS) == 0.0
    assert godunov_flux(-1.0, 1.0, BURGERS) == 0.0
    assert godunov_flux(-2.0, -1.0, BURGERS) == 0.5
    assert godunov_flux(2.0, 3.0, BURGERS) == 2.0


def _godunov_brute(vL, vR, F, n=20001):
    s = np.linspace(min(vL, vR), max(vL, vR), n)
    return F(s).min() if vL <= vR else F(s).max()


@settings(max_examples=60)
@given(st.floats(-0.2, 1.2), st.floats(-0.2, 1.2))
def test_godunov_nonconvex_matches_dense_sampling(vL, vR):
    flux = buckley_leverett_flux()
    assert godunov_flux(vL, vR, flux) == pytest.approx(_godunov_brute(vL, vR, flux.F), abs=1e-8)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 1))
def test_godunov_is_consistent_and_monotone(a, b, h):
    assert godunov_flux(a, a, BURGERS) == pytest.approx(BURGERS.F(a))
    # nondecreasing in the left state, nonincreasing in the right state
    assert godunov_flux(a + h, b, BURGERS) >= godunov_flux(a, b, BURGERS) - 1e-12
    assert godunov_flux(a, b + h, BURGERS) <= godunov_flux(a, b, BURGERS) + 1e-12


def test_godunov_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    vL, vR = rng.uniform(-2, 2, (2, 50))
    vec = godunov_flux(vL, vR, BURGERS)
    np.testing.assert_array_equal(vec, [godunov_flux(a, b, BURGERS) for a, b in zip(vL, vR)])


def test_flux_catalog():
    assert flux_from_label("linear(2)").F(3.0) == 6.0
    with pytest.raises(ValueError):
        flux_from_label("euler")
    for flux in (BURGERS, buckley_leverett_flux(), linear_flux(-1.5)):
        flux.check_derivative(np.linspace(-1, 1, 9), np.linspace(0, 2, 9))

# }}}


# {{{ time stepping

def test_constant_state_is_exact():
    grid = Grid1D(-1, 1, 50)
    for snap in evolve_conservation_law(ScalarField.from_function(grid, lambda x: 0 * x + 0.7),
                                        BURGERS, 0.5):
        np.testing.assert_array_equal(snap.values, 0.7)


def test_snapshots_include_endpoints_and_cadence():
    grid = Grid1D(-2, 4, 100)
    snaps = evolve_conservation_law(riemann_field(grid, 1, 0), BURGERS, 1.0, record_every=5)
    assert snaps[0].time == 0.0 and snaps[-1].time == 1.0
    assert np.all(np.diff([s.time for s in snaps]) > 0)


# frozen from the exact solution above: Godunov L1 errors at t = 1 on [-2, 4]
SHOCK_L1 = {400: 0.01088874439466253, 800: 0.005875147184572911}
FAN_L1 = {400: 0.025561663618967886, 800: 0.013187558673610973,
          1600: 0.008647501410800765, 3200: 0.00440536575343757}


def _riemann_l1(data, n):
    grid = Grid1D(-2, 4, n)
    final = evolve_conservation_law(riemann_field(grid, *data), BURGERS, 1.0)[-1]
    return l1(final.values, riemann_exact_burgers(*data, 1.0, grid.centers), grid.dx)


def test_shock_convergence():
    errors = {n: _riemann_l1((1, 0), n) for n in SHOCK_L1}
    for n, e in errors.items():
        assert e == pytest.approx(SHOCK_L1[n], rel=1e-9)
    assert errors[400] <= 0.02
    assert np.log2(errors[400] / errors[800]) >= 0.5


def test_fan_convergence():
    # the fan's corners fall at varying offsets inside a cell, so the error ratio
    # between neighbouring levels jitters; fit the order over three doublings
    ns = np.array(sorted(FAN_L1))
    errors = np.array([_riemann_l1((0, 1), n) for n in ns])
    np.testing.assert_allclose(errors, [FAN_L1[n] for n in ns], rtol=1e-9)
    order = -np.polyfit(np.log(ns), np.log(errors), 1)[0]
    assert order >= 0.8


def test_mass_conserved_up_to_boundary_flux(shock_run):
    # outflow boundaries: d/dt mass = F(v_left) - F(v_right) = 1/2
    m0 = shock_run[0].mass()
    for snap in shock_run:
        assert snap.mass() == pytest.approx(m0 + 0.5 * snap.time, abs=1e-12)


def _piecewise(draw_vals, grid):
    edges = np.linspace(grid.x_min + 0.5, grid.x_max - 0.5, len(draw_vals) + 1)
    idx = np.clip(np.searchsorted(edges, grid.centers) - 1, 0, len(draw_vals) - 1)
    inside = (grid.centers > edges[0]) & (grid.centers < edges[-1])
    return np.where(inside, np.asarray(draw_vals)[idx], 0.0)


values = st.lists(st.floats(-2, 2), min_size=1, max_size=6)


@settings(max_examples=25, deadline=None)
@given(values)
def test_maximum_principle(vals):
    grid = Grid1D(-2, 2, 80)
    v0 = ScalarField(grid, 0.0, _piecewise(vals, grid))
    lo, hi = v0.values.min(), v0.values.max()
    for snap in evolve_conservation_law(v0, BURGERS, 0.5):
        assert snap.values.min() >= lo and snap.values.max() <= hi


@settings(max_examples=25, deadline=None)
@given(values, values)
def test_l1_contraction(a, b):
    grid = Grid1D(-2, 2, 80)
    v0 = ScalarField(grid, 0.0, _piecewise(a, grid))
    w0 = ScalarField(grid, 0.0, _piecewise(b, grid))
    # contraction is a property of one scheme: both runs share the step sequence
    v = evolve_conservation_law(v0, BURGERS, 0.3, max_speed=2.0)[-1]
    w = evolve_conservation_law(w0, BURGERS, 0.3, max_speed=2.0)[-1]
    assert l1(v.values, w.values, grid.dx) <= l1(v0.values, w0.values, grid.dx) + 1e-12


@pytest.mark.filterwarnings("ignore:overflow")
def test_blowup_names_cell_and_step():
    grid = Grid1D(0, 1, 10)
    v0 = ScalarField(grid, 0.0, np.where(np.arange(10) == 3, 1e200, 0.0))
    with pytest.raises(BlowUpError) as info:
        evolve_conservation_law(v0, BURGERS, 1.0)
    assert info.value.step == 1 and info.value.cell in range(10)


def test_max_speed_must_dominate():
    grid = Grid1D(0, 1, 10)
    with pytest.raises(ValueError, match="max_speed"):
        evolve_conservation_law(ScalarField(grid, 0.0, np.ones(10)), BURGERS, 1.0, max_speed=0.5)


def test_rejects_bad_cfl():
    grid = Grid1D(0, 1, 10)
    with pytest.raises(ValueError):
        evolve_conservation_law(ScalarField(grid, 0.0, np.zeros(10)), BURGERS, 1.0, cfl=0.95)

# }}}


# {{{ entropy pairs and residuals

@pytest.mark.parametrize("flux", [BURGERS, buckley_leverett_flux(), linear_flux(0.5)])
def test_entropy_pairs_are_compatible(flux):
    for k in (0.0, 0.3, 1.0):
        check_entropy_pair(kruzkov_pair(k, flux, 0.01), flux, -0.5, 1.5)
    check_entropy_pair(quadratic_pair(flux), flux, -0.5, 1.5)


def test_burgers_kruzkov_flux_matches_quadrature():
    closed = kruzkov_pair(0.3, BURGERS, 0.02)
    v = np.linspace(-1, 2, 41)
    quad = [integrate.quad(lambda s: closed.eta_prime(s) * s, 0.3, x, points=[0.3])[0] for x in v]
    np.testing.assert_allclose(closed.q(v), quad, atol=1e-10)


def _shock_dissipation(k, phi, w, s=0.5):
    # exact shock (1 | 0) at x = s t: R = int (s [eta] - [q]) phi(s t) w(t) dt
    eta = lambda v: abs(v - k)
    q = lambda v: np.sign(v - k) * (0.5 * v ** 2 - 0.5 * k ** 2)
    rate = s * (eta(0) - eta(1)) - (q(0) - q(1))
    return rate * integrate.quad(lambda t: phi(s * t) * w(t), 0, 1)[0]


def test_entropy_dissipation_at_shock(shock_run):
    phi, w = TestFunction(0.25, 1.0), TestFunction(0.5, 0.45)
    dx = shock_run[0].grid.dx
    r = entropy_residual(shock_run, kruzkov_pair(0.5, BURGERS, dx), phi, w)
    oracle = _shock_dissipation(0.5, phi, w)
    assert oracle > 0.1
    assert r == pytest.approx(oracle, rel=0.05)


@pytest.mark.parametrize("k", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_entropy_inequality_on_shock(shock_run, k):
    grid = shock_run[0].grid
    dt = shock_run[1].time - shock_run[0].time
    tol = 0.25 * (grid.dx + dt)
    w = TestFunction(0.5, 0.45)
    for c in np.linspace(-0.8, 2.8, 7):
        phi = TestFunction(float(c), 1.0)
        assert entropy_residual(shock_run, kruzkov_pair(k, BURGERS, grid.dx), phi, w) >= -tol


def test_residuals_vanish_for_constant_state():
    grid = Grid1D(-2, 2, 100)
    snaps = evolve_conservation_law(ScalarField(grid, 0.0, np.full(100, 0.4)), BURGERS, 1.0)
    phi, w = TestFunction(0.0, 1.0), TestFunction(0.5, 0.4)
    assert abs(weak_form_residual(snaps, BURGERS, phi, w)) < 1e-12
    for k in (0.0, 0.4, 1.0):
        assert abs(entropy_residual(snaps, kruzkov_pair(k, BURGERS, grid.dx), phi, w)) < 1e-12
    zero = evolve_conservation_law(ScalarField(grid, 0.0, np.zeros(100)),
                                   buckley_leverett_flux(), 1.0)
    assert weak_form_residual(zero, buckley_leverett_flux(), phi, w) == 0.0


def test_smooth_data_before_shock_conserves_entropy():
    # v0 = 0.3 bump(0.5, 1.5): max |v0'| < 0.3, no shock before t = 1
    grid = Grid1D(-2, 4, 800)
    v0 = ScalarField.from_function(grid, lambda x: 0.3 * TestFunction(0.5, 1.5)(x))
    snaps = evolve_conservation_law(v0, BURGERS, 1.0)
    dt = snaps[1].time - snaps[0].time
    tol = 0.25 * (grid.dx + dt)
    phi, w = TestFunction(0.8, 1.5), TestFunction(0.5, 0.45)
    for pair in (quadratic_pair(BURGERS), kruzkov_pair(0.15, BURGERS, grid.dx)):
        assert abs(entropy_residual(snaps, pair, phi, w)) <= tol


def test_shock_weak_residual_shrinks_with_dx():
    phi, w = TestFunction(1.0, 1.0), TestFunction(0.5, 0.45)
    res = []
    for n in (200, 400, 800):
        grid = Grid1D(-2, 4, n)
        snaps = evolve_conservation_law(riemann_field(grid, 1, 0), BURGERS, 1.0)
        res.append(abs(weak_form_residual(snaps, BURGERS, phi, w)))
        assert res[-1] <= 0.25 * 2 * grid.dx
    assert res[2] < res[0]


def test_test_function_touching_boundary_is_rejected(shock_run):
    with pytest.raises(ValueError, match="boundary"):
        weak_form_residual(shock_run, BURGERS, TestFunction(-1.5, 0.6), TestFunction(0.5, 0.4))


def test_test_function_derivatives():
    phi = TestFunction(0.3, 0.7)
    x = np.linspace(-0.3, 0.9, 101)
    h = 1e-6
    np.testing.assert_allclose(phi.d1(x), (phi(x + h) - phi(x - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(phi.d2(x), (phi.d1(x + h) - phi.d1(x - h)) / (2 * h), atol=1e-5)

# }}}
