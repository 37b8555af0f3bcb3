"""Entropy solutions, mollification, stochastic characteristics and
density transport for the noisy pressureless transport system

    d_t v + d_x F(v) = 0,
    d_t u + d_x(v u) + d_x u dB/dt = 0.
"""

from .conservation import (
    BlowUpError, EntropyPair, FluxModel, Grid1D, ScalarField, TestFunction,
    buckley_leverett_flux, burgers_flux, check_entropy_pair, entropy_residual,
    evolve_conservation_law, flux_from_label, godunov_flux, kruzkov_pair, linear_flux,
    quadratic_pair, riemann_exact_burgers, weak_form_residual,
)
from .density import (
    CFLViolation, DensityEnsemble, ensemble_second_moment, evolve_continuity_fv,
    evolve_continuity_fv_ensemble, lagrangian_second_moment,
    lagrangian_second_moment_samples, pushforward_density, spde_weak_residual,
)
from .flow import (
    BrownianPath, Drift, FlowExitError, FlowRealization, NonMonotoneFlowError,
    invert_flow, jacobian_exponential, path_seed, sample_brownian, sample_ensemble,
    solve_flow_ensemble, solve_flow_sde, stochastic_exponential_mean,
    stochastic_exponential_samples, zero_path,
)
from .mollification import (
    DecayTable, Mollifier, PrimitiveField, commutator, commutator_l2_decay, mollify,
    mollify_many, primitive,
)
from .runner import RunReport, StageError, run_scenario
from .scenarios import (
    PRESETS, InitialData, ScenarioError, ScenarioSpec, list_scenarios, load_scenario,
    parse_scenario,
)

__version__ = "0.1.0"
