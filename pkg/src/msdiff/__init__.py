"""Multicomponent diffusion on the torus: pointwise force-flux inversion,
finite-volume time integration, entropy functionals with twin-stability
certificates, space-time mollification studies, and certification suites.
"""

from .flux import (
    DeltaOutOfRange,
    DiffusionMatrix,
    InconsistentGradient,
    MsOperator,
    PointComposition,
    PointFlux,
    SingularComposition,
    StabilityConstants,
    admissible_delta_max,
    assemble_operator,
    force_flux_residual,
    solve_fluxes,
    solve_fluxes_batch,
    solve_fluxes_lstsq,
    solve_shifted_fluxes,
    spectral_gap_check,
    stability_constants,
)
from .grid import (
    ConcentrationState,
    FluxField,
    GridMismatch,
    PeriodicGrid,
    divergence,
    gradient,
    integrate,
    l2_norm,
    load_snapshot,
    save_snapshot,
    state_from_csv,
    state_to_csv,
)
from .entropy import (
    DeltaNonpositive,
    EntropyReport,
    ErrorTerms,
    GronwallReport,
    IdentityResidual,
    MeshMismatch,
    RenormFunction,
    csiszar_kullback_check,
    dissipation,
    entropy,
    error_terms,
    gronwall_certificate,
    heat_identity_residual,
    identity_renorm,
    identity_residual,
    identity_series,
    log_shift_renorm,
    quadratic_log_gap,
    regularized_relative_entropy,
    relative_entropy,
    renormalized_entropy,
    renormalized_relative_entropy,
    square_renorm,
    symmetrized_relative_entropy,
    write_reports_csv,
)
from .mollify import (
    DoubledTestFunction,
    EpsilonTooSmallForGrid,
    Mollifier,
    SpaceTimeFunction,
    bump_profile,
    fit_loglog,
    initial_pairing,
    initial_trace_mollification,
    mollify_spacetime,
    plain_pairing,
    rate_study,
)
from .sim import (
    CflViolation,
    Perturbation,
    PositivityFailure,
    Scenario,
    Trajectory,
    TwinResult,
    apply_positivity,
    bump_test_function,
    cell_fluxes,
    exact_binary_mode,
    max_stable_dt,
    run,
    step,
    twin_experiment,
    weak_form_residual,
)
from .config import ParseError, RunConfig, ValidationError, load_config, parse_config
from .suites import SuiteResult, execute

__version__ = "0.1.0"
