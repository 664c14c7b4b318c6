"""Hybrid particle/fluid solvers for the 1-D BGK equation."""
from .core import (
    Boundary,
    ConservedMoments,
    Grid1D,
    InvalidStateError,
    KnudsenConfig,
    MaxwellianParams,
    cell_averages,
    conserved_from_primitives,
    eval_maxwellian,
    moments_of_sample_set,
    primitives_from_conserved,
)
from .dvm import KineticField, VelocityGrid, dvm_moments, dvm_step, solve_dvm
from .euler import (
    FLUID_SOLVERS,
    LaxFriedrichsSolver,
    MusclRelaxedSolver,
    RelaxedSchemeConfig,
    SolverFailure,
    boundary_fill,
    euler_max_dt,
    euler_step,
    get_fluid_solver,
    solve_euler,
)
from .hybrid import (
    BetaEstimate,
    FsiConfig,
    HybridState,
    compute_lambda,
    estimate_beta_c_bound,
    estimate_beta_c_reconstruction,
    fsi1_step,
    fsi_step,
    hybrid_dt,
    hybrid_step,
    initialize_hybrid,
    stable_dt,
)
from .particles import (
    CellIndex,
    McmState,
    ParticleBuffer,
    apply_boundaries,
    init_particles,
    mcm_step,
    relaxation_discard,
    transport_particles,
)
from .sampling import (
    RatioMinResult,
    RngStream,
    accept_reject_residual,
    iround,
    min_ratio_maxwellians,
    moment_match,
    sample_maxwellian,
)
from .harness.scenarios import build_scenario

__version__ = "0.1.0"
