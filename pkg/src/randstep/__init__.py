"""Randomized backward Euler time stepping for ODEs and parabolic PDEs
with time-irregular right-hand sides, plus a Monte Carlo convergence
harness."""

from .rand_nodes import (
    DEFAULT_MASTER_SEED,
    NodeStream,
    SeedSpec,
    TimeGrid,
    make_stream,
    next_tau,
    node,
)
from .ode_solver import (
    NewtonConfig,
    NonConvergence,
    OdeProblem,
    StepRestrictionViolated,
    StepScheme,
    Trajectory,
    conditional_mean_residual,
    explicit_step,
    implicit_step,
    local_residual,
    solve,
)
from .fem1d import (
    DiscreteField,
    Mesh,
    TriDiag,
    assemble_mass,
    assemble_nonlinearity,
    assemble_nonlinearity_jacobian,
    assemble_stiffness,
    h1_seminorm_error,
    l2_error,
    l2_project,
    load_vector,
    tridiag_solve,
)
from .pde_solver import (
    EnergyReport,
    PdeProblem,
    PdeTrajectory,
    energy_bound_check,
    pde_solve,
    pde_step,
)
from .problems import (
    AmplitudeMode,
    ProtheroRobinsonSpec,
    SawtoothSpec,
    TruncatedPowerSpec,
    b_trunc,
    b_trunc_prime,
    pde_exact,
    pde_forcing,
    pde_initial,
    pde_w,
    pde_wdot,
    pr_rhs,
    prothero_robinson_problem,
    sawtooth_g,
    sawtooth_gdot,
    semilinear_heat_problem,
    time_integral_problem,
)
from .harness import (
    ErrorMode,
    ErrorRow,
    ErrorTable,
    ExperimentSpec,
    RateFit,
    fit_rate,
    reproduce_fig1_left,
    reproduce_fig1_right,
    reproduce_fig2,
    residual_study,
    run_mc,
)
from .report import emit_svg_loglog

__version__ = "0.1.0"
