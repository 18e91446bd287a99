"""Finite element solver and Monte Carlo harness for a nonlinear stochastic
wave equation with functional multiplicative noise."""

from .mesh import Mesh, build_interval_mesh, build_unit_square_tri_mesh, refine_uniform
from .fem import (
    FeFunction,
    FeSpace,
    assemble_mass,
    assemble_stiffness,
    assemble_pointwise_load,
    discrete_laplacian,
    evaluate,
    interpolate,
    l2_project,
    norm_l2,
    norm_lp,
    seminorm_h1,
    transfer_to_fine,
)
from .drift import FULLY_IMPLICIT, MODIFIED_CN, PolynomialDrift
from .diffusion import Diffusion
from .noise import BrownianPath, coarsen, sample_path
from .stepper import (
    NewtonDivergedError,
    SchemeConfig,
    State,
    Trajectory,
    WaveStepper,
    hamiltonian,
    initial_state,
)
from .ensemble import EnsembleStats, run_ensemble, subset_fraction
from .metrics import (
    ErrorTable,
    analytic_error_table,
    convergence_table,
    error_norms,
    sup_rms_errors,
)
from .experiments import (
    ExperimentConfig,
    PRESETS,
    preset_config,
    run_experiment,
)

__version__ = "0.1.0"
