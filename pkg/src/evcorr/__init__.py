"""Corrected eddy-viscosity turbulence models on 2D Taylor-Hood elements.

Eddy-viscosity closures augmented by the backscatter-enabling correction
term beta^2 a(w) d/dt(a(w) w), three unconditionally energy-stable time
discretizations with per-step energy audits, ensemble statistics, and
calibration utilities for the correction scale beta.
"""

from .calibration import (
    BetaBracket,
    IntensityReport,
    K41Report,
    PhenomenologyInputs,
    beta_2d,
    beta_bounds,
    beta_default,
    beta_default_value,
    beta_k41_3d,
    intensities,
)
from .closures import ClosureField, ClosureSpec, closure_field, eval_a, eval_nu_t
from .diagnostics import (
    AuditReport,
    DiagnosticsRecord,
    RsReport,
    TimeAverageReport,
    audit_energy_equality,
    compute_budget,
    ensemble_rs,
    time_average,
)
from .ensemble import (
    EnsembleRun,
    EnsembleStats,
    advance_ensemble,
    ensemble_mean,
    init_ensemble,
    perturb_initial,
)
from .errors import (
    CalibrationError,
    ConfigError,
    DivergenceError,
    EvcorrError,
    MeshError,
    MeshParseError,
    MeshValidationError,
    SingularSystemError,
    SolverError,
    StateError,
)
from .harness import RunConfig, build_scenario, load_builtin_mesh, parse_config, run
from .linsolve import SaddleSystem, solve_saddle
from .mesh import Mesh, load_mesh, max_edge, min_edge, unit_square_mesh, write_mesh
from .spaces import (
    FeFunction,
    TaylorHood,
    assemble_convection_skew,
    assemble_div,
    assemble_mass,
    assemble_total_stiffness,
    assemble_weighted_mass,
    interpolate_velocity,
    lebesgue_norms,
    pressure_function,
    velocity_function,
)
from .stepping import (
    OdeResult,
    SteppingConfig,
    StepperState,
    initial_state,
    method1_step,
    method2_step,
    method3_step,
    ode_integrate,
    ode_method2_step,
    ode_step,
    startup_method3,
    step,
)

__version__ = "0.1.0"
