"""Point-mass acrobot dynamics, simulation and swing-up trajectory optimization."""

from .dynamics import (
    LinkChainParams,
    ManipulatorTerms,
    MassMatrixOde,
    State,
    christoffel_coriolis,
    kinetic_energy,
    manipulator_terms,
    manipulator_terms_2link,
    manipulator_terms_3link,
    potential_energy,
    state_derivative,
    total_energy,
)
from .config import RunConfig, default_config, load_config, parse_config
from .errors import (
    AcrobotError,
    ConfigError,
    DivergenceError,
    EvaluationError,
    ModelMismatchError,
    SingularMatrixError,
)
from .fileio import read_trajectory, write_trajectory
from .integrator import (
    RolloutConfig,
    Trajectory,
    energy_drift,
    lu_solve,
    rk4_step,
    rollout_with_controls,
    simulate,
)
from .solver import SolveReport, SolverOptions, augmented_objective, project_to_box, solve
from .transcription import (
    NlpProblem,
    OcpSpec,
    boundary_constraints,
    build_nlp,
    collocation_jacobian,
    constraint_jacobian_fd,
    defect_hessian,
    defects,
    effort_cost,
    effort_cost_gradient,
    effort_cost_hessian,
    pack,
    resample_guess,
    unpack,
)

from .render import joint_positions, render_svg

__version__ = "0.1.0"
