"""Minimum-energy null controls for linear delay equations.

The functional API lives in the submodules; the most used names are
re-exported here.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ControlSignal,
    DelayEquation,
    GridFunction,
    InitialState,
    RetardedSystem,
    Segment,
    convolve,
    grid_function,
    make_grid_function,
    validate_state,
)
from .exceptions import *  # noqa: E402,F401,F403
from .simulation import Trajectory, free_trajectory, null_residual, simulate, simulate_system  # noqa: E402
from .admissible import (  # noqa: E402
    FeedbackTail,
    MomentConstraints,
    assemble_control,
    assemble_system_control,
    feedback_tail,
    moment_constraints,
    project_generator,
    reconstruct_state,
    system_moment_constraints,
)
from .optimal import (  # noqa: E402
    OptimalSolution,
    energy_curve,
    optimal_control,
    optimal_neutral,
    optimal_retarded,
    optimal_simplest,
    optimal_system,
)
from .oracle import QuadraticProgram, constant_search, kkt_solve, volterra_solve  # noqa: E402
from .spectral import (  # noqa: E402
    OrthoWitness,
    Spectrum,
    char_function,
    find_zeros,
    mode_check,
    ortho_complement_fn,
    spectral_controllability,
    to_companion,
    verify_characteristic_membership,
)
from .estimators import MinimumEnergyController  # noqa: E402
