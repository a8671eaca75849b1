"""Mixed finite element solver for parabolic p-Laplacian equations with memory."""
from .assembly import (BandedSpdMatrix, assemble_load, assemble_mass, frozen_stiffness,
                       plap_residual, solve_spd)
from .errors import (ConfigError, InadmissibleStep, InvalidArgument, InvalidInput, MissingHistory,
                     NonConvergence, NotPositiveDefinite, PlapError, UnsupportedExponent)
from .memory import History, Kernel, QuadWeights, eval_If, eval_Qg, eval_Qgprime, quad_weights
from .mesh_basis import (DofMap, Mesh1D, QuadratureRule, ReferenceElement, build_uniform_mesh,
                         evaluate, gauss_rule, interpolate, l2_error, l2_norm)
from .stepper import (CrankNicolson, ProblemSpec, SolverOptions, StepDiagnostics,
                      check_delta_admissible, run, solve_Y, step)

__version__ = "0.1.0"
