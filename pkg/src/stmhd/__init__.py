"""Space-time block-preconditioned solver for 2D incompressible resistive MHD."""

from .errors import (
    BreakdownError,
    ConfigurationError,
    ConvergenceError,
    PreconditionerError,
    SingularMatrixError,
    StmhdError,
)
from .fem import BCSpec, FESpace, apply_bcs, dirichlet, natural, slip
from .linalg import BlockVector, FieldLayout, GmresConfig, LUFactor, gmres, lu_factor
from .mesh import Mesh, Side, build_rect_mesh
from .precond import SpaceTimePreconditioner, Variant, compute_alfven_scaling
from .problems import (
    Discretization,
    ProblemSpec,
    by_name,
    discretize,
    initial_state,
    island_coalescence,
    tearing_mode,
)
from .solver import (
    NewtonConfig,
    SolveStats,
    compute_overhead_ratios,
    solve_all_at_once,
    solve_sequential,
)
from .spacetime import (
    SpaceTimeJacobian,
    SpaceTimeState,
    apply_jacobian,
    assemble_jacobian,
    residual,
)

__version__ = "0.1.0"
