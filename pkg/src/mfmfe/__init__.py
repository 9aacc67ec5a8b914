"""Multipoint flux mixed finite elements for slightly compressible Darcy flow."""

__version__ = "0.1.0"

from .mesh import (
    BoundaryKind,
    CellKind,
    Mesh,
    MeshFamilyParams,
    RefMap,
    generate_mesh,
    h2_parallelogram_defect,
    jacobian,
    map_to_physical,
)
from .spaces import (
    BasisSet,
    DofMap,
    PressureField,
    VelocityField,
    build_dof_map,
    interpolate_velocity,
    piola_transform,
    project_pressure,
    reference_basis,
)
from .quadrature import (
    LocalVertexBlock,
    QuadratureVariant,
    local_velocity_blocks,
    quadrature_bilinear_form,
)
from .physics import (
    ConstantTensor,
    Eos,
    ManufacturedTensor,
    PiecewiseTensor,
    ProblemSpec,
    ScalarGrid,
    density,
    density_derivative,
    fivespot_boundary_classifier,
    fivespot_problem,
    fivespot_source,
    manufactured_problem,
    manufactured_rhs,
    manufactured_solution,
)
from .random_field import FieldSample, MaternParams, matern_cov, sample_log_normal_field
from .assembly import (
    Discretization,
    JacobianBlocks,
    ResidualVector,
    assemble_jacobian,
    assemble_residual,
)
from .solver import (
    MarchResult,
    NewtonStats,
    SchurSystem,
    SolverConfig,
    eliminate_velocity,
    newton_solve_step,
    solve_schur,
    time_march,
)
from .verification import (
    ErrorReport,
    RunErrors,
    StudySpec,
    compute_errors,
    convergence_study,
    convergence_rates,
    diagonal_asymmetry,
    fivespot_run,
)
